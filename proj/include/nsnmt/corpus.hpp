#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nsnmt/errors.hpp"
#include "nsnmt/tensor.hpp"

// Incomplete multilingual corpus model. One UTF-8 text file per language per
// split, line-aligned across languages; an empty line marks a missing
// translation. Corpora are assumed pre-tokenized, so tokenization is
// whitespace splitting.

namespace nsnmt {

using Sentence = std::vector<std::string>;
using OptSentence = std::optional<Sentence>;

inline Sentence tokenize(const std::string& line) {
  Sentence out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline std::string join_tokens(const Sentence& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

struct CorpusRow {
  std::vector<OptSentence> cells;  // aligned with MultiCorpus::languages
};

// Rows are immutable after load; transforms return fresh copies.
struct MultiCorpus {
  std::vector<std::string> languages;
  std::vector<CorpusRow> rows;

  std::size_t lang_index(const std::string& tag) const {
    for (std::size_t i = 0; i < languages.size(); ++i) {
      if (languages[i] == tag) return i;
    }
    throw UnknownLanguageError("language '" + tag + "' not in corpus");
  }

  const OptSentence& cell(std::size_t row, const std::string& tag) const {
    return rows.at(row).cells[lang_index(tag)];
  }
};

inline MultiCorpus load_corpus(const std::vector<std::pair<std::string, std::string>>& lang_paths) {
  if (lang_paths.empty()) throw ContractError("load_corpus: no files given");
  MultiCorpus corpus;
  std::vector<std::vector<OptSentence>> columns;
  std::vector<std::size_t> counts;
  for (const auto& [lang, path] : lang_paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file '" + path + "'");
    std::vector<OptSentence> col;
    std::string line;
    while (std::getline(in, line)) {
      Sentence toks = tokenize(line);
      if (toks.empty()) {
        col.emplace_back(std::nullopt);
      } else {
        col.emplace_back(std::move(toks));
      }
    }
    corpus.languages.push_back(lang);
    counts.push_back(col.size());
    columns.push_back(std::move(col));
  }
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] != counts[0]) {
      throw AlignmentError("line count mismatch: '" + lang_paths[0].second + "' has " +
                           std::to_string(counts[0]) + " lines but '" + lang_paths[i].second + "' has " +
                           std::to_string(counts[i]));
    }
  }
  corpus.rows.resize(counts.empty() ? 0 : counts[0]);
  for (std::size_t r = 0; r < corpus.rows.size(); ++r) {
    corpus.rows[r].cells.resize(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) {
      corpus.rows[r].cells[c] = std::move(columns[c][r]);
    }
  }
  return corpus;
}

// Convenience wrappers for the canonical split layout `dir/<split>.<lang>`.
inline std::string split_path(const std::string& dir, const std::string& split, const std::string& lang) {
  return (std::filesystem::path(dir) / (split + "." + lang)).string();
}

inline MultiCorpus load_split(const std::string& dir, const std::string& split,
                              const std::vector<std::string>& languages) {
  std::vector<std::pair<std::string, std::string>> lang_paths;
  for (const auto& lang : languages) lang_paths.emplace_back(lang, split_path(dir, split, lang));
  return load_corpus(lang_paths);
}

inline void save_split(const MultiCorpus& corpus, const std::string& dir, const std::string& split) {
  std::filesystem::create_directories(dir);
  for (std::size_t c = 0; c < corpus.languages.size(); ++c) {
    const std::string path = split_path(dir, split, corpus.languages[c]);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write corpus file '" + path + "'");
    for (const CorpusRow& row : corpus.rows) {
      if (row.cells[c].has_value()) out << join_tokens(*row.cells[c]);
      out << '\n';
    }
  }
}

// ---- vocabulary -------------------------------------------------------------

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNull = 4;
  static constexpr std::size_t kReservedCount = 5;

  static const std::array<std::string, kReservedCount>& reserved() {
    static const std::array<std::string, kReservedCount> r = {"<PAD>", "<BOS>", "<EOS>", "<UNK>",
                                                              "<NULL>"};
    return r;
  }

  Vocabulary() {
    for (const std::string& tok : reserved()) append(tok);
  }

  // Appends a non-reserved token; ids are dense and assigned in call order.
  int add(const std::string& tok) {
    if (index_.count(tok)) throw ContractError("vocabulary already contains '" + tok + "'");
    return append(tok);
  }

  std::size_t size() const { return tokens_.size(); }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw IndexError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                       std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  // Surface-form lookup. Out-of-vocabulary tokens and reserved surface forms
  // appearing in raw text both map to <UNK>; reserved ids are only ever
  // produced structurally (framing, padding, <NULL> substitution).
  int encode(const std::string& tok) const {
    auto it = index_.find(tok);
    if (it == index_.end() || it->second < static_cast<int>(kReservedCount)) return kUnk;
    return it->second;
  }

  // [<BOS>, ids..., <EOS>]
  std::vector<int> encode_frame(const Sentence& toks) const {
    std::vector<int> out;
    out.reserve(toks.size() + 2);
    out.push_back(kBos);
    for (const std::string& t : toks) out.push_back(encode(t));
    out.push_back(kEos);
    return out;
  }

  Sentence decode(const std::vector<int>& ids) const {
    Sentence out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(token(id));
    return out;
  }

 private:
  int append(const std::string& tok) {
    tokens_.push_back(tok);
    index_[tok] = static_cast<int>(tokens_.size()) - 1;
    return static_cast<int>(tokens_.size()) - 1;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Frequency-ranked vocabulary over one language column. Ties break by first
// occurrence order; reserved surface forms never enter the count.
inline Vocabulary build_vocab(const MultiCorpus& corpus, const std::string& language, std::size_t cap) {
  if (cap < 1) throw ContractError("build_vocab: cap must be >= 1");
  const std::size_t col = corpus.lang_index(language);
  struct Stat {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::vector<const std::string*> order;  // first-occurrence order
  std::size_t seq = 0;
  const auto& reserved = Vocabulary::reserved();
  for (const CorpusRow& row : corpus.rows) {
    if (!row.cells[col].has_value()) continue;
    for (const std::string& tok : *row.cells[col]) {
      if (std::find(reserved.begin(), reserved.end(), tok) != reserved.end()) continue;
      auto [it, fresh] = stats.try_emplace(tok);
      if (fresh) {
        it->second.first = seq;
        order.push_back(&it->first);
      }
      it->second.count += 1;
      ++seq;
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](const std::string* a, const std::string* b) {
    const Stat& sa = stats[*a];
    const Stat& sb = stats[*b];
    if (sa.count != sb.count) return sa.count > sb.count;
    return sa.first < sb.first;
  });
  Vocabulary vocab;
  for (std::size_t i = 0; i < order.size() && i < cap; ++i) vocab.add(*order[i]);
  return vocab;
}

// Vocabulary file: one token per line, line number - 1 = id, reserved first.
inline void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
  for (std::size_t i = 0; i < vocab.size(); ++i) out << vocab.token(static_cast<int>(i)) << '\n';
}

inline Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  const auto& reserved = Vocabulary::reserved();
  if (lines.size() < Vocabulary::kReservedCount) {
    throw ConfigError("vocabulary file '" + path + "' is missing the reserved tokens");
  }
  for (std::size_t i = 0; i < Vocabulary::kReservedCount; ++i) {
    if (lines[i] != reserved[i]) {
      throw ConfigError("vocabulary file '" + path + "' line " + std::to_string(i + 1) + " must be " +
                        reserved[i] + ", got '" + lines[i] + "'");
    }
  }
  Vocabulary vocab;
  for (std::size_t i = Vocabulary::kReservedCount; i < lines.size(); ++i) {
    if (lines[i].empty()) throw ConfigError("vocabulary file '" + path + "' has an empty token line");
    vocab.add(lines[i]);
  }
  return vocab;
}

// ---- transforms -------------------------------------------------------------

// Drops a row when ANY present sentence exceeds max_len tokens; missing cells
// impose no constraint. Idempotent.
inline MultiCorpus filter_by_length(const MultiCorpus& corpus, std::size_t max_len) {
  if (max_len < 1) throw ContractError("filter_by_length: max_len must be >= 1");
  MultiCorpus out;
  out.languages = corpus.languages;
  for (const CorpusRow& row : corpus.rows) {
    bool keep = true;
    for (const OptSentence& cell : row.cells) {
      if (cell.has_value() && cell->size() > max_len) {
        keep = false;
        break;
      }
    }
    if (keep) out.rows.push_back(row);
  }
  return out;
}

// ---- excision ---------------------------------------------------------------

struct ExcisionDirective {
  std::size_t start_row = 0;  // 1-based inclusive
  std::size_t end_row = 0;    // 1-based inclusive
  std::string language;
};

struct ExcisionPlan {
  std::vector<ExcisionDirective> directives;
};

// Plan file: one directive per line, `start_row end_row language`, 1-based
// inclusive rows. Blank lines and lines starting with '#' are skipped.
inline ExcisionPlan parse_plan(std::istream& in, const std::string& origin) {
  ExcisionPlan plan;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first) || first[0] == '#') continue;
    ExcisionDirective d;
    char* endp = nullptr;
    d.start_row = std::strtoull(first.c_str(), &endp, 10);
    std::string rest;
    if (*endp != '\0' || !(ss >> d.end_row >> d.language) || (ss >> rest)) {
      throw PlanError(origin + " line " + std::to_string(lineno) +
                      ": expected 'start_row end_row language'");
    }
    if (d.start_row < 1 || d.end_row < d.start_row) {
      throw PlanError(origin + " line " + std::to_string(lineno) + ": bad interval " +
                      std::to_string(d.start_row) + "-" + std::to_string(d.end_row));
    }
    plan.directives.push_back(std::move(d));
  }
  return plan;
}

inline ExcisionPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open plan file '" + path + "'");
  return parse_plan(in, path);
}

inline void save_plan(const ExcisionPlan& plan, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write plan file '" + path + "'");
  for (const ExcisionDirective& d : plan.directives) {
    out << d.start_row << ' ' << d.end_row << ' ' << d.language << '\n';
  }
}

// Turns targeted cells missing. Row count and every non-targeted cell are
// untouched. `protected_language`, when non-empty, rejects directives that
// would delete it (the training target is not meant to be excised).
inline MultiCorpus excise(const MultiCorpus& corpus, const ExcisionPlan& plan,
                          const std::string& protected_language = "") {
  MultiCorpus out = corpus;
  for (const ExcisionDirective& d : plan.directives) {
    if (!protected_language.empty() && d.language == protected_language) {
      throw PlanError("directive " + std::to_string(d.start_row) + "-" + std::to_string(d.end_row) + " " +
                      d.language + " deletes the protected language");
    }
    const std::size_t col = out.lang_index(d.language);
    if (d.end_row > out.rows.size()) {
      throw PlanError("directive " + std::to_string(d.start_row) + "-" + std::to_string(d.end_row) + " " +
                      d.language + " exceeds corpus of " + std::to_string(out.rows.size()) + " rows");
    }
    for (std::size_t r = d.start_row - 1; r < d.end_row; ++r) {
      out.rows[r].cells[col] = std::nullopt;
    }
  }
  return out;
}

// ---- numericalized batches ---------------------------------------------------

enum class BatchMode {
  kExpert,       // single-source task; rows missing that source are skipped
  kMultiSource,  // rows with >= 1 source kept; missing sources become <NULL>
};

struct TaskSpec {
  std::vector<std::string> sources;
  std::string target;
};

// One sentence pair/tuple, id-framed with <BOS>/<EOS>. A missing source under
// kMultiSource is the three-token sequence [<BOS>, <NULL>, <EOS>].
struct Example {
  std::vector<std::vector<int>> sources;
  std::vector<int> target;
  std::size_t row = 0;  // original corpus row
};

struct Padded {
  std::vector<std::vector<int>> ids;     // batch x width, <PAD>-filled
  std::vector<std::vector<double>> mask;  // 1.0 real token, 0.0 padding
  std::size_t width = 0;
};

struct Batch {
  std::vector<Example> examples;
  std::vector<Padded> source_pads;  // aligned with TaskSpec::sources
  Padded target_pad;
};

inline Padded pad_block(const std::vector<const std::vector<int>*>& seqs) {
  Padded p;
  for (const auto* s : seqs) p.width = std::max(p.width, s->size());
  for (const auto* s : seqs) {
    std::vector<int> ids(p.width, Vocabulary::kPad);
    std::vector<double> mask(p.width, 0.0);
    for (std::size_t i = 0; i < s->size(); ++i) {
      ids[i] = (*s)[i];
      mask[i] = 1.0;
    }
    p.ids.push_back(std::move(ids));
    p.mask.push_back(std::move(mask));
  }
  return p;
}

// Rows usable for a task: target present always required; kExpert additionally
// requires the (single) source present, kMultiSource requires any source.
inline std::vector<std::size_t> usable_rows(const MultiCorpus& corpus, const TaskSpec& task,
                                            BatchMode mode) {
  if (task.sources.empty()) throw ContractError("task has no source languages");
  if (mode == BatchMode::kExpert && task.sources.size() != 1) {
    throw ContractError("expert batching expects exactly one source language");
  }
  const std::size_t tgt = corpus.lang_index(task.target);
  std::vector<std::size_t> cols;
  for (const auto& s : task.sources) cols.push_back(corpus.lang_index(s));
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < corpus.rows.size(); ++r) {
    const CorpusRow& row = corpus.rows[r];
    if (!row.cells[tgt].has_value()) continue;
    if (mode == BatchMode::kExpert) {
      if (row.cells[cols[0]].has_value()) out.push_back(r);
    } else {
      bool any = false;
      for (std::size_t c : cols) any = any || row.cells[c].has_value();
      if (any) out.push_back(r);
    }
  }
  return out;
}

inline Example numericalize_row(const MultiCorpus& corpus, std::size_t r, const TaskSpec& task,
                                const std::map<std::string, Vocabulary>& vocabs) {
  auto vocab_of = [&](const std::string& lang) -> const Vocabulary& {
    auto it = vocabs.find(lang);
    if (it == vocabs.end()) throw ConfigError("no vocabulary for language '" + lang + "'");
    return it->second;
  };
  const CorpusRow& row = corpus.rows[r];
  Example ex;
  ex.row = r;
  for (const std::string& lang : task.sources) {
    const OptSentence& cell = row.cells[corpus.lang_index(lang)];
    if (cell.has_value()) {
      ex.sources.push_back(vocab_of(lang).encode_frame(*cell));
    } else {
      ex.sources.push_back({Vocabulary::kBos, Vocabulary::kNull, Vocabulary::kEos});
    }
  }
  const OptSentence& tcell = row.cells[corpus.lang_index(task.target)];
  if (!tcell.has_value()) throw ContractError("numericalize_row: target missing in row");
  ex.target = vocab_of(task.target).encode_frame(*tcell);
  return ex;
}

// Deterministic given (corpus, task, seed): rows are shuffled by the seed
// (or kept in corpus order when shuffle=false) then chunked.
inline std::vector<Batch> batches(const MultiCorpus& corpus, const TaskSpec& task,
                                  const std::map<std::string, Vocabulary>& vocabs, std::size_t batch_size,
                                  BatchMode mode, std::uint64_t seed, bool shuffle = true) {
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> rows = usable_rows(corpus, task, mode);
  if (rows.empty()) {
    throw EmptyTaskError("no usable rows for task with target '" + task.target + "'");
  }
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(rows);
  }
  std::vector<Batch> out;
  for (std::size_t off = 0; off < rows.size(); off += batch_size) {
    Batch b;
    const std::size_t n = std::min(batch_size, rows.size() - off);
    for (std::size_t i = 0; i < n; ++i) {
      b.examples.push_back(numericalize_row(corpus, rows[off + i], task, vocabs));
    }
    for (std::size_t s = 0; s < task.sources.size(); ++s) {
      std::vector<const std::vector<int>*> seqs;
      for (const Example& ex : b.examples) seqs.push_back(&ex.sources[s]);
      b.source_pads.push_back(pad_block(seqs));
    }
    std::vector<const std::vector<int>*> tseqs;
    for (const Example& ex : b.examples) tseqs.push_back(&ex.target);
    b.target_pad = pad_block(tseqs);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace nsnmt
