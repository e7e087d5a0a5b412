#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsnmt/checkpoint.hpp"
#include "nsnmt/corpus.hpp"
#include "nsnmt/decode.hpp"
#include "nsnmt/errors.hpp"
#include "nsnmt/evaluate.hpp"
#include "nsnmt/moe.hpp"
#include "nsnmt/multiencoder.hpp"
#include "nsnmt/seq2seq.hpp"
#include "nsnmt/trainer.hpp"

// Command-line surface: prepare, excise, train, translate, evaluate,
// significance, report. Everything is callable in-process through run_cli;
// the binary is a thin wrapper. Exit codes: 0 success, 1 runtime failure,
// 2 usage/validation failure.

namespace nsnmt {

namespace cli_detail {

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// "lang=path" or a bare path (empty lang).
inline std::pair<std::string, std::string> split_lang_path(const std::string& s) {
  const auto pos = s.find('=');
  if (pos == std::string::npos) return {"", s};
  return {s.substr(0, pos), s.substr(pos + 1)};
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const std::string& l : lines) out << l << '\n';
}

inline nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad JSON in '" + path + "': " + e.what());
  }
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

// All usable rows of a task in corpus order, numericalized.
inline std::vector<Example> all_examples(const MultiCorpus& corpus, const TaskSpec& task,
                                         const std::map<std::string, Vocabulary>& vocabs, BatchMode mode) {
  std::vector<Example> out;
  for (std::size_t r : usable_rows(corpus, task, mode)) {
    out.push_back(numericalize_row(corpus, r, task, vocabs));
  }
  return out;
}

inline std::size_t present_count(const MultiCorpus& corpus, const std::string& lang) {
  const std::size_t col = corpus.lang_index(lang);
  std::size_t n = 0;
  for (const CorpusRow& row : corpus.rows) n += row.cells[col].has_value() ? 1 : 0;
  return n;
}

struct HistoryPaths {
  std::string text;
  std::string json;
};

inline void write_history(const TrainResult& result, const HistoryPaths& paths) {
  if (!paths.text.empty()) {
    std::filesystem::path p(paths.text);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(paths.text, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + paths.text + "'");
    out << format_history(result);
  }
  if (!paths.json.empty()) {
    nlohmann::json j;
    j["best_epoch"] = result.best_epoch;
    j["best_valid_logppl"] = result.best_valid;
    j["epochs_run"] = result.epochs_run;
    j["epochs"] = nlohmann::json::array();
    for (const EpochStat& s : result.history) {
      j["epochs"].push_back({{"epoch", s.epoch},
                             {"train_loss", s.train_loss},
                             {"valid_logppl", s.valid_logppl},
                             {"improved", s.improved}});
    }
    write_json(paths.json, j);
  }
}

inline std::string bleu_line(const BleuReport& r) {
  std::string out = "BLEU = " + fmt("%.2f", r.score);
  out += "  (p1 " + fmt("%.3f", r.precisions[0]) + ", p2 " + fmt("%.3f", r.precisions[1]) + ", p3 " +
         fmt("%.3f", r.precisions[2]) + ", p4 " + fmt("%.3f", r.precisions[3]) + ", BP " +
         fmt("%.3f", r.brevity_penalty) + ", hyp " + std::to_string(r.hyp_len) + ", ref " +
         std::to_string(r.ref_len) + ")";
  return out;
}

inline nlohmann::json bleu_json(const BleuReport& r) {
  return {{"bleu", r.score},
          {"precisions", {r.precisions[0], r.precisions[1], r.precisions[2], r.precisions[3]}},
          {"brevity_penalty", r.brevity_penalty},
          {"hyp_len", r.hyp_len},
          {"ref_len", r.ref_len}};
}

inline std::vector<Sentence> tokenize_lines(const std::vector<std::string>& lines) {
  std::vector<Sentence> out;
  out.reserve(lines.size());
  for (const std::string& l : lines) out.push_back(tokenize(l));
  return out;
}

// Per-row completeness from source files: true when every column is present.
// Columns absent entirely (no file) count as missing everywhere.
inline std::vector<bool> complete_mask_from_sources(const std::vector<std::vector<std::string>>& src_lines,
                                                    std::size_t rows, std::size_t total_columns) {
  std::vector<bool> mask(rows, src_lines.size() == total_columns);
  for (const auto& col : src_lines) {
    if (col.size() != rows) {
      throw AlignmentError("source file has " + std::to_string(col.size()) + " lines, expected " +
                           std::to_string(rows));
    }
    for (std::size_t i = 0; i < rows; ++i) {
      if (tokenize(col[i]).empty()) mask[i] = false;
    }
  }
  return mask;
}

}  // namespace cli_detail

// ---- prepare --------------------------------------------------------------------

inline int cmd_prepare(const std::string& data_dir, const std::string& out_dir,
                       const std::vector<std::string>& langs, std::size_t max_len, std::size_t vocab_cap,
                       std::ostream& out) {
  if (langs.size() < 2) throw ConfigError("prepare: need at least a source and a target language");
  MultiCorpus train = load_split(data_dir, "train", langs);
  MultiCorpus valid = load_split(data_dir, "valid", langs);
  MultiCorpus test = load_split(data_dir, "test", langs);

  MultiCorpus train_filtered = filter_by_length(train, max_len);
  save_split(train_filtered, out_dir, "train");
  save_split(valid, out_dir, "valid");
  save_split(test, out_dir, "test");

  out << "split rows: train " << train_filtered.rows.size() << " (of " << train.rows.size()
      << " before length filter <= " << max_len << "), valid " << valid.rows.size() << ", test "
      << test.rows.size() << "\n";
  for (const std::string& lang : langs) {
    Vocabulary vocab = build_vocab(train_filtered, lang, vocab_cap);
    const std::string vpath = (std::filesystem::path(out_dir) / ("vocab." + lang)).string();
    save_vocab(vocab, vpath);
    out << lang << ": vocab " << vocab.size() << " (cap " << vocab_cap << " + reserved), train rows present "
        << cli_detail::present_count(train_filtered, lang) << "\n";
  }
  return 0;
}

// ---- excise ---------------------------------------------------------------------

inline int cmd_excise(const std::string& data_dir, const std::string& plan_file, const std::string& out_dir,
                      const std::vector<std::string>& langs, const std::string& split,
                      const std::string& protect, std::ostream& out) {
  const ExcisionPlan plan = load_plan(plan_file);
  for (const std::string& s : {std::string("train"), std::string("valid"), std::string("test")}) {
    MultiCorpus corpus = load_split(data_dir, s, langs);
    if (s == split) corpus = excise(corpus, plan, protect);
    save_split(corpus, out_dir, s);
    if (s == split) {
      out << "available rows after excision (" << s << ", " << corpus.rows.size() << " total):\n";
      for (const std::string& lang : langs) {
        out << "  " << lang << ": " << cli_detail::present_count(corpus, lang) << "\n";
      }
    }
  }
  return 0;
}

// ---- train ----------------------------------------------------------------------

namespace cli_detail {

struct TrainSetup {
  std::string model_kind;
  std::string data_dir, vocab_dir, out_path;
  std::vector<std::string> sources;
  std::string target;
  Hyper hyper;
  MoeHyper moe_hyper;
  std::vector<ManifestEntry> experts;
  std::string manifest_path;
  TrainConfig train_cfg;
  HistoryPaths history;
};

inline TrainSetup parse_train_config(const nlohmann::json& j, std::optional<std::uint64_t> seed_override) {
  TrainSetup s;
  s.model_kind = j.value("model", "");
  if (s.model_kind != "one2one" && s.model_kind != "multienc" && s.model_kind != "gating") {
    throw ConfigError("config: model must be one2one, multienc, or gating");
  }
  if (!j.contains("data_dir") || !j.contains("out")) {
    throw ConfigError("config: data_dir and out are required");
  }
  s.data_dir = j.at("data_dir").get<std::string>();
  s.vocab_dir = j.value("vocab_dir", s.data_dir);
  s.out_path = j.at("out").get<std::string>();
  if (!j.contains("target")) throw ConfigError("config: target language is required");
  s.target = j.at("target").get<std::string>();

  if (s.model_kind == "gating") {
    if (!j.contains("experts") || !j.at("experts").is_array() || j.at("experts").size() < 2) {
      throw ConfigError("config: gating needs an experts array with at least 2 entries");
    }
    for (const auto& e : j.at("experts")) {
      s.experts.push_back({e.at("lang").get<std::string>(), e.at("checkpoint").get<std::string>()});
      s.sources.push_back(s.experts.back().lang);
    }
    s.manifest_path = j.value("manifest", s.out_path + ".manifest.json");
  } else {
    if (!j.contains("sources") || !j.at("sources").is_array() || j.at("sources").empty()) {
      throw ConfigError("config: sources array is required");
    }
    s.sources = j.at("sources").get<std::vector<std::string>>();
    if (s.model_kind == "one2one" && s.sources.size() != 1) {
      throw ConfigError("config: one2one takes exactly one source language");
    }
    if (s.model_kind == "multienc" && s.sources.size() < 2) {
      throw ConfigError("config: multienc needs at least 2 source languages");
    }
  }

  s.hyper.hidden_dim = j.value("hidden_dim", std::size_t{512});
  s.hyper.embed_dim = j.value("embed_dim", std::size_t{512});
  s.hyper.vocab_cap = j.value("vocab_cap", std::size_t{30000});
  s.moe_hyper.gate_hidden = j.value("gate_hidden", std::size_t{256});
  const std::string gi = j.value("gate_input", "decoder_input");
  if (gi == "embedding") {
    s.moe_hyper.gate_input = GateInput::kEmbedding;
  } else if (gi == "decoder_input") {
    s.moe_hyper.gate_input = GateInput::kDecoderInput;
  } else {
    throw ConfigError("config: gate_input must be embedding or decoder_input");
  }

  s.train_cfg.max_epochs = j.value("epochs", std::size_t{10});
  s.train_cfg.batch_size = j.value("batch_size", std::size_t{16});
  s.train_cfg.patience = j.value("patience", std::size_t{5});
  s.train_cfg.seed = j.value("seed", std::uint64_t{1});
  s.train_cfg.clip_norm = j.value("clip_norm", 5.0);
  s.train_cfg.adam.alpha = j.value("learning_rate", 1e-3);
  if (seed_override) s.train_cfg.seed = *seed_override;
  s.history.text = j.value("history_txt", s.out_path + ".history.txt");
  s.history.json = j.value("history_json", s.out_path + ".history.json");
  return s;
}

inline Vocabulary load_vocab_for(const TrainSetup& s, const std::string& lang) {
  return load_vocab((std::filesystem::path(s.vocab_dir) / ("vocab." + lang)).string());
}

}  // namespace cli_detail

inline int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override,
                     std::ostream& out) {
  using cli_detail::TrainSetup;
  const TrainSetup s = cli_detail::parse_train_config(cli_detail::load_json(config_path), seed_override);

  std::vector<std::string> all_langs = s.sources;
  all_langs.push_back(s.target);
  MultiCorpus train_corpus = load_split(s.data_dir, "train", all_langs);
  MultiCorpus valid_corpus = load_split(s.data_dir, "valid", all_langs);
  TaskSpec task{s.sources, s.target};
  const BatchMode mode = s.model_kind == "one2one" ? BatchMode::kExpert : BatchMode::kMultiSource;

  std::map<std::string, Vocabulary> vocabs;
  Rng rng(s.train_cfg.seed);

  Seq2SeqModel one2one;
  MultiEncoderModel multienc;
  MoeEnsemble ensemble;
  std::vector<Vocabulary> expert_src_vocabs;
  TrainTask train_task;
  std::function<void(std::size_t, double)> on_improve;

  if (s.model_kind == "one2one") {
    vocabs[s.sources[0]] = cli_detail::load_vocab_for(s, s.sources[0]);
    vocabs[s.target] = cli_detail::load_vocab_for(s, s.target);
    one2one.init(s.hyper, vocabs[s.sources[0]].size(), vocabs[s.target].size(), rng);
    train_task.params = one2one.params();
    train_task.loss_fn = [&](Tape& tape, const Example& ex) {
      return sequence_loss(one2one, tape, ex.sources[0], ex.target);
    };
    on_improve = [&](std::size_t, double) {
      save_one2one(s.out_path, one2one, s.sources[0], s.target, vocabs[s.sources[0]], vocabs[s.target]);
    };
  } else if (s.model_kind == "multienc") {
    std::vector<std::size_t> sizes;
    for (const std::string& lang : s.sources) {
      vocabs[lang] = cli_detail::load_vocab_for(s, lang);
      sizes.push_back(vocabs[lang].size());
    }
    vocabs[s.target] = cli_detail::load_vocab_for(s, s.target);
    multienc.init(s.hyper, sizes, vocabs[s.target].size(), rng);
    train_task.params = multienc.params();
    train_task.loss_fn = [&](Tape& tape, const Example& ex) {
      return multi_forward_loss(multienc, tape, ex.sources, ex.target);
    };
    on_improve = [&](std::size_t, double) {
      std::vector<Vocabulary> svocabs;
      for (const std::string& lang : s.sources) svocabs.push_back(vocabs[lang]);
      save_multienc(s.out_path, multienc, s.sources, s.target, svocabs, vocabs[s.target]);
    };
  } else {
    const std::filesystem::path base = std::filesystem::path(config_path).parent_path();
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp.string() : (base / fp).string();
    };
    for (const ManifestEntry& e : s.experts) {
      LoadedOne2One expert = load_one2one(resolve(e.checkpoint));
      if (expert.src_lang != e.lang) {
        throw ConfigError("expert checkpoint '" + e.checkpoint + "' is for language '" + expert.src_lang +
                          "', config says '" + e.lang + "'");
      }
      if (expert.tgt_lang != s.target) {
        throw ConfigError("expert checkpoint '" + e.checkpoint + "' targets '" + expert.tgt_lang +
                          "', config says '" + s.target + "'");
      }
      vocabs[e.lang] = expert.src_vocab;
      if (ensemble.experts.empty()) vocabs[s.target] = expert.tgt_vocab;
      ensemble.experts.push_back(std::move(expert.model));
      ensemble.expert_langs.push_back(e.lang);
      expert_src_vocabs.push_back(std::move(expert.src_vocab));
    }
    ensemble.init_gating(s.moe_hyper, rng);
    ensemble.freeze_experts();
    train_task.params = ensemble.gating.params();
    train_task.loss_fn = [&](Tape& tape, const Example& ex) {
      MoeLossOut l = moe_sequence_loss(ensemble, tape, ex.sources, ex.target);
      return SeqLoss{l.loss, l.tokens};
    };
    on_improve = [&](std::size_t, double) { save_gating(s.out_path, ensemble); };
  }

  auto epoch_batches = [&](std::size_t epoch) {
    std::vector<Batch> bs = batches(train_corpus, task, vocabs, s.train_cfg.batch_size, mode,
                                    s.train_cfg.seed + epoch, true);
    std::vector<std::vector<Example>> out_batches;
    out_batches.reserve(bs.size());
    for (Batch& b : bs) out_batches.push_back(std::move(b.examples));
    return out_batches;
  };
  const std::vector<Example> valid = cli_detail::all_examples(valid_corpus, task, vocabs, mode);
  if (valid.empty()) throw EmptyTaskError("no usable validation rows for target '" + s.target + "'");

  TrainResult result = train(train_task, epoch_batches, valid, s.train_cfg, on_improve);

  // Parameters now hold the best epoch; persist them (on_improve already did,
  // but this also covers a run whose best epoch was the last).
  on_improve(result.best_epoch, result.best_valid);
  if (s.model_kind == "gating") {
    MoeManifest manifest;
    manifest.experts = s.experts;
    manifest.gating = s.out_path;
    save_manifest(s.manifest_path, manifest);
  }
  cli_detail::write_history(result, s.history);

  out << format_history(result);
  out << "best validation log-perplexity: " << cli_detail::fmt("%.6f", result.best_valid) << " (epoch "
      << result.best_epoch << ")\n";
  out << "checkpoint: " << s.out_path << "\n";
  return 0;
}

// ---- translate ------------------------------------------------------------------

namespace cli_detail {

inline std::string checkpoint_kind(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model '" + path + "'");
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (in && std::memcmp(magic, kCheckpointMagic, kMagicLen) == 0) {
    return load_raw_checkpoint(path).header.value("kind", "");
  }
  return "moe";  // manifests are JSON files
}

struct InputColumns {
  std::vector<std::string> langs;               // encoder order
  std::vector<std::vector<OptSentence>> cells;  // [row][encoder]
  std::size_t rows = 0;
};

// Reads lang=path inputs and aligns them to the model's encoder order.
// Languages without a file become all-missing columns.
inline InputColumns read_inputs(const std::vector<std::string>& specs,
                                const std::vector<std::string>& model_langs) {
  if (specs.empty()) throw ConfigError("translate: at least one --input is required");
  std::map<std::string, std::vector<std::string>> by_lang;
  for (const std::string& spec : specs) {
    auto [lang, path] = split_lang_path(spec);
    if (lang.empty()) {
      if (model_langs.size() != 1 || specs.size() != 1) {
        throw ConfigError("translate: inputs must be lang=path for multi-source models");
      }
      lang = model_langs[0];
    }
    if (std::find(model_langs.begin(), model_langs.end(), lang) == model_langs.end()) {
      throw UnknownLanguageError("model has no encoder for language '" + lang + "'");
    }
    if (by_lang.count(lang)) throw ConfigError("translate: duplicate input for language '" + lang + "'");
    by_lang[lang] = read_lines(path);
  }
  std::size_t rows = by_lang.begin()->second.size();
  for (const auto& [lang, lines] : by_lang) {
    if (lines.size() != rows) {
      throw AlignmentError("translate: input files disagree on line count (" + std::to_string(rows) +
                           " vs " + std::to_string(lines.size()) + " for '" + lang + "')");
    }
  }
  InputColumns cols;
  cols.langs = model_langs;
  cols.rows = rows;
  cols.cells.assign(rows, std::vector<OptSentence>(model_langs.size(), std::nullopt));
  for (std::size_t k = 0; k < model_langs.size(); ++k) {
    auto it = by_lang.find(model_langs[k]);
    if (it == by_lang.end()) continue;
    for (std::size_t r = 0; r < rows; ++r) {
      Sentence toks = tokenize(it->second[r]);
      if (!toks.empty()) cols.cells[r][k] = std::move(toks);
    }
  }
  return cols;
}

}  // namespace cli_detail

inline int cmd_translate(const std::string& model_path, const std::vector<std::string>& input_specs,
                         const std::string& output_path, std::size_t beam, std::size_t max_len,
                         std::ostream& out, std::ostream& err) {
  const std::string kind = cli_detail::checkpoint_kind(model_path);
  std::vector<std::string> out_lines;
  std::size_t empty_rows = 0;

  // Rows with at least one source decode with min_len 1: an output line per
  // input row is the contract, so the empty hypothesis is never an option.
  auto translate_rows = [&](const std::vector<std::string>& model_langs,
                            const std::vector<const Vocabulary*>& src_vocabs, const Vocabulary& tgt_vocab,
                            auto&& decode_row) {
    cli_detail::InputColumns cols = cli_detail::read_inputs(input_specs, model_langs);
    out_lines.reserve(cols.rows);
    for (std::size_t r = 0; r < cols.rows; ++r) {
      bool any = false;
      for (const OptSentence& c : cols.cells[r]) any = any || c.has_value();
      if (!any) {
        ++empty_rows;
        out_lines.push_back("");
        continue;
      }
      std::vector<Sentence> framed = prepare_inputs(cols.cells[r]);
      std::vector<std::vector<int>> seqs;
      seqs.reserve(framed.size());
      for (std::size_t k = 0; k < framed.size(); ++k) {
        seqs.push_back(encode_prepared(*src_vocabs[k], framed[k]));
      }
      const std::vector<int> ids = decode_row(seqs);
      out_lines.push_back(join_tokens(tgt_vocab.decode(ids)));
    }
  };

  if (kind == "one2one") {
    LoadedOne2One m = load_one2one(model_path);
    translate_rows({m.src_lang}, {&m.src_vocab}, m.tgt_vocab, [&](const std::vector<std::vector<int>>& s) {
      return translate(m.model, s[0], beam, max_len, 1);
    });
  } else if (kind == "multienc") {
    LoadedMultiEnc m = load_multienc(model_path);
    std::vector<const Vocabulary*> vs;
    for (const Vocabulary& v : m.src_vocabs) vs.push_back(&v);
    translate_rows(m.src_langs, vs, m.tgt_vocab, [&](const std::vector<std::vector<int>>& s) {
      return multi_translate(m.model, s, beam, max_len, 1);
    });
  } else if (kind == "moe") {
    LoadedMoe m = load_moe(model_path);
    std::vector<const Vocabulary*> vs;
    for (const Vocabulary& v : m.src_vocabs) vs.push_back(&v);
    translate_rows(m.ensemble.expert_langs, vs, m.tgt_vocab, [&](const std::vector<std::vector<int>>& s) {
      return moe_translate(m.ensemble, s, beam, max_len, 1);
    });
  } else if (kind == "gating") {
    throw ConfigError("'" + model_path + "' is a gating checkpoint; pass the mixture manifest (" +
                      model_path + ".manifest.json) instead");
  } else {
    throw ConfigError("'" + model_path + "' has unsupported model kind '" + kind + "'");
  }

  cli_detail::write_lines(output_path, out_lines);
  out << "translated " << out_lines.size() << " rows -> " << output_path << "\n";
  if (empty_rows > 0) {
    err << "warning: " << empty_rows << " row(s) had no source sentence; emitted empty lines\n";
  }
  return 0;
}

// ---- evaluate -------------------------------------------------------------------

inline int cmd_evaluate(const std::string& hyp_path, const std::string& ref_path,
                        const std::vector<std::string>& src_specs, const std::string& json_path,
                        std::size_t total_sources, std::ostream& out) {
  const std::vector<Sentence> hyps = cli_detail::tokenize_lines(cli_detail::read_lines(hyp_path));
  const std::vector<Sentence> refs = cli_detail::tokenize_lines(cli_detail::read_lines(ref_path));
  const BleuReport report = corpus_bleu(hyps, refs);
  out << cli_detail::bleu_line(report) << "\n";

  nlohmann::json j = cli_detail::bleu_json(report);
  if (!src_specs.empty()) {
    std::vector<std::vector<std::string>> src_lines;
    for (const std::string& spec : src_specs) {
      src_lines.push_back(cli_detail::read_lines(cli_detail::split_lang_path(spec).second));
    }
    const std::size_t columns = total_sources ? total_sources : src_specs.size();
    const std::vector<bool> mask = cli_detail::complete_mask_from_sources(src_lines, hyps.size(), columns);
    const BreakdownReport bd = breakdown(mask, hyps, refs);
    out << "complete rows " << bd.complete.rows << ": "
        << (bd.complete.scored ? cli_detail::fmt("%.2f", bd.complete.bleu.score) : std::string("n/a"))
        << "\n";
    out << "incomplete rows " << bd.incomplete.rows << ": "
        << (bd.incomplete.scored ? cli_detail::fmt("%.2f", bd.incomplete.bleu.score) : std::string("n/a"))
        << "\n";
    j["breakdown"] = {{"complete",
                       {{"rows", bd.complete.rows},
                        {"bleu", bd.complete.scored ? nlohmann::json(bd.complete.bleu.score) : nullptr}}},
                      {"incomplete",
                       {{"rows", bd.incomplete.rows},
                        {"bleu", bd.incomplete.scored ? nlohmann::json(bd.incomplete.bleu.score) : nullptr}}}};
  }
  if (!json_path.empty()) cli_detail::write_json(json_path, j);
  return 0;
}

// ---- significance ----------------------------------------------------------------

inline int cmd_significance(const std::string& hyp_a, const std::string& hyp_b, const std::string& ref_path,
                            std::size_t samples, std::uint64_t seed, std::ostream& out) {
  const std::vector<Sentence> a = cli_detail::tokenize_lines(cli_detail::read_lines(hyp_a));
  const std::vector<Sentence> b = cli_detail::tokenize_lines(cli_detail::read_lines(hyp_b));
  const std::vector<Sentence> refs = cli_detail::tokenize_lines(cli_detail::read_lines(ref_path));
  const BootstrapResult r = paired_bootstrap(a, b, refs, samples, seed);
  const BleuReport bleu_a = corpus_bleu(a, refs);
  const BleuReport bleu_b = corpus_bleu(b, refs);
  out << "BLEU(A) = " << cli_detail::fmt("%.2f", bleu_a.score)
      << ", BLEU(B) = " << cli_detail::fmt("%.2f", bleu_b.score) << "\n";
  out << "p(A not better than B) = " << cli_detail::fmt("%.4f", r.p) << " [" << r.samples << " resamples, "
      << r.a_wins << " A-wins]\n";
  if (r.p < 0.01) {
    out << "A > B significant (p < 0.01) **\n";
  } else {
    out << "not significant at p < 0.01\n";
  }
  return 0;
}

// ---- report ---------------------------------------------------------------------

inline int cmd_report(const std::string& config_path, std::ostream& out) {
  const nlohmann::json cfg = cli_detail::load_json(config_path);
  if (!cfg.contains("ref") || !cfg.contains("systems")) {
    throw ConfigError("report config needs 'ref' and 'systems'");
  }
  const std::filesystem::path base = std::filesystem::path(config_path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  const std::vector<Sentence> refs =
      cli_detail::tokenize_lines(cli_detail::read_lines(resolve(cfg.at("ref").get<std::string>())));

  struct System {
    std::string name;
    bool baseline = false;
    std::vector<Sentence> hyps;
    BleuReport bleu;
  };
  std::vector<System> systems;
  for (const auto& sj : cfg.at("systems")) {
    System s;
    s.name = sj.at("name").get<std::string>();
    s.baseline = sj.value("baseline", false);
    s.hyps = cli_detail::tokenize_lines(cli_detail::read_lines(resolve(sj.at("hyp").get<std::string>())));
    s.bleu = corpus_bleu(s.hyps, refs);
    systems.push_back(std::move(s));
  }
  if (systems.empty()) throw ConfigError("report config lists no systems");

  double best_baseline = -1.0;
  for (const System& s : systems) {
    if (s.baseline) best_baseline = std::max(best_baseline, s.bleu.score);
  }

  std::vector<bool> mask;
  if (cfg.contains("sources") && !cfg.at("sources").empty()) {
    std::vector<std::vector<std::string>> src_lines;
    for (const auto& spec : cfg.at("sources")) {
      src_lines.push_back(
          cli_detail::read_lines(resolve(cli_detail::split_lang_path(spec.get<std::string>()).second)));
    }
    const std::size_t columns = cfg.value("total_sources", src_lines.size());
    mask = cli_detail::complete_mask_from_sources(src_lines, refs.size(), columns);
  }

  std::string text;
  char buf[160];
  text += "system                          BLEU        gain\n";
  for (const System& s : systems) {
    std::string gain = s.baseline ? "baseline" : "-";
    if (!s.baseline && best_baseline >= 0.0) {
      gain = "(" + cli_detail::fmt("%+.2f", s.bleu.score - best_baseline) + ")";
    }
    std::snprintf(buf, sizeof(buf), "%-28s  %6.2f  %10s\n", s.name.c_str(), s.bleu.score, gain.c_str());
    text += buf;
  }

  nlohmann::json jout;
  jout["systems"] = nlohmann::json::array();
  for (const System& s : systems) {
    nlohmann::json sj = {{"name", s.name}, {"baseline", s.baseline}, {"bleu", cli_detail::bleu_json(s.bleu)}};
    if (!s.baseline && best_baseline >= 0.0) sj["gain"] = s.bleu.score - best_baseline;
    jout["systems"].push_back(std::move(sj));
  }

  if (!mask.empty()) {
    text += "\ncomplete/incomplete breakdown (rows in parentheses):\n";
    text += "system                            complete          incomplete\n";
    for (System& s : systems) {
      const BreakdownReport bd = breakdown(mask, s.hyps, refs);
      const std::string c = (bd.complete.scored ? cli_detail::fmt("%.2f", bd.complete.bleu.score)
                                                : std::string("n/a")) +
                            " (" + std::to_string(bd.complete.rows) + ")";
      const std::string i = (bd.incomplete.scored ? cli_detail::fmt("%.2f", bd.incomplete.bleu.score)
                                                  : std::string("n/a")) +
                            " (" + std::to_string(bd.incomplete.rows) + ")";
      std::snprintf(buf, sizeof(buf), "%-28s  %16s  %16s\n", s.name.c_str(), c.c_str(), i.c_str());
      text += buf;
      nlohmann::json bj = {
          {"complete",
           {{"rows", bd.complete.rows},
            {"bleu", bd.complete.scored ? nlohmann::json(bd.complete.bleu.score) : nullptr}}},
          {"incomplete",
           {{"rows", bd.incomplete.rows},
            {"bleu", bd.incomplete.scored ? nlohmann::json(bd.incomplete.bleu.score) : nullptr}}}};
      for (auto& sj : jout["systems"]) {
        if (sj["name"] == s.name) sj["breakdown"] = bj;
      }
    }
  }

  out << text;
  if (cfg.contains("out")) {
    const std::string path = resolve(cfg.at("out").get<std::string>());
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << text;
  }
  if (cfg.contains("json")) cli_detail::write_json(resolve(cfg.at("json").get<std::string>()), jout);
  return 0;
}

// ---- entry point ------------------------------------------------------------------

// args excludes the program name, natural order.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"incomplete multi-source translation toolkit", "nsnmt"};
  app.require_subcommand(1);

  int rc = 0;

  // prepare
  std::string p_data, p_out, p_langs;
  std::size_t p_max_len = 40, p_cap = 30000;
  auto* prepare = app.add_subcommand("prepare", "length-filter a corpus and build vocabularies");
  prepare->add_option("--data", p_data, "corpus directory (train/valid/test.<lang>)")->required();
  prepare->add_option("--out", p_out, "output directory")->required();
  prepare->add_option("--langs", p_langs, "comma-separated language tags")->required();
  prepare->add_option("--max-len", p_max_len, "drop training rows with a longer sentence");
  prepare->add_option("--vocab-cap", p_cap, "max non-reserved vocabulary entries");
  prepare->callback([&] {
    rc = cmd_prepare(p_data, p_out, cli_detail::split_csv(p_langs), p_max_len, p_cap, out);
  });

  // excise
  std::string x_data, x_plan, x_out, x_langs, x_split = "train", x_protect;
  auto* excise_cmd = app.add_subcommand("excise", "delete cells per an excision plan");
  excise_cmd->add_option("--data", x_data, "corpus directory")->required();
  excise_cmd->add_option("--plan", x_plan, "plan file: start_row end_row language")->required();
  excise_cmd->add_option("--out", x_out, "output directory")->required();
  excise_cmd->add_option("--langs", x_langs, "comma-separated language tags")->required();
  excise_cmd->add_option("--split", x_split, "split the plan applies to (default train)");
  excise_cmd->add_option("--protect", x_protect, "language that may not be excised");
  excise_cmd->callback([&] {
    rc = cmd_excise(x_data, x_plan, x_out, cli_detail::split_csv(x_langs), x_split, x_protect, out);
  });

  // train
  std::string t_config;
  std::uint64_t t_seed = 0;
  bool t_seed_set = false;
  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
  train_cmd->add_option("--config", t_config, "JSON config file")->required();
  auto* seed_opt = train_cmd->add_option("--seed", t_seed, "override the config seed");
  train_cmd->callback([&] {
    t_seed_set = seed_opt->count() > 0;
    rc = cmd_train(t_config, t_seed_set ? std::optional<std::uint64_t>(t_seed) : std::nullopt, out);
  });

  // translate
  std::string tr_model, tr_output;
  std::vector<std::string> tr_inputs;
  std::size_t tr_beam = 1, tr_max_len = 100;
  auto* translate_cmd = app.add_subcommand("translate", "translate line-aligned input files");
  translate_cmd->add_option("--model", tr_model, "checkpoint or mixture manifest")->required();
  translate_cmd->add_option("--input", tr_inputs, "input file as lang=path (repeatable)")->required();
  translate_cmd->add_option("--output", tr_output, "output file, one line per row")->required();
  translate_cmd->add_option("--beam", tr_beam, "beam width (1 = greedy)");
  translate_cmd->add_option("--max-len", tr_max_len, "max output tokens per row");
  translate_cmd->callback(
      [&] { rc = cmd_translate(tr_model, tr_inputs, tr_output, tr_beam, tr_max_len, out, err); });

  // evaluate
  std::string e_hyp, e_ref, e_json;
  std::vector<std::string> e_srcs;
  std::size_t e_total_sources = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "corpus BLEU, optional complete/incomplete breakdown");
  eval_cmd->add_option("--hyp", e_hyp, "hypothesis file")->required();
  eval_cmd->add_option("--ref", e_ref, "reference file")->required();
  eval_cmd->add_option("--src", e_srcs, "source file lang=path for the breakdown (repeatable)");
  eval_cmd->add_option("--total-sources", e_total_sources,
                       "total source languages (when --src covers a subset)");
  eval_cmd->add_option("--json", e_json, "machine-readable mirror path");
  eval_cmd->callback([&] { rc = cmd_evaluate(e_hyp, e_ref, e_srcs, e_json, e_total_sources, out); });

  // significance
  std::string s_a, s_b, s_ref;
  std::size_t s_samples = 1000;
  std::uint64_t s_seed = 1;
  auto* sig_cmd = app.add_subcommand("significance", "paired bootstrap: is A better than B?");
  sig_cmd->add_option("--hyp-a", s_a, "system A hypotheses")->required();
  sig_cmd->add_option("--hyp-b", s_b, "system B hypotheses")->required();
  sig_cmd->add_option("--ref", s_ref, "reference file")->required();
  sig_cmd->add_option("--samples", s_samples, "bootstrap resamples (default 1000)");
  sig_cmd->add_option("--seed", s_seed, "resampling seed");
  sig_cmd->callback([&] { rc = cmd_significance(s_a, s_b, s_ref, s_samples, s_seed, out); });

  // report
  std::string r_config;
  auto* report_cmd = app.add_subcommand("report", "system comparison table from a JSON config");
  report_cmd->add_option("--config", r_config, "JSON report config")->required();
  report_cmd->callback([&] { rc = cmd_report(r_config, out); });

  try {
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const TrainAbortError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}

}  // namespace nsnmt
