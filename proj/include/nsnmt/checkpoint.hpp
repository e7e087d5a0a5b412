#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsnmt/corpus.hpp"
#include "nsnmt/errors.hpp"
#include "nsnmt/moe.hpp"
#include "nsnmt/multiencoder.hpp"
#include "nsnmt/seq2seq.hpp"

// Versioned binary checkpoint format, shared by all model kinds:
//
//   bytes 0..6   magic "NSNMT1\n"
//   bytes 7..14  header length, unsigned 64-bit little-endian
//   header       UTF-8 JSON: model kind, hyperparameters, language tags,
//                embedded vocabularies, ordered parameter names + shapes
//   payload      raw IEEE-754 doubles, little-endian, in header order
//
// A mixture is stored as a manifest JSON file pointing at expert checkpoints
// plus the gating checkpoint.

namespace nsnmt {

inline constexpr char kCheckpointMagic[] = "NSNMT1\n";
inline constexpr std::size_t kMagicLen = 7;

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_doubles_le(std::ostream& out, const std::vector<double>& xs) {
  static_assert(sizeof(double) == 8);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(xs.data()), static_cast<std::streamsize>(xs.size() * 8));
  } else {
    for (double x : xs) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      write_u64_le(out, bits);
    }
  }
}

inline void read_doubles_le(std::istream& in, std::vector<double>& xs) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(xs.data()), static_cast<std::streamsize>(xs.size() * 8));
  } else {
    for (double& x : xs) {
      const std::uint64_t bits = read_u64_le(in);
      std::memcpy(&x, &bits, 8);
    }
  }
}

inline nlohmann::json vocab_to_json(const Vocabulary& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = Vocabulary::kReservedCount; i < v.size(); ++i) {
    arr.push_back(v.token(static_cast<int>(i)));
  }
  return arr;
}

inline Vocabulary vocab_from_json(const nlohmann::json& arr) {
  Vocabulary v;
  for (const auto& tok : arr) v.add(tok.get<std::string>());
  return v;
}

inline nlohmann::json params_to_json(const std::vector<NamedParam>& params) {
  nlohmann::json arr = nlohmann::json::array();
  for (const NamedParam& p : params) {
    arr.push_back({{"name", p.name}, {"shape", p.tensor->shape}});
  }
  return arr;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const nlohmann::json& header,
                            const std::vector<NamedParam>& params) {
  nlohmann::json full = header;
  full["params"] = detail::params_to_json(params);
  const std::string head = full.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, kMagicLen);
  detail::write_u64_le(out, head.size());
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (const NamedParam& p : params) detail::write_doubles_le(out, p.tensor->data);
  if (!out) throw IoError("short write to checkpoint '" + path + "'");
}

struct RawCheckpoint {
  nlohmann::json header;
  std::vector<std::pair<std::string, std::vector<double>>> tensors;  // header order
};

inline RawCheckpoint load_raw_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0) {
    throw ConfigError("'" + path + "' is not a NSNMT1 checkpoint");
  }
  const std::uint64_t head_len = detail::read_u64_le(in);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw IoError("truncated checkpoint header in '" + path + "'");
  RawCheckpoint ck;
  try {
    ck.header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad checkpoint header in '" + path + "': " + e.what());
  }
  if (!ck.header.contains("params") || !ck.header["params"].is_array()) {
    throw ConfigError("checkpoint '" + path + "' header lacks a params table");
  }
  for (const auto& entry : ck.header["params"]) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> data(numel(shape));
    detail::read_doubles_le(in, data);
    if (!in) throw IoError("truncated checkpoint payload in '" + path + "' at tensor '" + name + "'");
    ck.tensors.emplace_back(name, std::move(data));
  }
  return ck;
}

// Copies payload tensors into live parameters, matching by name and shape in
// order. Any disagreement is a format error.
inline void restore_params(const RawCheckpoint& ck, const std::vector<NamedParam>& params,
                           const std::string& origin) {
  if (ck.tensors.size() != params.size()) {
    throw ConfigError("checkpoint '" + origin + "' has " + std::to_string(ck.tensors.size()) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ck.tensors[i].first != params[i].name) {
      throw ConfigError("checkpoint '" + origin + "' tensor " + std::to_string(i) + " is '" +
                        ck.tensors[i].first + "', model expects '" + params[i].name + "'");
    }
    if (ck.tensors[i].second.size() != params[i].tensor->size()) {
      throw ConfigError("checkpoint '" + origin + "' tensor '" + params[i].name + "' has wrong size");
    }
    params[i].tensor->data = ck.tensors[i].second;
    params[i].tensor->zero_grad();
  }
}

// ---- one-to-one ---------------------------------------------------------------

struct LoadedOne2One {
  Seq2SeqModel model;
  std::string src_lang, tgt_lang;
  Vocabulary src_vocab, tgt_vocab;
};

inline void save_one2one(const std::string& path, const Seq2SeqModel& model, const std::string& src_lang,
                         const std::string& tgt_lang, const Vocabulary& src_vocab,
                         const Vocabulary& tgt_vocab) {
  nlohmann::json header;
  header["kind"] = "one2one";
  header["hyper"] = {{"hidden_dim", model.hyper.hidden_dim},
                     {"embed_dim", model.hyper.embed_dim},
                     {"vocab_cap", model.hyper.vocab_cap}};
  header["src_lang"] = src_lang;
  header["tgt_lang"] = tgt_lang;
  header["src_vocab"] = detail::vocab_to_json(src_vocab);
  header["tgt_vocab"] = detail::vocab_to_json(tgt_vocab);
  save_checkpoint(path, header, model.params());
}

inline LoadedOne2One load_one2one(const std::string& path) {
  RawCheckpoint ck = load_raw_checkpoint(path);
  if (ck.header.value("kind", "") != "one2one") {
    throw ConfigError("checkpoint '" + path + "' is not a one2one model");
  }
  LoadedOne2One out;
  Hyper hy;
  hy.hidden_dim = ck.header.at("hyper").at("hidden_dim").get<std::size_t>();
  hy.embed_dim = ck.header.at("hyper").at("embed_dim").get<std::size_t>();
  hy.vocab_cap = ck.header.at("hyper").at("vocab_cap").get<std::size_t>();
  out.src_lang = ck.header.at("src_lang").get<std::string>();
  out.tgt_lang = ck.header.at("tgt_lang").get<std::string>();
  out.src_vocab = detail::vocab_from_json(ck.header.at("src_vocab"));
  out.tgt_vocab = detail::vocab_from_json(ck.header.at("tgt_vocab"));
  Rng rng(0);
  out.model.init(hy, out.src_vocab.size(), out.tgt_vocab.size(), rng);
  restore_params(ck, out.model.params(), path);
  return out;
}

// ---- multi-encoder --------------------------------------------------------------

struct LoadedMultiEnc {
  MultiEncoderModel model;
  std::vector<std::string> src_langs;
  std::string tgt_lang;
  std::vector<Vocabulary> src_vocabs;
  Vocabulary tgt_vocab;
};

inline void save_multienc(const std::string& path, const MultiEncoderModel& model,
                          const std::vector<std::string>& src_langs, const std::string& tgt_lang,
                          const std::vector<Vocabulary>& src_vocabs, const Vocabulary& tgt_vocab) {
  if (src_langs.size() != model.num_encoders() || src_vocabs.size() != model.num_encoders()) {
    throw ContractError("save_multienc: need one language tag and vocabulary per encoder");
  }
  nlohmann::json header;
  header["kind"] = "multienc";
  header["hyper"] = {{"hidden_dim", model.hyper.hidden_dim},
                     {"embed_dim", model.hyper.embed_dim},
                     {"vocab_cap", model.hyper.vocab_cap}};
  header["src_langs"] = src_langs;
  header["tgt_lang"] = tgt_lang;
  nlohmann::json vocabs = nlohmann::json::array();
  for (const Vocabulary& v : src_vocabs) vocabs.push_back(detail::vocab_to_json(v));
  header["src_vocabs"] = vocabs;
  header["tgt_vocab"] = detail::vocab_to_json(tgt_vocab);
  save_checkpoint(path, header, model.params());
}

inline LoadedMultiEnc load_multienc(const std::string& path) {
  RawCheckpoint ck = load_raw_checkpoint(path);
  if (ck.header.value("kind", "") != "multienc") {
    throw ConfigError("checkpoint '" + path + "' is not a multi-encoder model");
  }
  LoadedMultiEnc out;
  Hyper hy;
  hy.hidden_dim = ck.header.at("hyper").at("hidden_dim").get<std::size_t>();
  hy.embed_dim = ck.header.at("hyper").at("embed_dim").get<std::size_t>();
  hy.vocab_cap = ck.header.at("hyper").at("vocab_cap").get<std::size_t>();
  out.src_langs = ck.header.at("src_langs").get<std::vector<std::string>>();
  out.tgt_lang = ck.header.at("tgt_lang").get<std::string>();
  for (const auto& v : ck.header.at("src_vocabs")) out.src_vocabs.push_back(detail::vocab_from_json(v));
  out.tgt_vocab = detail::vocab_from_json(ck.header.at("tgt_vocab"));
  if (out.src_langs.size() != out.src_vocabs.size() || out.src_langs.empty()) {
    throw ConfigError("checkpoint '" + path + "' has inconsistent source language data");
  }
  std::vector<std::size_t> sizes;
  for (const Vocabulary& v : out.src_vocabs) sizes.push_back(v.size());
  Rng rng(0);
  out.model.init(hy, sizes, out.tgt_vocab.size(), rng);
  restore_params(ck, out.model.params(), path);
  return out;
}

// ---- gating + mixture manifest ---------------------------------------------------

inline void save_gating(const std::string& path, const MoeEnsemble& ensemble) {
  nlohmann::json header;
  header["kind"] = "gating";
  header["gate"] = {
      {"gate_hidden", ensemble.hyper.gate_hidden},
      {"gate_input", ensemble.hyper.gate_input == GateInput::kEmbedding ? "embedding" : "decoder_input"},
      {"num_experts", ensemble.num_experts()},
      {"f_width", ensemble.gate_input_width()}};
  header["expert_langs"] = ensemble.expert_langs;
  save_checkpoint(path, header, ensemble.gating.params());
}

struct ManifestEntry {
  std::string lang;
  std::string checkpoint;
};

struct MoeManifest {
  std::vector<ManifestEntry> experts;
  std::string gating;
};

inline void save_manifest(const std::string& path, const MoeManifest& manifest) {
  nlohmann::json j;
  j["experts"] = nlohmann::json::array();
  for (const ManifestEntry& e : manifest.experts) {
    j["experts"].push_back({{"lang", e.lang}, {"checkpoint", e.checkpoint}});
  }
  j["gating"] = manifest.gating;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << j.dump(2) << '\n';
}

inline MoeManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad manifest '" + path + "': " + e.what());
  }
  MoeManifest m;
  for (const auto& e : j.at("experts")) {
    m.experts.push_back({e.at("lang").get<std::string>(), e.at("checkpoint").get<std::string>()});
  }
  m.gating = j.value("gating", "");
  return m;
}

struct LoadedMoe {
  MoeEnsemble ensemble;
  std::vector<Vocabulary> src_vocabs;  // aligned with ensemble.expert_langs
  Vocabulary tgt_vocab;
  std::string tgt_lang;
};

// Loads experts (frozen) plus the gating checkpoint. Relative checkpoint
// paths resolve against the manifest's directory. All experts must agree on
// the target vocabulary token-for-token.
inline LoadedMoe load_moe(const std::string& manifest_path) {
  const MoeManifest manifest = load_manifest(manifest_path);
  if (manifest.experts.size() < 2) {
    throw ConfigError("manifest '" + manifest_path + "' needs at least 2 experts");
  }
  if (manifest.gating.empty()) {
    throw ConfigError("manifest '" + manifest_path + "' lacks a gating checkpoint");
  }
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };

  LoadedMoe out;
  for (const ManifestEntry& e : manifest.experts) {
    LoadedOne2One expert = load_one2one(resolve(e.checkpoint));
    if (expert.src_lang != e.lang) {
      throw ConfigError("manifest lists expert '" + e.lang + "' but checkpoint is for '" + expert.src_lang +
                        "'");
    }
    if (!out.ensemble.experts.empty()) {
      if (expert.tgt_lang != out.tgt_lang) {
        throw ConfigError("experts disagree on target language");
      }
      if (expert.tgt_vocab.size() != out.tgt_vocab.size()) {
        throw ConfigError("experts disagree on target vocabulary size");
      }
      for (std::size_t i = 0; i < expert.tgt_vocab.size(); ++i) {
        if (expert.tgt_vocab.token(static_cast<int>(i)) != out.tgt_vocab.token(static_cast<int>(i))) {
          throw ConfigError("experts disagree on target vocabulary content");
        }
      }
    } else {
      out.tgt_lang = expert.tgt_lang;
      out.tgt_vocab = expert.tgt_vocab;
    }
    out.ensemble.experts.push_back(std::move(expert.model));
    out.ensemble.expert_langs.push_back(e.lang);
    out.src_vocabs.push_back(std::move(expert.src_vocab));
  }

  RawCheckpoint gck = load_raw_checkpoint(resolve(manifest.gating));
  if (gck.header.value("kind", "") != "gating") {
    throw ConfigError("'" + manifest.gating + "' is not a gating checkpoint");
  }
  MoeHyper gh;
  gh.gate_hidden = gck.header.at("gate").at("gate_hidden").get<std::size_t>();
  const std::string gi = gck.header.at("gate").at("gate_input").get<std::string>();
  if (gi == "embedding") {
    gh.gate_input = GateInput::kEmbedding;
  } else if (gi == "decoder_input") {
    gh.gate_input = GateInput::kDecoderInput;
  } else {
    throw ConfigError("unknown gate_input '" + gi + "' in gating checkpoint");
  }
  if (gck.header.at("gate").at("num_experts").get<std::size_t>() != out.ensemble.experts.size()) {
    throw ConfigError("gating checkpoint expert count does not match manifest");
  }
  Rng rng(0);
  out.ensemble.init_gating(gh, rng);
  restore_params(gck, out.ensemble.gating.params(), manifest.gating);
  out.ensemble.freeze_experts();
  return out;
}

}  // namespace nsnmt
