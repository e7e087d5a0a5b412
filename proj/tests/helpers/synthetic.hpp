#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "nsnmt/corpus.hpp"
#include "nsnmt/errors.hpp"

namespace nsnmt::testing {

// Three-source toy translation task. Source a carries content symbols, source
// b carries a binary transform key, source c repeats a's content in its own
// surface forms. The target renders a's content as x-words when the key is 0
// and y-words when it is 1, so no single source determines the target: a and
// c miss the key, b misses the content.
//
//   a:  ca3 ca0 ca7 ...        b:  kb1        c:  cc3 cc0 cc7 ...
//   t:  yt3 yt0 yt7 ...  (key 1 -> y-words)
//
// Excision plans (1-based inclusive blocks) delete 30% of b plus small a/c
// blocks nested inside b-gaps, so some rows keep only one source.
struct SyntheticTask {
  std::string raw_dir;     // complete corpus
  std::string plan_train;  // per-split excision plans
  std::string plan_valid;
  std::string plan_test;
};

namespace synth_detail {

inline void write_file(const std::string& path, const std::vector<std::string>& lines) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (const std::string& l : lines) out << l << '\n';
}

}  // namespace synth_detail

inline SyntheticTask make_synthetic(const std::string& root, std::uint64_t seed,
                                    std::size_t train_rows = 2000, std::size_t valid_rows = 200,
                                    std::size_t test_rows = 200) {
  Rng rng(seed);
  const std::size_t content_symbols = 12;

  auto gen_split = [&](const std::string& split, std::size_t rows) {
    std::vector<std::string> a(rows), b(rows), c(rows), t(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::size_t len = 4 + rng.below(5);  // 4..8
      const bool key = rng.below(2) == 1;
      std::string sa, sc, st;
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t sym = rng.below(content_symbols);
        if (j) {
          sa += ' ';
          sc += ' ';
          st += ' ';
        }
        sa += "ca" + std::to_string(sym);
        sc += "cc" + std::to_string(sym);
        st += (key ? "yt" : "xt") + std::to_string(sym);
      }
      a[i] = sa;
      c[i] = sc;
      b[i] = key ? "kb1" : "kb0";
      t[i] = st;
    }
    synth_detail::write_file(root + "/raw/" + split + ".a", a);
    synth_detail::write_file(root + "/raw/" + split + ".b", b);
    synth_detail::write_file(root + "/raw/" + split + ".c", c);
    synth_detail::write_file(root + "/raw/" + split + ".t", t);
  };
  gen_split("train", train_rows);
  gen_split("valid", valid_rows);
  gen_split("test", test_rows);

  // Every split gets the same stripe layout, scaled by its row count: b is
  // missing on 30% of rows, a on 25%, c on a different 25% (overlapping a by
  // one block, so some rows keep only b). Single-source models lose whole
  // stripes; multi-source models can route around any one missing cell.
  SyntheticTask task;
  task.raw_dir = root + "/raw";
  task.plan_train = root + "/plan.train.txt";
  task.plan_valid = root + "/plan.valid.txt";
  task.plan_test = root + "/plan.test.txt";

  auto scaled_plan = [&](const std::string& path, std::size_t rows) {
    const std::size_t u = rows / 20;  // block unit: 100 for 2000 rows, 10 for 200
    std::vector<std::string> lines = {
        "# delete 30% of b and staggered 25% stripes of a and c",
        std::to_string(1) + " " + std::to_string(3 * u) + " b",
        std::to_string(7 * u + 1) + " " + std::to_string(10 * u) + " b",
        std::to_string(11 * u + 1) + " " + std::to_string(16 * u) + " a",
        std::to_string(15 * u + 1) + " " + std::to_string(20 * u) + " c",
    };
    synth_detail::write_file(path, lines);
  };
  scaled_plan(task.plan_train, train_rows);
  scaled_plan(task.plan_valid, valid_rows);
  scaled_plan(task.plan_test, test_rows);
  return task;
}

}  // namespace nsnmt::testing
