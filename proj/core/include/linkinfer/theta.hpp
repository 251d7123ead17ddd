#pragma once

// Hyper-parameters of the riddle pipeline. Defaults are the published
// settings; the remaining knobs are this library's own choices.

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace linkinfer {

struct ThetaConfig {
  /// Targets kept per image after ranking.
  std::size_t num_targets = 2500;
  /// Weights of the cn and w2v similarities in rule weights.
  double alpha1 = 1.0;
  double alpha2 = 4.0;
  /// Pair-rule partners per Stage-I target.
  std::size_t tt = 1;
  /// Gate on the combined similarity for a seed-target rule.
  double sim_psl1 = 0.8;
  /// Cap on the sum of Stage-I target scores per image; 1 or 2.
  double sum1 = 2.0;
  /// Cap on the sum of Stage-II target scores; fixed at 1.
  double sum2 = 1.0;
  /// cn similarity needed for an edge of the specificity flow graph.
  double sim_ss = 0.6;
  /// Solver tolerance and iteration cap.
  double tol = 1e-4;
  int max_iter = 20000;
  /// cn neighbours reranked per seed, and how many survive the rerank.
  std::size_t retrieve_pool = 10000;
  std::size_t retrieve_keep = 500;
  /// Stage-I score a target needs to reach Stage II, and the per-image cap.
  double survivor_threshold = 0.01;
  std::size_t survivor_cap = 100;
  /// Top ranked targets per image averaged by the RR baseline.
  std::size_t rr_targets = 10;
  /// Minimum length of a reported answer list.
  std::size_t answer_count = 10;

  /// Parses `value` into the field named `key`, then re-validates.
  /// Throws InvalidInput on an unknown key, bad number or out-of-range value.
  void set(std::string_view key, std::string_view value);
  /// Convenience for "key=value".
  void set(std::string_view assignment);
  void validate() const;
  /// Every field as (key, text) in a fixed order; values round-trip through set().
  std::vector<std::pair<std::string, std::string>> entries() const;

  friend bool operator==(const ThetaConfig&, const ThetaConfig&) = default;
};

}  // namespace linkinfer
