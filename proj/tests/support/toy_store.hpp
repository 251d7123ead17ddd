#pragma once

// Small hand-built knowledge stores and paths to the shipped test data.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "linkinfer/kgraph.hpp"

namespace linkinfer::testing {

inline std::filesystem::path data_dir() { return LINKINFER_TEST_DATA_DIR; }

inline kg::StorePaths shipped_paths(const std::string& name) {
  const auto dir = data_dir() / name;
  return {dir / "cn.txt", dir / "w2v.txt", dir / "assertions.tsv", dir / "concreteness.tsv"};
}

/// Concepts are added with one vector per space (the w2v vector defaults to
/// the cn one).
class ToyStore {
 public:
  explicit ToyStore(std::size_t dim) : builder_(dim, dim) {}

  ToyStore& add(std::string_view token, std::vector<double> cn, std::vector<double> w2v = {}) {
    if (w2v.empty()) w2v = cn;
    builder_.add_concept(token, cn, w2v);
    return *this;
  }
  ToyStore& assertion(std::string_view head, kg::Relation r, std::string_view tail, double weight) {
    builder_.add_assertion(head, r, tail, weight);
    return *this;
  }
  ToyStore& concreteness(std::string_view token, double rating) {
    builder_.set_concreteness(token, rating);
    return *this;
  }
  ToyStore& centrality(std::vector<double> scores) {
    builder_.set_centrality(std::move(scores));
    return *this;
  }

  /// Consumes the builder.
  kg::KnowledgeStore build() { return std::move(builder_).build(); }

 private:
  kg::StoreBuilder builder_;
};

/// Unit vector along axis `i` of a `dim`-dimensional space.
inline std::vector<double> axis(std::size_t dim, std::size_t i, double scale = 1.0) {
  std::vector<double> v(dim, 0.0);
  v[i] = scale;
  return v;
}

}  // namespace linkinfer::testing
