#pragma once

// Knowledge sources: concept vocabulary, the two embedding spaces, relational
// assertions, eigenvector centrality and concreteness ratings.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace linkinfer::kg {

/// Dense index into the vocabulary.
struct ConceptId {
  std::uint32_t value = 0;

  friend constexpr auto operator<=>(ConceptId, ConceptId) = default;
};

/// A concept paired with a score; used for every ranked list in the library.
struct ScoredConcept {
  ConceptId id;
  double score = 0.0;

  friend bool operator==(const ScoredConcept&, const ScoredConcept&) = default;
};

/// Descending score, ties by ascending ConceptId.
bool ranks_before(const ScoredConcept& a, const ScoredConcept& b) noexcept;

/// "cn" is the association space of the knowledge graph, "w2v" the
/// distributional word embedding space.
enum class Space { cn, w2v };

std::string_view to_string(Space space) noexcept;

/// Closed set of relation labels understood by the assertion loader.
enum class Relation : std::uint8_t {
  RelatedTo,
  IsA,
  PartOf,
  HasA,
  MemberOf,
  HasProperty,
  UsedFor,
  CapableOf,
  AtLocation,
  Causes,
  HasSubevent,
  HasFirstSubevent,
  HasLastSubevent,
  HasPrerequisite,
  MotivatedByGoal,
  ObstructedBy,
  Desires,
  CreatedBy,
  Synonym,
  Antonym,
  DistinctFrom,
  DerivedFrom,
  SymbolOf,
  DefinedAs,
  MannerOf,
  LocatedNear,
  HasContext,
  SimilarTo,
  MadeOf,
  ReceivesAction,
  CausesDesire,
  InstanceOf,
  Entails,
  FormOf,
};

std::string_view to_string(Relation relation) noexcept;
/// Accepts bare labels ("HasA") and URI form ("/r/HasA").
std::optional<Relation> parse_relation(std::string_view label) noexcept;

struct Assertion {
  ConceptId head;
  Relation relation = Relation::RelatedTo;
  ConceptId tail;
  double weight = 0.0;
};

/// Lowercases and replaces spaces with underscores.
std::string normalize_token(std::string_view token);

/// Row-major dense matrix; just enough for adjacency matrices.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  DenseMatrix& operator*=(double factor);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// dot(a,b) / (|a| |b|). Throws DimensionMismatch or InvalidInput on a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Cosine mapped from [-1,1] onto [0,1].
constexpr double map_cosine(double cosine) noexcept { return (cosine + 1.0) / 2.0; }

inline constexpr double kCentralityFloor = 1e-4;

/// Per-concept centrality, normalized to max 1 and floored at kCentralityFloor.
struct CentralityScores {
  std::vector<double> scores;
  int iterations = 0;
  double residual = 0.0;
};

/// Power iteration on (A + sigma I), sigma = max row sum, which has the same
/// dominant eigenvector as A but no competing eigenvalue of equal modulus
/// (bipartite graphs otherwise oscillate). Converged when successive
/// max-normalized iterates differ by less than `tol` in max-norm.
/// Throws NotConverged after `max_iter` iterations.
CentralityScores eigenvector_centrality(const DenseMatrix& adjacency, double tol = 1e-9,
                                        int max_iter = 10000);

/// One embedding per vocabulary concept, stored row-major with cached norms.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  EmbeddingSpace(Space name, std::size_t dim);

  Space name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return norms_.size(); }

  std::span<const double> vector(ConceptId id) const { return {data_.data() + id.value * dim_, dim_}; }
  double norm(ConceptId id) const { return norms_[id.value]; }

  /// Raw cosine between two stored vectors; exact 1 for a == b.
  double cosine(ConceptId a, ConceptId b) const;
  /// Raw cosine between a stored vector and an arbitrary query vector.
  double cosine(ConceptId a, std::span<const double> query, double query_norm) const;

  void append(std::span<const double> values);

 private:
  Space name_ = Space::cn;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<double> norms_;
};

struct StorePaths {
  std::filesystem::path cn_embeddings;
  std::filesystem::path w2v_embeddings;
  std::optional<std::filesystem::path> assertions;
  std::optional<std::filesystem::path> concreteness;
};

/// Counts of input records that were skipped during loading.
struct LoadReport {
  std::size_t cn_only_tokens = 0;
  std::size_t w2v_only_tokens = 0;
  std::size_t zero_vectors = 0;
  std::size_t duplicate_tokens = 0;
  std::size_t assertions_oov = 0;
  std::size_t assertions_unknown_relation = 0;
  std::size_t assertions_duplicate = 0;
  std::size_t concreteness_oov = 0;
};

class KnowledgeStore;

/// Assembles a KnowledgeStore. Used by the file loader and by tests that
/// construct small stores programmatically.
class StoreBuilder {
 public:
  StoreBuilder(std::size_t cn_dim, std::size_t w2v_dim);

  /// Adds a concept; returns its id. Throws on duplicate token, wrong dims or
  /// all-zero vectors.
  ConceptId add_concept(std::string_view token, std::span<const double> cn_vector,
                        std::span<const double> w2v_vector);
  /// Returns false if (head, relation, tail) was already present.
  bool add_assertion(std::string_view head, Relation relation, std::string_view tail, double weight);
  void set_concreteness(std::string_view token, double rating);
  /// Skips the centrality computation; scores are floored but not renormalized.
  void set_centrality(std::vector<double> scores);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::optional<ConceptId> find(std::string_view token) const;

  KnowledgeStore build() &&;

 private:
  friend class KnowledgeStore;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, ConceptId> index_;
  EmbeddingSpace cn_;
  EmbeddingSpace w2v_;
  std::vector<Assertion> assertions_;
  std::unordered_map<std::string, double> concreteness_;
  std::optional<std::vector<double>> centrality_;
};

/// Immutable after construction; safe for concurrent readers.
class KnowledgeStore {
 public:
  /// Vocabulary is the set of tokens present in both embedding files, in the
  /// order of the cn file. Other skipped records are counted in `report`.
  static KnowledgeStore load(const StorePaths& paths, LoadReport* report = nullptr);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(ConceptId id) const;
  std::optional<ConceptId> find(std::string_view token) const;
  /// Throws OutOfVocabulary.
  ConceptId id(std::string_view token) const;

  const EmbeddingSpace& space(Space space) const noexcept { return space == Space::cn ? cn_ : w2v_; }

  /// Normalized similarity (cos + 1) / 2; exactly symmetric, exactly 1 on the diagonal.
  double similarity(Space space, ConceptId a, ConceptId b) const;

  /// The k most similar concepts to `seed`, excluding the seed itself;
  /// descending score, ties by ascending id. Truncated when k >= size().
  std::vector<ScoredConcept> top_k_similar(Space space, ConceptId seed, std::size_t k) const;
  /// Nearest concepts to an arbitrary query vector, scored by mapped cosine.
  std::vector<ScoredConcept> nearest(Space space, std::span<const double> query, std::size_t k) const;

  std::span<const Assertion> assertions_from(ConceptId head) const;
  std::optional<double> assertion_weight(ConceptId head, Relation relation, ConceptId tail) const;
  std::size_t assertion_count() const noexcept { return assertion_count_; }

  /// Floored eigenvector centrality in (0, 1].
  double centrality(ConceptId id) const { return centrality_.at(id.value); }
  std::span<const double> centrality_scores() const noexcept { return centrality_; }

  std::optional<double> concreteness(ConceptId id) const;

 private:
  friend class StoreBuilder;
  KnowledgeStore() = default;

  void check(ConceptId id) const;
  static std::uint64_t edge_key(ConceptId head, Relation relation, ConceptId tail) noexcept;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, ConceptId> index_;
  EmbeddingSpace cn_;
  EmbeddingSpace w2v_;
  std::vector<Assertion> assertions_;        // grouped by head
  std::vector<std::size_t> assertion_start_;  // size() + 1 offsets into assertions_
  std::unordered_map<std::uint64_t, double> edge_weight_;
  std::size_t assertion_count_ = 0;
  std::vector<double> centrality_;
  std::vector<std::optional<double>> concreteness_;
};

/// Adjacency used for centrality: pairwise mapped cn similarity, zero
/// diagonal, entries below 0.5 (negative cosine) zeroed.
DenseMatrix centrality_adjacency(const EmbeddingSpace& cn);

/// Cosine between the mean vectors of two token lists in `space`. OOV tokens
/// are dropped; an underscore phrase missing from the vocabulary falls back
/// to its parts. Throws OutOfVocabulary if either side has no usable token.
double phrase_similarity(const KnowledgeStore& store, std::span<const std::string> tokens_a,
                         std::span<const std::string> tokens_b, Space space = Space::w2v);

}  // namespace linkinfer::kg

template <>
struct std::hash<linkinfer::kg::ConceptId> {
  std::size_t operator()(linkinfer::kg::ConceptId id) const noexcept { return std::hash<std::uint32_t>{}(id.value); }
};
