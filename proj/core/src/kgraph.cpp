#include "linkinfer/kgraph.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "linkinfer/error.hpp"
#include "text_util.hpp"

namespace linkinfer {

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ", ";
    out += t;
  }
  return out;
}

}  // namespace

OutOfVocabulary::OutOfVocabulary(std::vector<std::string> tokens)
    : Error("out of vocabulary: " + join_tokens(tokens)), tokens_(std::move(tokens)) {}

}  // namespace linkinfer

namespace linkinfer::kg {

namespace {

constexpr std::array<std::pair<Relation, std::string_view>, 34> kRelationNames{{
    {Relation::RelatedTo, "RelatedTo"},
    {Relation::IsA, "IsA"},
    {Relation::PartOf, "PartOf"},
    {Relation::HasA, "HasA"},
    {Relation::MemberOf, "MemberOf"},
    {Relation::HasProperty, "HasProperty"},
    {Relation::UsedFor, "UsedFor"},
    {Relation::CapableOf, "CapableOf"},
    {Relation::AtLocation, "AtLocation"},
    {Relation::Causes, "Causes"},
    {Relation::HasSubevent, "HasSubevent"},
    {Relation::HasFirstSubevent, "HasFirstSubevent"},
    {Relation::HasLastSubevent, "HasLastSubevent"},
    {Relation::HasPrerequisite, "HasPrerequisite"},
    {Relation::MotivatedByGoal, "MotivatedByGoal"},
    {Relation::ObstructedBy, "ObstructedBy"},
    {Relation::Desires, "Desires"},
    {Relation::CreatedBy, "CreatedBy"},
    {Relation::Synonym, "Synonym"},
    {Relation::Antonym, "Antonym"},
    {Relation::DistinctFrom, "DistinctFrom"},
    {Relation::DerivedFrom, "DerivedFrom"},
    {Relation::SymbolOf, "SymbolOf"},
    {Relation::DefinedAs, "DefinedAs"},
    {Relation::MannerOf, "MannerOf"},
    {Relation::LocatedNear, "LocatedNear"},
    {Relation::HasContext, "HasContext"},
    {Relation::SimilarTo, "SimilarTo"},
    {Relation::MadeOf, "MadeOf"},
    {Relation::ReceivesAction, "ReceivesAction"},
    {Relation::CausesDesire, "CausesDesire"},
    {Relation::InstanceOf, "InstanceOf"},
    {Relation::Entails, "Entails"},
    {Relation::FormOf, "FormOf"},
}};

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double clamp_cosine(double c) { return std::clamp(c, -1.0, 1.0); }

// ConceptNet URIs look like /c/en/hot_dog/n; keep only the term.
std::string strip_concept_uri(std::string_view token) {
  if (token.starts_with("/c/")) {
    token.remove_prefix(3);
    auto slash = token.find('/');
    if (slash != std::string_view::npos) token.remove_prefix(slash + 1);
    slash = token.find('/');
    if (slash != std::string_view::npos) token = token.substr(0, slash);
  }
  return normalize_token(token);
}

struct EmbeddingFile {
  std::size_t dim = 0;
  std::vector<std::string> tokens;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t duplicates = 0;
  std::size_t zero_vectors = 0;
};

EmbeddingFile read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open embedding file " + path.string());
  EmbeddingFile file;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": empty embedding file");
  {
    auto header = detail::trim(line);
    long long dim = 0;
    if (!detail::parse_integer(header, dim) || dim <= 0)
      throw InvalidInput(path.string() + ":1: expected the embedding dimension, got '" + std::string(header) + "'");
    file.dim = static_cast<std::size_t>(dim);
  }
  std::vector<double> row(file.dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split(detail::trim(line), ' ');
    if (fields.size() != file.dim + 1) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(file.dim + 1) + " fields, got " + std::to_string(fields.size()));
    }
    bool nonzero = false;
    for (std::size_t i = 0; i < file.dim; ++i) {
      if (!detail::parse_double(fields[i + 1], row[i]) || !std::isfinite(row[i])) {
        throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": bad number '" +
                           std::string(fields[i + 1]) + "'");
      }
      nonzero = nonzero || row[i] != 0.0;
    }
    auto token = normalize_token(fields[0]);
    if (!nonzero) {
      ++file.zero_vectors;
      continue;
    }
    if (file.index.contains(token)) {
      ++file.duplicates;
      continue;
    }
    file.index.emplace(token, file.tokens.size());
    file.tokens.push_back(std::move(token));
    file.values.insert(file.values.end(), row.begin(), row.end());
  }
  return file;
}

}  // namespace

bool ranks_before(const ScoredConcept& a, const ScoredConcept& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

std::string_view to_string(Space space) noexcept { return space == Space::cn ? "cn" : "w2v"; }

std::string_view to_string(Relation relation) noexcept {
  for (const auto& [r, name] : kRelationNames)
    if (r == relation) return name;
  return "RelatedTo";
}

std::optional<Relation> parse_relation(std::string_view label) noexcept {
  if (label.starts_with("/r/")) label.remove_prefix(3);
  for (const auto& [r, name] : kRelationNames)
    if (name == label) return r;
  return std::nullopt;
}

std::string normalize_token(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : detail::trim(token)) {
    if (c == ' ')
      out.push_back('_');
    else
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix& DenseMatrix::operator*=(double factor) {
  for (auto& v : data_) v *= factor;
  return *this;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionMismatch("cosine_similarity: dimensions " + std::to_string(a.size()) + " and " +
                            std::to_string(b.size()));
  }
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) throw InvalidInput("cosine_similarity: zero-norm vector");
  return clamp_cosine(dot(a, b) / (na * nb));
}

CentralityScores eigenvector_centrality(const DenseMatrix& adjacency, double tol, int max_iter) {
  const std::size_t n = adjacency.rows();
  if (n == 0 || adjacency.cols() != n) throw InvalidInput("eigenvector_centrality: adjacency must be square and non-empty");
  double shift = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (double v : adjacency.row(i)) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("eigenvector_centrality: adjacency must be finite and nonnegative");
      row_sum += v;
    }
    shift = std::max(shift, row_sum);
  }
  if (shift == 0.0) throw InvalidInput("eigenvector_centrality: adjacency has no nonzero entry");

  std::vector<double> x(n, 1.0), next(n);
  double residual = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    for (std::size_t i = 0; i < n; ++i) next[i] = dot(adjacency.row(i), x) + shift * x[i];
    const double peak = *std::max_element(next.begin(), next.end());
    residual = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= peak;
      residual = std::max(residual, std::abs(next[i] - x[i]));
    }
    x.swap(next);
    if (residual < tol) {
      for (auto& v : x) v = std::max(v, kCentralityFloor);
      return {std::move(x), iter, residual};
    }
  }
  throw NotConverged("eigenvector_centrality did not converge", max_iter, residual, residual);
}

EmbeddingSpace::EmbeddingSpace(Space name, std::size_t dim) : name_(name), dim_(dim) {}

double EmbeddingSpace::cosine(ConceptId a, ConceptId b) const {
  if (a == b) return 1.0;
  return clamp_cosine(dot(vector(a), vector(b)) / (norm(a) * norm(b)));
}

double EmbeddingSpace::cosine(ConceptId a, std::span<const double> query, double query_norm) const {
  return clamp_cosine(dot(vector(a), query) / (norm(a) * query_norm));
}

void EmbeddingSpace::append(std::span<const double> values) {
  if (values.size() != dim_) {
    throw DimensionMismatch(std::string(to_string(name_)) + " vector has dimension " + std::to_string(values.size()) +
                            ", expected " + std::to_string(dim_));
  }
  const double n = std::sqrt(dot(values, values));
  if (n == 0.0 || !std::isfinite(n)) throw InvalidInput(std::string(to_string(name_)) + " vector is all-zero or non-finite");
  data_.insert(data_.end(), values.begin(), values.end());
  norms_.push_back(n);
}

DenseMatrix centrality_adjacency(const EmbeddingSpace& cn) {
  const std::size_t n = cn.size();
  DenseMatrix a(n, n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      double s = map_cosine(cn.cosine(ConceptId{i}, ConceptId{j}));
      if (s < 0.5) s = 0.0;
      a(i, j) = s;
      a(j, i) = s;
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// StoreBuilder

StoreBuilder::StoreBuilder(std::size_t cn_dim, std::size_t w2v_dim)
    : cn_(Space::cn, cn_dim), w2v_(Space::w2v, w2v_dim) {
  if (cn_dim == 0 || w2v_dim == 0) throw InvalidInput("embedding dimensions must be positive");
}

ConceptId StoreBuilder::add_concept(std::string_view token, std::span<const double> cn_vector,
                                    std::span<const double> w2v_vector) {
  auto key = normalize_token(token);
  if (key.empty()) throw InvalidInput("empty concept token");
  if (index_.contains(key)) throw InvalidInput("duplicate concept token '" + key + "'");
  // Validate both before mutating either space.
  EmbeddingSpace probe_cn(Space::cn, cn_.dim()), probe_w2v(Space::w2v, w2v_.dim());
  probe_cn.append(cn_vector);
  probe_w2v.append(w2v_vector);
  cn_.append(cn_vector);
  w2v_.append(w2v_vector);
  ConceptId id{static_cast<std::uint32_t>(tokens_.size())};
  index_.emplace(key, id);
  tokens_.push_back(std::move(key));
  return id;
}

std::optional<ConceptId> StoreBuilder::find(std::string_view token) const {
  auto it = index_.find(normalize_token(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool StoreBuilder::add_assertion(std::string_view head, Relation relation, std::string_view tail, double weight) {
  if (!(weight >= 0.0) || !std::isfinite(weight)) throw InvalidInput("assertion weight must be finite and nonnegative");
  auto h = find(head);
  auto t = find(tail);
  if (!h || !t) {
    std::vector<std::string> missing;
    if (!h) missing.emplace_back(normalize_token(head));
    if (!t) missing.emplace_back(normalize_token(tail));
    throw OutOfVocabulary(std::move(missing));
  }
  for (const auto& a : assertions_)
    if (a.head == *h && a.relation == relation && a.tail == *t) return false;
  assertions_.push_back({*h, relation, *t, weight});
  return true;
}

void StoreBuilder::set_concreteness(std::string_view token, double rating) {
  if (!(rating >= 1.0 && rating <= 5.0)) throw InvalidInput("concreteness rating must lie in [1,5]");
  auto key = normalize_token(token);
  if (!index_.contains(key)) throw OutOfVocabulary(key);
  concreteness_[key] = rating;
}

void StoreBuilder::set_centrality(std::vector<double> scores) { centrality_ = std::move(scores); }

KnowledgeStore StoreBuilder::build() && {
  if (tokens_.empty()) throw InvalidInput("knowledge store has an empty vocabulary");
  KnowledgeStore store;
  const std::size_t n = tokens_.size();

  if (centrality_) {
    if (centrality_->size() != n) throw InvalidInput("centrality override has the wrong length");
    store.centrality_ = std::move(*centrality_);
    for (auto& c : store.centrality_) {
      if (!(c > 0.0) && !(c == 0.0)) throw InvalidInput("centrality scores must be nonnegative");
      c = std::clamp(c, kCentralityFloor, 1.0);
    }
  } else if (n == 1) {
    store.centrality_ = {1.0};
  } else {
    auto adjacency = centrality_adjacency(cn_);
    bool any = false;
    for (std::size_t i = 0; i < n && !any; ++i)
      for (double v : adjacency.row(i)) any = any || v > 0.0;
    if (any) {
      store.centrality_ = eigenvector_centrality(adjacency).scores;
    } else {
      store.centrality_.assign(n, 1.0);
    }
  }

  std::stable_sort(assertions_.begin(), assertions_.end(),
                   [](const Assertion& a, const Assertion& b) { return a.head < b.head; });
  store.assertion_start_.assign(n + 1, 0);
  for (const auto& a : assertions_) ++store.assertion_start_[a.head.value + 1];
  std::partial_sum(store.assertion_start_.begin(), store.assertion_start_.end(), store.assertion_start_.begin());
  for (const auto& a : assertions_)
    store.edge_weight_.emplace(KnowledgeStore::edge_key(a.head, a.relation, a.tail), a.weight);
  store.assertion_count_ = assertions_.size();
  store.assertions_ = std::move(assertions_);

  store.concreteness_.assign(n, std::nullopt);
  for (const auto& [token, rating] : concreteness_) store.concreteness_[index_.at(token).value] = rating;

  store.tokens_ = std::move(tokens_);
  store.index_ = std::move(index_);
  store.cn_ = std::move(cn_);
  store.w2v_ = std::move(w2v_);
  return store;
}

// ---------------------------------------------------------------------------
// KnowledgeStore

KnowledgeStore KnowledgeStore::load(const StorePaths& paths, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = {};

  auto cn = read_embeddings(paths.cn_embeddings);
  auto w2v = read_embeddings(paths.w2v_embeddings);
  rep.zero_vectors = cn.zero_vectors + w2v.zero_vectors;
  rep.duplicate_tokens = cn.duplicates + w2v.duplicates;

  StoreBuilder builder(cn.dim, w2v.dim);
  for (std::size_t i = 0; i < cn.tokens.size(); ++i) {
    auto it = w2v.index.find(cn.tokens[i]);
    if (it == w2v.index.end()) {
      ++rep.cn_only_tokens;
      continue;
    }
    builder.add_concept(cn.tokens[i], std::span<const double>(cn.values.data() + i * cn.dim, cn.dim),
                        std::span<const double>(w2v.values.data() + it->second * w2v.dim, w2v.dim));
  }
  rep.w2v_only_tokens = w2v.tokens.size() - builder.size();

  if (paths.assertions) {
    std::ifstream in(*paths.assertions);
    if (!in) throw InvalidInput("cannot open assertions file " + paths.assertions->string());
    std::string line;
    std::size_t line_no = 0;
    // Deduplicate here rather than via StoreBuilder's linear scan.
    std::unordered_map<std::uint64_t, bool> seen;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      auto fields = detail::split(line, '\t');
      if (fields.size() != 4) {
        throw InvalidInput(paths.assertions->string() + ":" + std::to_string(line_no) +
                           ": expected head<TAB>relation<TAB>tail<TAB>weight");
      }
      double weight = 0.0;
      if (!detail::parse_double(detail::trim(fields[3]), weight) || !std::isfinite(weight) || weight < 0.0) {
        throw InvalidInput(paths.assertions->string() + ":" + std::to_string(line_no) + ": bad weight '" +
                           std::string(fields[3]) + "'");
      }
      auto relation = parse_relation(detail::trim(fields[1]));
      if (!relation) {
        ++rep.assertions_unknown_relation;
        continue;
      }
      auto head = builder.find(strip_concept_uri(fields[0]));
      auto tail = builder.find(strip_concept_uri(fields[2]));
      if (!head || !tail) {
        ++rep.assertions_oov;
        continue;
      }
      auto key = edge_key(*head, *relation, *tail);
      if (!seen.emplace(key, true).second) {
        ++rep.assertions_duplicate;
        continue;
      }
      builder.assertions_.push_back({*head, *relation, *tail, weight});
    }
  }

  if (paths.concreteness) {
    std::ifstream in(*paths.concreteness);
    if (!in) throw InvalidInput("cannot open concreteness file " + paths.concreteness->string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (detail::trim(line).empty()) continue;
      auto fields = detail::split(line, '\t');
      double rating = 0.0;
      if (fields.size() != 2 || !detail::parse_double(detail::trim(fields[1]), rating)) {
        if (line_no == 1) continue;  // header row
        throw InvalidInput(paths.concreteness->string() + ":" + std::to_string(line_no) + ": expected token<TAB>rating");
      }
      if (!(rating >= 1.0 && rating <= 5.0)) {
        throw InvalidInput(paths.concreteness->string() + ":" + std::to_string(line_no) + ": rating outside [1,5]");
      }
      if (!builder.find(fields[0])) {
        ++rep.concreteness_oov;
        continue;
      }
      builder.set_concreteness(fields[0], rating);
    }
  }
  return std::move(builder).build();
}

void KnowledgeStore::check(ConceptId id) const {
  if (id.value >= tokens_.size()) throw OutOfVocabulary("#" + std::to_string(id.value));
}

std::uint64_t KnowledgeStore::edge_key(ConceptId head, Relation relation, ConceptId tail) noexcept {
  // 28 bits per concept leaves 8 bits for the relation.
  return (static_cast<std::uint64_t>(head.value) << 36) | (static_cast<std::uint64_t>(tail.value) << 8) |
         static_cast<std::uint64_t>(relation);
}

const std::string& KnowledgeStore::token(ConceptId id) const {
  check(id);
  return tokens_[id.value];
}

std::optional<ConceptId> KnowledgeStore::find(std::string_view token) const {
  auto it = index_.find(normalize_token(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ConceptId KnowledgeStore::id(std::string_view token) const {
  auto found = find(token);
  if (!found) throw OutOfVocabulary(normalize_token(token));
  return *found;
}

double KnowledgeStore::similarity(Space s, ConceptId a, ConceptId b) const {
  check(a);
  check(b);
  if (a == b) return 1.0;
  // Keep the argument order canonical so the result is bit-symmetric.
  if (b < a) std::swap(a, b);
  return map_cosine(space(s).cosine(a, b));
}

std::vector<ScoredConcept> KnowledgeStore::top_k_similar(Space s, ConceptId seed, std::size_t k) const {
  check(seed);
  if (k == 0) throw InvalidInput("top_k_similar: k must be at least 1");
  std::vector<ScoredConcept> all;
  all.reserve(size());
  for (std::uint32_t i = 0; i < size(); ++i) {
    ConceptId c{i};
    if (c == seed) continue;
    all.push_back({c, similarity(s, seed, c)});
  }
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
  all.resize(k);
  return all;
}

std::vector<ScoredConcept> KnowledgeStore::nearest(Space s, std::span<const double> query, std::size_t k) const {
  const auto& sp = space(s);
  if (query.size() != sp.dim()) throw DimensionMismatch("nearest: query dimension mismatch");
  const double qn = std::sqrt(dot(query, query));
  if (qn == 0.0) throw InvalidInput("nearest: zero-norm query vector");
  std::vector<ScoredConcept> all;
  all.reserve(size());
  for (std::uint32_t i = 0; i < size(); ++i) all.push_back({ConceptId{i}, map_cosine(sp.cosine(ConceptId{i}, query, qn))});
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
  all.resize(k);
  return all;
}

std::span<const Assertion> KnowledgeStore::assertions_from(ConceptId head) const {
  check(head);
  return {assertions_.data() + assertion_start_[head.value], assertions_.data() + assertion_start_[head.value + 1]};
}

std::optional<double> KnowledgeStore::assertion_weight(ConceptId head, Relation relation, ConceptId tail) const {
  auto it = edge_weight_.find(edge_key(head, relation, tail));
  if (it == edge_weight_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> KnowledgeStore::concreteness(ConceptId id) const {
  check(id);
  return concreteness_[id.value];
}

// ---------------------------------------------------------------------------

namespace {

// Adds the in-vocabulary vectors for one token; returns how many were added.
std::size_t accumulate_token(const KnowledgeStore& store, const EmbeddingSpace& sp, const std::string& raw,
                             std::vector<double>& sum) {
  auto add = [&](ConceptId id) {
    auto v = sp.vector(id);
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  };
  if (auto id = store.find(raw)) {
    add(*id);
    return 1;
  }
  std::size_t n = 0;
  auto key = normalize_token(raw);
  if (key.find('_') == std::string::npos) return 0;
  for (auto part : detail::split(key, '_')) {
    if (part.empty()) continue;
    if (auto id = store.find(part)) {
      add(*id);
      ++n;
    }
  }
  return n;
}

}  // namespace

double phrase_similarity(const KnowledgeStore& store, std::span<const std::string> tokens_a,
                         std::span<const std::string> tokens_b, Space space) {
  const auto& sp = store.space(space);
  std::vector<double> a(sp.dim(), 0.0), b(sp.dim(), 0.0);
  std::size_t na = 0, nb = 0;
  for (const auto& t : tokens_a) na += accumulate_token(store, sp, t, a);
  for (const auto& t : tokens_b) nb += accumulate_token(store, sp, t, b);
  if (na == 0 || nb == 0) {
    std::vector<std::string> missing;
    if (na == 0) missing.insert(missing.end(), tokens_a.begin(), tokens_a.end());
    if (nb == 0) missing.insert(missing.end(), tokens_b.begin(), tokens_b.end());
    throw OutOfVocabulary(std::move(missing));
  }
  // The mean and the sum point the same way; dividing keeps the arithmetic literal.
  for (auto& v : a) v /= static_cast<double>(na);
  for (auto& v : b) v /= static_cast<double>(nb);
  return cosine_similarity(a, b);
}

}  // namespace linkinfer::kg
