#pragma once

// End-to-end riddle solving: ingest detections, correct seed weights, retrieve
// and rank targets per image, infer per image (Stage I), then infer jointly
// across images (Stage II).

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "linkinfer/hlmrf.hpp"
#include "linkinfer/kgraph.hpp"
#include "linkinfer/rules.hpp"
#include "linkinfer/theta.hpp"

namespace linkinfer::pipeline {

inline constexpr std::size_t kImagesPerRiddle = 4;
inline constexpr double kDefaultConcreteness = 3.0;

/// Seed-weight correction applied before retrieval.
enum class Variant { ur, gur, bur };
/// How far the pipeline runs: centroid baseline, retrieval baseline, or full inference.
enum class StageCut { vb, rr, all };

std::string_view to_string(Variant v) noexcept;
std::string_view to_string(StageCut c) noexcept;
/// Case-insensitive ("gur", "GUR"). Throws InvalidInput.
Variant parse_variant(std::string_view text);
StageCut parse_stage_cut(std::string_view text);

struct IngestWarning {
  int image = 0;
  std::string label;
  std::string reason;
};

struct Riddle {
  std::string id;
  std::vector<rules::SeedSet> images;
  std::vector<std::string> classifier_tags;  // one per image, may be empty strings
  std::vector<std::string> groundtruth;      // normalized tokens; empty when absent
  std::vector<IngestWarning> warnings;
};

/// Parses the riddle JSON, resolving labels against `store`. Labels that are
/// not in the vocabulary (or repeat within an image) are dropped with a
/// warning; confidences are clamped to [0,1]. Throws InvalidInput unless
/// there are exactly four images, each with at least one resolved seed.
Riddle parse_riddle(std::string_view json_text, const kg::KnowledgeStore& store, std::string_view fallback_id = "riddle");
Riddle ingest_riddle(const std::filesystem::path& path, const kg::KnowledgeStore& store);

/// Just the id and normalized groundtruth of a riddle file; the detections
/// are not resolved.
struct RiddleHeader {
  std::string id;
  std::vector<std::string> groundtruth;
};
RiddleHeader parse_riddle_header(std::string_view json_text, std::string_view fallback_id = "riddle");
RiddleHeader read_riddle_header(const std::filesystem::path& path);

/// Images sorted by their seed lists and seeds sorted by concept id, so the
/// pipeline result does not depend on input order.
Riddle canonicalize(Riddle riddle);

/// Confidences divided by their sum. Throws InvalidInput if they are all zero.
rules::SeedSet reweight_ur(const rules::SeedSet& seeds);

/// Cross-image reweighting: a seed's weight is the mean over images of the
/// cosine between its cn-similarity profile to that image's seeds and that
/// image's confidences; weights are then normalized per image. A zero vector
/// contributes 0.
Riddle reweight_gur(const Riddle& riddle, const kg::KnowledgeStore& store);

/// Per-seed specificity inputs, aligned with SeedSet::seeds.
struct BurScores {
  std::vector<double> ecs;
  std::vector<double> cr;
  /// Mean of min-max normalized ECS and min-max normalized -CR; high means general.
  std::vector<double> cs;
};

/// Mass flows from general to specific seeds along these edges.
struct BurFlowGraph {
  /// Seed indices by decreasing CS, ties by ascending concept id.
  std::vector<std::size_t> order;
  /// (from, to) seed indices; `from` precedes `to` in `order`.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<double> resources;
};

struct BurAnalysis {
  BurScores scores;
  BurFlowGraph graph;
  /// Variable i is the weight of seed i.
  hlmrf::HlMrfProblem lp;
  /// LP solution before normalization.
  std::vector<double> weights;
  double objective = 0.0;
};

BurScores bur_scores(const rules::SeedSet& seeds, const kg::KnowledgeStore& store);
/// Scans seeds by decreasing CS; each seed is linked from its nearest
/// predecessor whose cn similarity to it exceeds theta.sim_ss.
BurFlowGraph bur_graph(const rules::SeedSet& seeds, const BurScores& scores, const kg::KnowledgeStore& store,
                       const ThetaConfig& theta);
/// min sum_{(u,v)} max{w_u - w_v, 0} s.t. sum w = sum P, w_u = P(u) off the
/// graph, w_u >= P(u) / 2 on it.
hlmrf::HlMrfProblem bur_problem(const rules::SeedSet& seeds, const BurFlowGraph& graph);
BurAnalysis analyze_bur(const rules::SeedSet& seeds, const kg::KnowledgeStore& store, const ThetaConfig& theta);
rules::SeedSet reweight_bur(const rules::SeedSet& seeds, const kg::KnowledgeStore& store, const ThetaConfig& theta);

Riddle reweight(const Riddle& riddle, Variant variant, const kg::KnowledgeStore& store, const ThetaConfig& theta);

/// Per-seed retrieval plus the visual-similarity matrix of every seed against
/// the union of retrieved targets.
struct Retrieval {
  std::vector<std::vector<kg::ScoredConcept>> per_seed;
  /// Union of retrieved targets, ascending id.
  std::vector<kg::ConceptId> targets;
  /// seeds x targets.
  kg::DenseMatrix wm;
};

Retrieval retrieve(const rules::SeedSet& seeds, const kg::KnowledgeStore& store, const ThetaConfig& theta);

/// Scores each retrieved target by the cosine of its W_m column with the seed
/// confidences, drops zero columns and keeps the best theta.num_targets.
rules::TargetCandidateSet rank_targets(const rules::SeedSet& seeds, const Retrieval& retrieval,
                                       const ThetaConfig& theta);

struct AnswerList {
  std::vector<kg::ScoredConcept> entries;
};

/// TSV rows `rank TAB token TAB score`, rank from 1.
void write_answers(std::ostream& out, const AnswerList& answers, const kg::KnowledgeStore& store);
/// Tokens of an answer TSV in rank order.
std::vector<std::string> read_answer_tokens(std::istream& in);

struct StageStats {
  std::size_t variables = 0;
  std::size_t seed_target_terms = 0;
  std::size_t pair_terms = 0;
  std::size_t constraints = 0;
  hlmrf::SolveStats solve;
};

struct ImageTrace {
  rules::SeedSet seeds;
  Retrieval retrieval;
  rules::TargetCandidateSet candidates;
  std::optional<StageStats> stage1;
  /// Stage-I scores by rank.
  std::vector<kg::ScoredConcept> stage1_scores;
  std::vector<kg::ScoredConcept> survivors;
};

struct RiddleTrace {
  Riddle weighted;
  std::vector<ImageTrace> images;
  StageStats stage2;
  std::vector<kg::ScoredConcept> stage2_scores;
};

/// Retrieval, ranking and Stage I for one (already reweighted) image.
ImageTrace infer_image(const rules::SeedSet& seeds, const kg::KnowledgeStore& store, const ThetaConfig& theta);

/// Full inference. The answer list holds every Stage-II target by score
/// (ties by ascending id), padded with the best-ranked remaining candidates
/// at score 0 up to theta.answer_count.
AnswerList solve_riddle(const Riddle& riddle, const kg::KnowledgeStore& store, const ThetaConfig& theta,
                        Variant variant, RiddleTrace* trace = nullptr);

}  // namespace linkinfer::pipeline
