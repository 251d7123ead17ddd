#pragma once

// Automatic evaluation by embedding similarity, and the two centroid
// baselines (seed centroid "VB", ranked-target centroid "RR").

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "linkinfer/kgraph.hpp"
#include "linkinfer/pipeline.hpp"
#include "linkinfer/theta.hpp"

namespace linkinfer::eval {

inline constexpr std::size_t kScoredAnswers = 10;

struct RiddleScore {
  std::string riddle_id;
  /// Raw w2v cosine in [-1,1]; meaningless when excluded.
  double max_sim = 0.0;
  std::string best_answer;
  /// Set when the groundtruth is missing or fully out of vocabulary.
  bool excluded = false;
  std::string exclusion_reason;
};

/// Best phrase similarity between the groundtruth and the top 10 answers.
/// Out-of-vocabulary answers count as -1. The riddle is marked excluded,
/// never scored 0, when the groundtruth has no usable token. Throws
/// InvalidInput when `answers` is empty.
RiddleScore score_riddle(const std::string& riddle_id, std::span<const std::string> answers,
                         std::span<const std::string> groundtruth, const kg::KnowledgeStore& store);
RiddleScore score_riddle(const std::string& riddle_id, const pipeline::AnswerList& answers,
                         std::span<const std::string> groundtruth, const kg::KnowledgeStore& store);

/// 100 * mean max_sim over the riddles that are not excluded. Throws
/// InvalidInput when nothing is left to average.
double dataset_accuracy(std::span<const RiddleScore> scores);

/// TSV `riddle_id TAB max_sim TAB best_answer`, excluded riddles as
/// `riddle_id TAB EXCLUDED TAB reason`, then `TOTAL TAB accuracy`
/// (or `TOTAL TAB NA` when nothing was scored).
void write_report(std::ostream& out, std::span<const RiddleScore> scores);

/// Mean over images of the confidence-weighted w2v centroid of the seeds;
/// the k nearest concepts to it scored by mapped cosine.
pipeline::AnswerList baseline_vb(const pipeline::Riddle& riddle, const kg::KnowledgeStore& store,
                                 std::size_t k = kScoredAnswers);

/// Mean over images of the mean w2v vector of each image's top
/// theta.rr_targets ranked targets; the k nearest concepts to it.
pipeline::AnswerList baseline_rr(const pipeline::Riddle& riddle, const kg::KnowledgeStore& store,
                                 const ThetaConfig& theta, std::size_t k = kScoredAnswers);

}  // namespace linkinfer::eval
