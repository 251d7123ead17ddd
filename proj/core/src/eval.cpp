#include "linkinfer/eval.hpp"

#include <algorithm>
#include <ostream>

#include "linkinfer/error.hpp"
#include "text_util.hpp"

namespace linkinfer::eval {

using kg::KnowledgeStore;
using pipeline::AnswerList;
using pipeline::Riddle;

RiddleScore score_riddle(const std::string& riddle_id, std::span<const std::string> answers,
                         std::span<const std::string> groundtruth, const KnowledgeStore& store) {
  if (answers.empty()) throw InvalidInput("score_riddle: riddle " + riddle_id + " has no answers");
  RiddleScore r{riddle_id, -1.0, "", false, ""};
  if (groundtruth.empty()) {
    r.excluded = true;
    r.exclusion_reason = "no groundtruth";
    return r;
  }
  // Probe the groundtruth against itself so an unusable one is told apart
  // from unusable answers.
  try {
    kg::phrase_similarity(store, groundtruth, groundtruth);
  } catch (const OutOfVocabulary&) {
    r.excluded = true;
    r.exclusion_reason = "groundtruth out of vocabulary";
    return r;
  }

  const std::size_t n = std::min(kScoredAnswers, answers.size());
  bool have_best = false;
  for (std::size_t i = 0; i < n; ++i) {
    double sim = -1.0;
    try {
      const std::string one[] = {answers[i]};
      sim = kg::phrase_similarity(store, one, groundtruth);
    } catch (const OutOfVocabulary&) {
    }
    // Strictly greater keeps the earliest answer among equals.
    if (!have_best || sim > r.max_sim) {
      r.max_sim = sim;
      r.best_answer = answers[i];
      have_best = true;
    }
  }
  return r;
}

RiddleScore score_riddle(const std::string& riddle_id, const AnswerList& answers,
                         std::span<const std::string> groundtruth, const KnowledgeStore& store) {
  std::vector<std::string> tokens;
  for (const auto& e : answers.entries) tokens.push_back(store.token(e.id));
  return score_riddle(riddle_id, tokens, groundtruth, store);
}

double dataset_accuracy(std::span<const RiddleScore> scores) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : scores) {
    if (s.excluded) continue;
    sum += s.max_sim;
    ++n;
  }
  if (n == 0) throw InvalidInput("dataset_accuracy: no scored riddles");
  return 100.0 * sum / static_cast<double>(n);
}

void write_report(std::ostream& out, std::span<const RiddleScore> scores) {
  bool any = false;
  for (const auto& s : scores) {
    if (s.excluded) {
      out << s.riddle_id << "\tEXCLUDED\t" << s.exclusion_reason << '\n';
    } else {
      out << s.riddle_id << '\t' << detail::format_fixed(s.max_sim, 6) << '\t' << s.best_answer << '\n';
      any = true;
    }
  }
  out << "TOTAL\t" << (any ? detail::format_fixed(dataset_accuracy(scores), 4) : std::string("NA")) << '\n';
}

namespace {

AnswerList nearest_answers(const KnowledgeStore& store, std::span<const double> query, std::size_t k) {
  return AnswerList{store.nearest(kg::Space::w2v, query, k)};
}

void add_scaled(std::vector<double>& acc, std::span<const double> v, double factor) {
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += factor * v[i];
}

}  // namespace

AnswerList baseline_vb(const Riddle& riddle, const KnowledgeStore& store, std::size_t k) {
  if (riddle.images.empty()) throw InvalidInput("baseline_vb: riddle has no images");
  const auto& w2v = store.space(kg::Space::w2v);
  std::vector<double> mean(w2v.dim(), 0.0);
  for (const auto& img : riddle.images) {
    img.validate();
    double total = 0.0;
    for (const auto& s : img.seeds) total += s.confidence;
    if (!(total > 0.0)) throw InvalidInput("baseline_vb: image with all-zero confidences");
    std::vector<double> centroid(w2v.dim(), 0.0);
    for (const auto& s : img.seeds) add_scaled(centroid, w2v.vector(s.id), s.confidence / total);
    add_scaled(mean, centroid, 1.0 / static_cast<double>(riddle.images.size()));
  }
  return nearest_answers(store, mean, k);
}

AnswerList baseline_rr(const Riddle& riddle, const KnowledgeStore& store, const ThetaConfig& theta, std::size_t k) {
  const auto& w2v = store.space(kg::Space::w2v);
  std::vector<std::vector<double>> centroids;
  for (const auto& img : riddle.images) {
    const auto candidates = pipeline::rank_targets(img, pipeline::retrieve(img, store, theta), theta);
    const std::size_t n = std::min(theta.rr_targets, candidates.targets.size());
    if (n == 0) continue;
    std::vector<double> c(w2v.dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) add_scaled(c, w2v.vector(candidates.targets[i]), 1.0 / static_cast<double>(n));
    centroids.push_back(std::move(c));
  }
  if (centroids.empty()) throw InvalidInput("baseline_rr: no image produced ranked targets");
  std::vector<double> mean(w2v.dim(), 0.0);
  for (const auto& c : centroids) add_scaled(mean, c, 1.0 / static_cast<double>(centroids.size()));
  return nearest_answers(store, mean, k);
}

}  // namespace linkinfer::eval
