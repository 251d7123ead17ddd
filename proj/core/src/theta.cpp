#include "linkinfer/theta.hpp"

#include <cmath>
#include <limits>

#include "linkinfer/error.hpp"
#include "text_util.hpp"

namespace linkinfer {

namespace {

double to_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  if (!detail::parse_double(detail::trim(text), v) || !std::isfinite(v))
    throw InvalidInput("theta " + std::string(key) + ": not a number: '" + std::string(text) + "'");
  return v;
}

long long to_int(std::string_view key, std::string_view text) {
  long long v = 0;
  if (!detail::parse_integer(detail::trim(text), v))
    throw InvalidInput("theta " + std::string(key) + ": not an integer: '" + std::string(text) + "'");
  return v;
}

std::size_t to_count(std::string_view key, std::string_view text) {
  const long long v = to_int(key, text);
  if (v < 1) throw InvalidInput("theta " + std::string(key) + " must be at least 1");
  return static_cast<std::size_t>(v);
}

void require(bool ok, const char* message) {
  if (!ok) throw InvalidInput(std::string("theta: ") + message);
}

}  // namespace

void ThetaConfig::set(std::string_view key, std::string_view value) {
  ThetaConfig next = *this;
  if (key == "num_targets") next.num_targets = to_count(key, value);
  else if (key == "alpha1") next.alpha1 = to_real(key, value);
  else if (key == "alpha2") next.alpha2 = to_real(key, value);
  else if (key == "tt") {
    const long long v = to_int(key, value);
    require(v >= 0, "tt must be nonnegative");
    next.tt = static_cast<std::size_t>(v);
  }
  else if (key == "sim_psl1") next.sim_psl1 = to_real(key, value);
  else if (key == "sum1") next.sum1 = to_real(key, value);
  else if (key == "sum2") next.sum2 = to_real(key, value);
  else if (key == "sim_ss") next.sim_ss = to_real(key, value);
  else if (key == "tol") next.tol = to_real(key, value);
  else if (key == "max_iter") {
    const long long v = to_int(key, value);
    require(v >= 1 && v <= std::numeric_limits<int>::max(), "max_iter must be a positive int");
    next.max_iter = static_cast<int>(v);
  }
  else if (key == "retrieve_pool") next.retrieve_pool = to_count(key, value);
  else if (key == "retrieve_keep") next.retrieve_keep = to_count(key, value);
  else if (key == "survivor_threshold") next.survivor_threshold = to_real(key, value);
  else if (key == "survivor_cap") next.survivor_cap = to_count(key, value);
  else if (key == "rr_targets") next.rr_targets = to_count(key, value);
  else if (key == "answer_count") next.answer_count = to_count(key, value);
  else throw InvalidInput("theta: unknown key '" + std::string(key) + "'");
  next.validate();
  *this = next;
}

void ThetaConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw InvalidInput("theta: expected key=value, got '" + std::string(assignment) + "'");
  set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void ThetaConfig::validate() const {
  require(num_targets >= 1, "num_targets must be at least 1");
  require(alpha1 >= 0.0 && alpha2 >= 0.0, "alpha1 and alpha2 must be nonnegative");
  require(alpha1 + alpha2 > 0.0, "alpha1 + alpha2 must be positive");
  require(sim_psl1 >= 0.0 && sim_psl1 <= 1.0, "sim_psl1 must lie in [0,1]");
  require(sum1 == 1.0 || sum1 == 2.0, "sum1 must be 1 or 2");
  require(sum2 == 1.0, "sum2 is fixed at 1");
  require(sim_ss >= 0.0 && sim_ss <= 1.0, "sim_ss must lie in [0,1]");
  require(tol > 0.0 && tol < 1.0, "tol must lie in (0,1)");
  require(max_iter >= 1, "max_iter must be positive");
  require(retrieve_keep >= 1 && retrieve_pool >= retrieve_keep, "need retrieve_pool >= retrieve_keep >= 1");
  require(survivor_threshold >= 0.0 && survivor_threshold < 1.0, "survivor_threshold must lie in [0,1)");
  require(survivor_cap >= 1, "survivor_cap must be at least 1");
  require(rr_targets >= 1, "rr_targets must be at least 1");
  require(answer_count >= 1, "answer_count must be at least 1");
}

std::vector<std::pair<std::string, std::string>> ThetaConfig::entries() const {
  using detail::format_double;
  auto count = [](std::size_t v) { return std::to_string(v); };
  return {
      {"num_targets", count(num_targets)},
      {"alpha1", format_double(alpha1)},
      {"alpha2", format_double(alpha2)},
      {"tt", count(tt)},
      {"sim_psl1", format_double(sim_psl1)},
      {"sum1", format_double(sum1)},
      {"sum2", format_double(sum2)},
      {"sim_ss", format_double(sim_ss)},
      {"tol", format_double(tol)},
      {"max_iter", std::to_string(max_iter)},
      {"retrieve_pool", count(retrieve_pool)},
      {"retrieve_keep", count(retrieve_keep)},
      {"survivor_threshold", format_double(survivor_threshold)},
      {"survivor_cap", count(survivor_cap)},
      {"rr_targets", count(rr_targets)},
      {"answer_count", count(answer_count)},
  };
}

}  // namespace linkinfer
