#include "cfpo/landscape.hpp"

#include "cfpo/errors.hpp"
#include "cfpo/util.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cfpo {

namespace {

double seeded_gaussian(std::uint64_t seed) {
  // Box-Muller on two rejection-sampled uniforms; bit-stable across
  // standard libraries, unlike std::normal_distribution.
  auto rng = make_rng(seed);
  double u1 = rng_unit(rng);
  double u2 = rng_unit(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double mean_score(const FormatPoolEntry& e) {
  return e.n > 0 ? e.q / static_cast<double>(e.n) : 0.0;
}

FormatSpec dummy_query_format(const std::string& name) {
  FormatSpec spec;
  spec.name = name;
  spec.kind = ComponentKind::QueryFormat;
  spec.description = "synthetic landscape arm";
  spec.program = QueryFormatProgram{};
  return spec;
}

/// Pool argmax by mean score with the same tie-break as select_top_k.
std::string pool_choice(const FormatPool& pool) {
  const FormatPoolEntry* best = nullptr;
  for (const FormatPoolEntry* e : pool.entries(ComponentKind::QueryFormat)) {
    if (e->n < 1) continue;
    if (!best || mean_score(*e) > mean_score(*best) ||
        (mean_score(*e) == mean_score(*best) && e->spec.name < best->spec.name)) {
      best = e;
    }
  }
  if (!best) fail(Errc::EmptyPool, "no visited entry in landscape pool");
  return best->spec.name;
}

}  // namespace

const std::string& SyntheticLandscape::dominant_format() const {
  if (format_bonus.empty()) fail(Errc::ConfigError, "landscape has no formats");
  const std::string* best = nullptr;
  double best_bonus = 0.0;
  bool tied = false;
  for (const auto& [name, bonus] : format_bonus) {
    if (!best || bonus > best_bonus) {
      best = &name;
      best_bonus = bonus;
      tied = false;
    } else if (bonus == best_bonus) {
      tied = true;
    }
  }
  if (tied) fail(Errc::ConfigError, "landscape maximum bonus is not unique");
  return *best;
}

double SyntheticLandscape::true_metric(const std::string& format_name) const {
  auto it = format_bonus.find(format_name);
  if (it == format_bonus.end()) fail(Errc::UnknownFormat, "not on landscape: " + format_name);
  return std::clamp(content_base + it->second, 0.0, 1.0);
}

double SyntheticLandscape::metric(const std::string& format_name, long draw_index) const {
  const double noise =
      noise_scale == 0.0
          ? 0.0
          : noise_scale * seeded_gaussian(
                              derive_seed(seed, {"noise", format_name, std::to_string(draw_index)}));
  return std::clamp(true_metric(format_name) + noise, 0.0, 1.0);
}

SyntheticLandscape make_landscape(int n_formats, std::uint64_t seed, double noise_scale,
                                  double spread) {
  if (n_formats < 2) fail(Errc::ConfigError, "landscape needs at least two formats");
  SyntheticLandscape landscape;
  landscape.seed = seed;
  landscape.noise_scale = noise_scale;

  auto rng = make_rng(derive_seed(seed, {"bonuses"}));
  const std::size_t dominant = rng_below(rng, static_cast<std::size_t>(n_formats));
  for (int i = 0; i < n_formats; ++i) {
    char name[8];
    std::snprintf(name, sizeof name, "F%02d", i);
    // Non-dominant bonuses cluster in [0.80, 0.95] of the spread: close
    // enough below the dominant arm that one noisy draw can bury it, which
    // is the regime that separates the selection strategies.
    const double bonus = static_cast<std::size_t>(i) == dominant
                             ? spread
                             : spread * (0.80 + 0.15 * rng_unit(rng));
    landscape.format_bonus[name] = bonus;
  }
  return landscape;
}

const char* strategy_name(SelectionStrategy s) {
  switch (s) {
    case SelectionStrategy::Uct: return "uct";
    case SelectionStrategy::Greedy: return "greedy";
    case SelectionStrategy::Random: return "random";
  }
  fail(Errc::ConfigError, "unknown strategy");
}

SelectionTrialResult run_selection_trial(const SyntheticLandscape& landscape,
                                         SelectionStrategy strategy, int rounds, int k,
                                         double alpha, std::uint64_t trial_seed) {
  if (rounds < 1 || k < 1) fail(Errc::ConfigError, "rounds and k must be >= 1");

  FormatPool pool(strategy == SelectionStrategy::Greedy ? 0.0 : alpha);
  std::vector<std::string> names;
  std::map<std::string, long> draws;
  for (const auto& [name, bonus] : landscape.format_bonus) {
    pool.add(dummy_query_format(name));
    names.push_back(name);
  }

  auto observe = [&](const std::string& name) {
    pool.update(name, landscape.metric(name, draws[name]++));
  };

  // Initialization sweep: every arm visited once.
  for (const std::string& name : names) observe(name);

  auto rng = make_rng(derive_seed(trial_seed, {"random-arms"}));
  const std::string& dominant = landscape.dominant_format();
  int discovery_round = rounds;

  for (int round = 0; round < rounds; ++round) {
    if (strategy == SelectionStrategy::Random) {
      for (std::size_t idx : sample_indices(
               names.size(), std::min<std::size_t>(names.size(), static_cast<std::size_t>(k)), rng))
        observe(names[idx]);
    } else {
      for (const FormatSpec& spec : select_top_k(pool, ComponentKind::QueryFormat, k))
        observe(spec.name);
    }
    if (discovery_round == rounds && pool_choice(pool) == dominant) discovery_round = round;
  }

  SelectionTrialResult result;
  result.discovery_round = discovery_round;
  result.final_metric = landscape.true_metric(pool_choice(pool));
  return result;
}

std::vector<StrategySummary> run_ablation(const AblationConfig& cfg) {
  if (cfg.trials < 1) fail(Errc::ConfigError, "trials must be >= 1");

  const SelectionStrategy strategies[] = {SelectionStrategy::Uct, SelectionStrategy::Greedy,
                                          SelectionStrategy::Random};
  std::vector<StrategySummary> summaries;
  for (SelectionStrategy strategy : strategies) {
    std::vector<double> metrics;
    double discovery_sum = 0.0;
    for (int t = 0; t < cfg.trials; ++t) {
      const std::uint64_t trial_seed = derive_seed(cfg.seed, {"trial", std::to_string(t)});
      const SyntheticLandscape landscape =
          make_landscape(cfg.n_formats, trial_seed, cfg.noise_scale);
      const SelectionTrialResult r =
          run_selection_trial(landscape, strategy, cfg.rounds, cfg.k, cfg.alpha, trial_seed);
      metrics.push_back(r.final_metric);
      discovery_sum += r.discovery_round;
    }
    StrategySummary s;
    s.strategy = strategy;
    double sum = 0.0;
    for (double m : metrics) sum += m;
    s.mean_final_metric = sum / metrics.size();
    double var = 0.0;
    for (double m : metrics) var += (m - s.mean_final_metric) * (m - s.mean_final_metric);
    var = metrics.size() > 1 ? var / (metrics.size() - 1) : 0.0;
    s.se_final_metric = std::sqrt(var / metrics.size());
    s.mean_discovery_round = discovery_sum / cfg.trials;
    summaries.push_back(s);
  }
  return summaries;
}

}  // namespace cfpo
