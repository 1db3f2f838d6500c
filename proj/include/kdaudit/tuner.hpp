#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kdaudit/distill.hpp"
#include "kdaudit/mlp.hpp"

namespace kdaudit {

/// Candidate values per hyperparameter. The search is the full Cartesian
/// product; a singleton list pins that parameter.
struct TuneGrid {
    std::vector<double> lr_stg1;
    std::vector<double> lr_stg2;
    std::vector<std::size_t> batch;
    std::vector<std::size_t> epochs_stg1;
    std::vector<std::size_t> epochs_stg2;
    std::vector<double> weight_decay;

    std::size_t num_combinations() const;
};

void validate(const TuneGrid& g);

/// The stock search space: stage-2 epochs {2..6}, stage-2 rates from 3e-6
/// to 8e-4, batches 28..40, decay 1e-4..5e-2; stage-1 settings pinned to
/// the baseline. 1050 combinations.
TuneGrid default_grid(const DistillConfig& baseline);

/// Grid file: keys lr_stg1, lr_stg2, batch, epochs_stg1, epochs_stg2,
/// weight_decay, each a comma-separated list. Missing keys pin to the
/// baseline value; unknown keys are rejected.
TuneGrid grid_from_kv(const KvPairs& kv, const DistillConfig& baseline);
TuneGrid load_grid(const std::string& path, const DistillConfig& baseline);

struct Trial {
    std::size_t index;    // 0 is the baseline configuration
    DistillConfig config;
    double sigma;         // train-split confidence spread (nan if training diverged)
    double acc;           // eval-split student accuracy
    bool holds;           // sigma <= kappa
    bool feasible;        // acc >= baseline acc - max_acc_drop
};

/// Index of the winning trial: minimum sigma among feasible ones, ties
/// broken by higher accuracy, then by lower index. Empty when nothing is
/// feasible.
std::optional<std::size_t> select_best(const std::vector<Trial>& trials);

struct TuneOutcome {
    std::optional<DistillConfig> best_config; // absent unless the winner holds
    double best_sigma = 0.0;
    double best_acc = 0.0;
    double baseline_sigma = 0.0;
    double baseline_acc = 0.0;
    double kappa = 0.0;
    double max_acc_drop = 0.0;
    std::vector<Trial> trials;
};

/// Distills once per grid point (baseline first as trial 0); each student's
/// spread is audited on the train split and its accuracy on the eval split.
/// Stage-1 runs are shared between trials that agree on every stage-1
/// hyperparameter. A trial whose training diverges is kept, marked
/// infeasible with nan sigma. `max_trials` caps the number of grid trials
/// on top of the baseline.
TuneOutcome tune(const MlpModel& teacher, const std::vector<LabeledPoint>& train,
                 const std::vector<LabeledPoint>& eval_pts,
                 const std::vector<std::size_t>& student_dims, const TuneGrid& grid,
                 double kappa, double max_acc_drop, const DistillConfig& baseline,
                 std::optional<std::size_t> max_trials = std::nullopt);

std::string render_outcome(const TuneOutcome& o);

struct SplitMetrics {
    double acc = 0.0;
    double sigma = 0.0;
    bool holds = false;
};

/// Baseline-vs-tuned audit on both splits, each config distilled from
/// scratch with its own settings.
struct TunedComparison {
    SplitMetrics base_train, base_eval;
    SplitMetrics tuned_train, tuned_eval;
    double kappa = 0.0;
};

TunedComparison compare_tuned(const MlpModel& teacher,
                              const std::vector<LabeledPoint>& train,
                              const std::vector<LabeledPoint>& eval_pts,
                              const std::vector<std::size_t>& student_dims,
                              const DistillConfig& baseline, const DistillConfig& tuned,
                              double kappa);

std::string render_comparison(const TunedComparison& c);

} // namespace kdaudit
