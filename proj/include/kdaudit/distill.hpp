#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kdaudit/kv.hpp"
#include "kdaudit/logits_io.hpp"
#include "kdaudit/mlp.hpp"
#include "kdaudit/rng.hpp"

namespace kdaudit {

/// Hyperparameters of the two-stage distillation. Stage 1 is plain
/// cross-entropy training of the student (initialization); stage 2
/// optimizes the blended prediction-layer loss against the fixed teacher.
/// train_teacher uses the stage-1 rate and epoch count.
struct DistillConfig {
    double alpha = 0.0;           // label-loss mix; 0 = pure logit matching
    double gamma = 1.0;           // softmax inverse temperature
    double lr_stg1 = 0.1;
    double lr_stg2 = 3e-5;
    std::size_t batch = 32;
    std::size_t epochs_stg1 = 20;
    std::size_t epochs_stg2 = 3;
    double weight_decay = 1e-4;   // applied to weights only, not biases
    std::uint64_t seed = 1;
};

void validate(const DistillConfig& cfg);

/// Flat key = value text, keys matching the field names. Missing keys take
/// the defaults above; unknown keys are rejected.
DistillConfig config_from_kv(const KvPairs& kv);
DistillConfig load_config(const std::string& path);
std::string config_text(const DistillConfig& cfg);  // multi-line, reloadable
std::string config_line(const DistillConfig& cfg);  // single line, comma-separated

struct EpochRecord {
    std::size_t epoch;          // contiguous from 1
    double mean_batch_loss;     // average of per-batch mean losses
    double sum_loss_full_train; // stage objective, sum form, on the full train set
    double train_accuracy;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

std::string train_log_csv(const TrainLog& log);

enum class Reduction { sum, mean };

/// What a gradient/loss evaluation optimizes: alpha blends the label
/// cross-entropy (softmax at `gamma`) with squared logit matching against
/// `teacher`. teacher may be null only when alpha == 1.
struct LossSpec {
    double alpha = 0.0;
    double gamma = 1.0;
    const MlpModel* teacher = nullptr;
    Reduction reduction = Reduction::sum;
};

double evaluate_loss(const MlpModel& model, std::span<const LabeledPoint> batch,
                     const LossSpec& spec);

/// The blended prediction-layer loss over a batch:
///   alpha * sum(-log softmax(student)_label) + (1-alpha) * sum ||z_t - z_s||^2
/// mean reduction divides both terms by the batch size.
double prediction_loss(std::span<const LabeledPoint> batch, const MlpModel& teacher,
                       const MlpModel& student, double alpha, double gamma,
                       Reduction reduction);

struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

/// Analytic gradients of evaluate_loss w.r.t. every model parameter.
Gradients backward(const MlpModel& model, std::span<const LabeledPoint> batch,
                   const LossSpec& spec);

/// SGD on plain cross-entropy (lr_stg1, epochs_stg1), seeded init and
/// shuffling. Throws Error when the loss diverges.
std::pair<MlpModel, TrainLog> train_teacher(const std::vector<LabeledPoint>& data,
                                            const std::vector<std::size_t>& dims,
                                            const DistillConfig& cfg);

/// Stage-1 output plus the exact RNG position, so stage 2 can resume
/// bit-identically (lets a tuner reuse one stage-1 run across trials).
struct Stage1Result {
    MlpModel student;
    SplitMix64 rng;
    TrainLog log;
};

/// Cross-entropy initialization training of the student. When
/// `teacher_for_log` is given, the per-epoch sum-form loss is logged as the
/// blended loss against that teacher (cfg.alpha); otherwise as the CE sum.
Stage1Result distill_stage1(const MlpModel* teacher_for_log,
                            const std::vector<LabeledPoint>& data,
                            const std::vector<std::size_t>& student_dims,
                            const DistillConfig& cfg);

/// Prediction-layer distillation (batch-mean blended loss, lr_stg2,
/// epochs_stg2) starting from a stage-1 snapshot.
std::pair<MlpModel, TrainLog> distill_stage2(const MlpModel& teacher,
                                             const std::vector<LabeledPoint>& data,
                                             const Stage1Result& stage1,
                                             const DistillConfig& cfg);

/// Both stages back to back. The log covers stage 1 then stage 2 with
/// contiguous epoch numbers; sum_loss_full_train is the blended loss
/// against the teacher throughout, which is what bound checks consume.
std::pair<MlpModel, TrainLog> distill(const MlpModel& teacher,
                                      const std::vector<LabeledPoint>& data,
                                      const std::vector<std::size_t>& student_dims,
                                      const DistillConfig& cfg);

/// One record per point, ids "0", "1", ... in order, labels carried through.
PairedDataset export_pairs(const MlpModel& teacher, const MlpModel& student,
                           const std::vector<LabeledPoint>& data, Split tag);

} // namespace kdaudit
