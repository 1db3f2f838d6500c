#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdaudit/logits_io.hpp"

namespace kdaudit {

struct ProbVector {
    std::vector<double> probs;
};

/// Softmax with inverse temperature `gamma`: p_i = exp(g*z_i) / sum_j exp(g*z_j).
/// Subtracts the max before exponentiating so huge logits cannot overflow.
ProbVector softmax(std::span<const double> logits, double gamma);

struct Confidence {
    double value;      // max softmax probability
    std::size_t index; // argmax class; ties go to the lowest index
};

Confidence confidence(std::span<const double> logits, double gamma);

/// Student-minus-teacher confidence difference. Defined only when both
/// models predict the same class; otherwise the value is absent.
struct PairwiseDiff {
    std::optional<double> value;
    bool agreed() const { return value.has_value(); }
};

PairwiseDiff pairwise_diff(const PairedLogitRecord& rec, double gamma);

/// How records with absent differences (argmax disagreement) enter the
/// spread: `zero` counts them as 0 with the full denominator, `exclude`
/// drops them and divides by the agreement count.
enum class BotPolicy { zero, exclude };

std::string bot_policy_name(BotPolicy p);
BotPolicy bot_policy_from_name(const std::string& name);

struct SigmaResult {
    double sigma = 0.0;
    std::size_t n_total = 0;
    std::size_t n_agree = 0;
    std::size_t n_disagree = 0;
    BotPolicy bot_policy = BotPolicy::zero;
};

/// Root-mean-square of the pairwise confidence differences over the
/// dataset. Summation is compensated, so the result is independent of
/// record order to well below 1e-12.
SigmaResult confidence_spread(const PairedDataset& ds, double gamma, BotPolicy policy);

/// True iff sigma <= kappa (inclusive). kappa must be positive.
bool verdict(double sigma, double kappa);
bool verdict(const SigmaResult& sig, double kappa);

enum class Side { teacher, student };

/// Fraction of records whose argmax class equals the label. Every record
/// must carry a label.
double accuracy(const PairedDataset& ds, Side side, double gamma);

/// Expected calibration error in percent: equal-width confidence bins over
/// [0,1], bin index min(floor(conf*bins), bins-1), weighted |acc - conf|
/// gap times 100. Empty bins contribute nothing.
double ece_percent(const PairedDataset& ds, Side side, double gamma, std::size_t bins);

struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::size_t> counts;

    std::size_t total() const;
};

struct DistributionSet {
    Histogram teacher_conf; // over [0,1]
    Histogram student_conf; // over [0,1]
    Histogram delta;        // over [-1,1]; disagreements excluded
    std::size_t bot_count = 0;
};

DistributionSet distributions(const PairedDataset& ds, double gamma, std::size_t bins);

/// CSV with header bin_lo,bin_hi,count.
std::string histogram_csv(const Histogram& h);

/// One audit row: per-model accuracy/ECE (only when labels are present),
/// the spread, and the verdict against kappa.
struct ConfidenceReport {
    std::optional<double> acc_teacher;
    std::optional<double> acc_student;
    std::optional<double> ece_teacher;
    std::optional<double> ece_student;
    SigmaResult spread;
    double kappa = 0.0;
    bool holds = false;
    Split split = Split::train;
};

ConfidenceReport make_report(const PairedDataset& ds, double gamma, double kappa,
                             BotPolicy policy, std::size_t ece_bins);

/// Key-value text with exactly the keys acc_teacher, acc_student,
/// ece_teacher, ece_student, sigma, n_total, n_agree, n_disagree, kappa,
/// holds, split. Absent metrics render as "absent".
std::string render_report(const ConfidenceReport& rep);

} // namespace kdaudit
