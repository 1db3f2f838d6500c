#pragma once

#include <cstdint>
#include <string>

#include "kdaudit/logits_io.hpp"

namespace kdaudit {

/// Concrete evaluation of the inequality chain tying the confidence spread
/// to the training loss. Checked in order:
///   step 1: sum of squared diffs  <=  gamma^2 * sum of squared logit gaps
///   step 2: (1-alpha) * logit gap sum  <=  observed total loss
///   step 3: sigma  <=  gamma * sqrt(loss / (n * (1-alpha)))
/// each with an additive tolerance.
struct BoundChainReport {
    double lhs_sigma_sq_n = 0.0;        // sum over records of squared diffs
    double mid_gamma_sq_logit_mse = 0.0; // gamma^2 * logit gap sum
    double beta = 0.0;                   // observed (or supplied) total loss
    double alpha = 0.0;
    double gamma = 1.0;
    double rhs_loss_bound = 0.0;         // gamma^2 * beta / (1-alpha)
    double kappa_theoretical = 0.0;
    double sigma = 0.0;
    double tol = 1e-9;
    bool step1_holds = false;
    bool step2_holds = false;
    bool step3_holds = false;
    bool all_hold = false;
    double slack1 = 0.0;
    double slack2 = 0.0;
    double slack3 = 0.0;
};

/// Sum over records of the squared 2-norm of (student - teacher) logits.
double sum_squared_logit_gap(const PairedDataset& ds);

/// Reconstructs the sum-form training loss from a paired-logits file:
/// alpha * sum of student cross-entropies plus (1-alpha) * the logit gap
/// sum. Labels are required whenever alpha > 0.
double observed_loss_from_pairs(const PairedDataset& ds, double alpha, double gamma);

/// Threshold implied by a loss bound: gamma * sqrt(beta / (n * (1-alpha))).
double kappa_from_loss_bound(double gamma, double beta, double alpha, std::size_t n);

/// Evaluates the chain on concrete data. `observed_loss` must be the total
/// (sum-reduction) training loss over this dataset; the spread uses the
/// zero policy for disagreements.
BoundChainReport verify_chain(const PairedDataset& ds, double gamma, double alpha,
                              double observed_loss, double tol = 1e-9);

/// Key-value text with keys step1_holds, step2_holds, step3_holds, sigma,
/// kappa_theoretical, slack1, slack2, slack3.
std::string render_chain_report(const BoundChainReport& rep);

} // namespace kdaudit
