#include "kdaudit/bound.hpp"

#include <algorithm>
#include <cmath>

#include "kdaudit/error.hpp"
#include "kdaudit/kv.hpp"
#include "kdaudit/metrics.hpp"

namespace kdaudit {

double sum_squared_logit_gap(const PairedDataset& ds) {
    validate(ds);
    double total = 0.0, comp = 0.0;
    for (const auto& rec : ds.records) {
        double sq = 0.0;
        for (std::size_t i = 0; i < rec.num_classes(); ++i) {
            const double d = rec.student_logits[i] - rec.teacher_logits[i];
            sq += d * d;
        }
        // Kahan step keeps the reduction order-independent.
        const double y = sq - comp;
        const double t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    return total;
}

double observed_loss_from_pairs(const PairedDataset& ds, double alpha, double gamma) {
    validate(ds);
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw Error("alpha must lie in [0, 1], got " + fmt_double(alpha));
    if (!(gamma > 0.0))
        throw Error("gamma must be > 0");
    double total = 0.0, comp = 0.0;
    for (const auto& rec : ds.records) {
        double term = 0.0;
        if (alpha > 0.0) {
            if (!rec.label)
                throw Error("record '" + rec.id + "' has no label; cannot reconstruct the cross-entropy part");
            // log-space cross-entropy, safe for extreme logits
            double m = gamma * rec.student_logits[0];
            for (double z : rec.student_logits) m = std::max(m, gamma * z);
            double s = 0.0;
            for (double z : rec.student_logits) s += std::exp(gamma * z - m);
            term += alpha * (m + std::log(s) - gamma * rec.student_logits[*rec.label]);
        }
        if (alpha < 1.0) {
            double sq = 0.0;
            for (std::size_t i = 0; i < rec.num_classes(); ++i) {
                const double d = rec.student_logits[i] - rec.teacher_logits[i];
                sq += d * d;
            }
            term += (1.0 - alpha) * sq;
        }
        const double y = term - comp;
        const double t = total + y;
        comp = (t - total) - y;
        total = t;
    }
    return total;
}

double kappa_from_loss_bound(double gamma, double beta, double alpha, std::size_t n) {
    if (!(gamma > 0.0))
        throw Error("gamma must be > 0");
    if (beta < 0.0)
        throw Error("loss bound must be >= 0");
    if (!(alpha >= 0.0 && alpha < 1.0))
        throw Error("alpha must be in [0,1)");
    if (n < 1)
        throw Error("dataset size must be >= 1");
    return gamma * std::sqrt(beta / (static_cast<double>(n) * (1.0 - alpha)));
}

BoundChainReport verify_chain(const PairedDataset& ds, double gamma, double alpha,
                              double observed_loss, double tol) {
    if (!(alpha >= 0.0 && alpha < 1.0))
        throw Error("alpha must be in [0,1)");
    if (observed_loss < 0.0)
        throw Error("observed loss must be >= 0");
    if (tol < 0.0)
        throw Error("tolerance must be >= 0");

    BoundChainReport rep;
    rep.alpha = alpha;
    rep.gamma = gamma;
    rep.beta = observed_loss;
    rep.tol = tol;

    const SigmaResult spread = confidence_spread(ds, gamma, BotPolicy::zero);
    rep.sigma = spread.sigma;
    rep.lhs_sigma_sq_n = spread.sigma * spread.sigma * static_cast<double>(spread.n_total);

    const double gap_sum = sum_squared_logit_gap(ds);
    rep.mid_gamma_sq_logit_mse = gamma * gamma * gap_sum;
    rep.rhs_loss_bound = gamma * gamma * observed_loss / (1.0 - alpha);
    rep.kappa_theoretical = kappa_from_loss_bound(gamma, observed_loss, alpha, spread.n_total);

    rep.slack1 = rep.mid_gamma_sq_logit_mse - rep.lhs_sigma_sq_n;
    rep.slack2 = observed_loss - (1.0 - alpha) * gap_sum;
    rep.slack3 = rep.kappa_theoretical - rep.sigma;

    rep.step1_holds = rep.slack1 >= -tol;
    rep.step2_holds = rep.slack2 >= -tol;
    rep.step3_holds = rep.slack3 >= -tol;
    rep.all_hold = rep.step1_holds && rep.step2_holds && rep.step3_holds;
    return rep;
}

std::string render_chain_report(const BoundChainReport& rep) {
    std::string out;
    out += "step1_holds: " + fmt_bool(rep.step1_holds) + "\n";
    out += "step2_holds: " + fmt_bool(rep.step2_holds) + "\n";
    out += "step3_holds: " + fmt_bool(rep.step3_holds) + "\n";
    out += "sigma: " + fmt_double(rep.sigma) + "\n";
    out += "kappa_theoretical: " + fmt_double(rep.kappa_theoretical) + "\n";
    out += "slack1: " + fmt_double(rep.slack1) + "\n";
    out += "slack2: " + fmt_double(rep.slack2) + "\n";
    out += "slack3: " + fmt_double(rep.slack3) + "\n";
    return out;
}

} // namespace kdaudit
