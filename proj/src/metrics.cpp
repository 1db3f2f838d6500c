#include "kdaudit/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "kdaudit/error.hpp"
#include "kdaudit/kv.hpp"

namespace kdaudit {

namespace {

void check_logits(std::span<const double> logits, double gamma) {
    if (!(gamma > 0.0))
        throw Error("gamma must be > 0");
    if (logits.size() < 2)
        throw Error("need at least 2 logits, got " + std::to_string(logits.size()));
    for (double z : logits)
        if (!std::isfinite(z))
            throw Error("non-finite logit");
}

// Kahan compensated sum; keeps reductions order-independent far below 1e-12.
class CompensatedSum {
public:
    void add(double x) {
        const double y = x - c_;
        const double t = sum_ + y;
        c_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double c_ = 0.0;
};

} // namespace

std::string bot_policy_name(BotPolicy p) { return p == BotPolicy::zero ? "zero" : "exclude"; }

BotPolicy bot_policy_from_name(const std::string& name) {
    if (name == "zero") return BotPolicy::zero;
    if (name == "exclude") return BotPolicy::exclude;
    throw Error("unknown bot policy '" + name + "' (expected zero or exclude)");
}

ProbVector softmax(std::span<const double> logits, double gamma) {
    check_logits(logits, gamma);
    double m = gamma * logits[0];
    for (double z : logits) m = std::max(m, gamma * z);

    ProbVector out;
    out.probs.resize(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.probs[i] = std::exp(gamma * logits[i] - m);
        denom += out.probs[i];
    }
    for (double& p : out.probs) p /= denom;
    return out;
}

Confidence confidence(std::span<const double> logits, double gamma) {
    const ProbVector p = softmax(logits, gamma);
    std::size_t best = 0;
    for (std::size_t i = 1; i < p.probs.size(); ++i)
        if (p.probs[i] > p.probs[best]) best = i;
    return {p.probs[best], best};
}

PairwiseDiff pairwise_diff(const PairedLogitRecord& rec, double gamma) {
    const Confidence teacher = confidence(rec.teacher_logits, gamma);
    const Confidence student = confidence(rec.student_logits, gamma);
    PairwiseDiff d;
    if (teacher.index == student.index)
        d.value = student.value - teacher.value;
    return d;
}

SigmaResult confidence_spread(const PairedDataset& ds, double gamma, BotPolicy policy) {
    validate(ds);
    SigmaResult res;
    res.bot_policy = policy;
    res.n_total = ds.size();

    CompensatedSum sq_sum;
    for (const auto& rec : ds.records) {
        const PairwiseDiff d = pairwise_diff(rec, gamma);
        if (d.agreed()) {
            ++res.n_agree;
            sq_sum.add(*d.value * *d.value);
        } else {
            ++res.n_disagree;
        }
    }

    std::size_t denom = res.n_total;
    if (policy == BotPolicy::exclude) {
        if (res.n_agree == 0)
            throw Error("exclude policy undefined: no records with matching predictions");
        denom = res.n_agree;
    }
    res.sigma = std::sqrt(sq_sum.value() / static_cast<double>(denom));
    return res;
}

bool verdict(double sigma, double kappa) {
    if (!(kappa > 0.0))
        throw Error("kappa must be > 0");
    return sigma <= kappa;
}

bool verdict(const SigmaResult& sig, double kappa) { return verdict(sig.sigma, kappa); }

namespace {

const std::vector<double>& side_logits(const PairedLogitRecord& rec, Side side) {
    return side == Side::teacher ? rec.teacher_logits : rec.student_logits;
}

void require_labels(const PairedDataset& ds) {
    for (const auto& rec : ds.records)
        if (!rec.label)
            throw Error("record '" + rec.id + "' has no label");
}

} // namespace

double accuracy(const PairedDataset& ds, Side side, double gamma) {
    validate(ds);
    require_labels(ds);
    std::size_t correct = 0;
    for (const auto& rec : ds.records)
        if (confidence(side_logits(rec, side), gamma).index == *rec.label)
            ++correct;
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

double ece_percent(const PairedDataset& ds, Side side, double gamma, std::size_t bins) {
    validate(ds);
    require_labels(ds);
    if (bins < 1)
        throw Error("ece needs bins >= 1");

    std::vector<std::size_t> count(bins, 0), correct(bins, 0);
    std::vector<double> conf_sum(bins, 0.0);
    for (const auto& rec : ds.records) {
        const Confidence c = confidence(side_logits(rec, side), gamma);
        const std::size_t b =
            std::min(static_cast<std::size_t>(c.value * static_cast<double>(bins)), bins - 1);
        ++count[b];
        conf_sum[b] += c.value;
        if (c.index == *rec.label) ++correct[b];
    }

    const double n = static_cast<double>(ds.size());
    double ece = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double nb = static_cast<double>(count[b]);
        const double acc_b = static_cast<double>(correct[b]) / nb;
        const double conf_b = conf_sum[b] / nb;
        ece += (nb / n) * std::abs(acc_b - conf_b);
    }
    return 100.0 * ece;
}

std::size_t Histogram::total() const {
    std::size_t t = 0;
    for (std::size_t c : counts) t += c;
    return t;
}

namespace {

void hist_add(Histogram& h, double v) {
    const double span = h.hi - h.lo;
    const double scaled = (v - h.lo) / span * static_cast<double>(h.counts.size());
    std::size_t b = scaled <= 0.0 ? 0 : static_cast<std::size_t>(scaled);
    if (b >= h.counts.size()) b = h.counts.size() - 1;
    ++h.counts[b];
}

} // namespace

DistributionSet distributions(const PairedDataset& ds, double gamma, std::size_t bins) {
    validate(ds);
    if (bins < 1)
        throw Error("distributions needs bins >= 1");

    DistributionSet out;
    out.teacher_conf = {0.0, 1.0, std::vector<std::size_t>(bins, 0)};
    out.student_conf = {0.0, 1.0, std::vector<std::size_t>(bins, 0)};
    out.delta = {-1.0, 1.0, std::vector<std::size_t>(bins, 0)};

    for (const auto& rec : ds.records) {
        hist_add(out.teacher_conf, confidence(rec.teacher_logits, gamma).value);
        hist_add(out.student_conf, confidence(rec.student_logits, gamma).value);
        const PairwiseDiff d = pairwise_diff(rec, gamma);
        if (d.agreed())
            hist_add(out.delta, *d.value);
        else
            ++out.bot_count;
    }
    return out;
}

std::string histogram_csv(const Histogram& h) {
    std::string out = "bin_lo,bin_hi,count\n";
    const std::size_t bins = h.counts.size();
    const double width = (h.hi - h.lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = h.lo + static_cast<double>(b) * width;
        const double hi = b + 1 == bins ? h.hi : h.lo + static_cast<double>(b + 1) * width;
        out += fmt_double(lo) + "," + fmt_double(hi) + "," + std::to_string(h.counts[b]) + "\n";
    }
    return out;
}

ConfidenceReport make_report(const PairedDataset& ds, double gamma, double kappa,
                             BotPolicy policy, std::size_t ece_bins) {
    ConfidenceReport rep;
    rep.split = ds.split_tag;
    rep.kappa = kappa;
    rep.spread = confidence_spread(ds, gamma, policy);
    rep.holds = verdict(rep.spread, kappa);

    const bool labeled = std::all_of(ds.records.begin(), ds.records.end(),
                                     [](const auto& r) { return r.label.has_value(); });
    if (labeled) {
        rep.acc_teacher = accuracy(ds, Side::teacher, gamma);
        rep.acc_student = accuracy(ds, Side::student, gamma);
        rep.ece_teacher = ece_percent(ds, Side::teacher, gamma, ece_bins);
        rep.ece_student = ece_percent(ds, Side::student, gamma, ece_bins);
    }
    return rep;
}

std::string render_report(const ConfidenceReport& rep) {
    auto opt = [](const std::optional<double>& v) {
        return v ? fmt_double(*v) : std::string("absent");
    };
    std::string out;
    out += "acc_teacher: " + opt(rep.acc_teacher) + "\n";
    out += "acc_student: " + opt(rep.acc_student) + "\n";
    out += "ece_teacher: " + opt(rep.ece_teacher) + "\n";
    out += "ece_student: " + opt(rep.ece_student) + "\n";
    out += "sigma: " + fmt_double(rep.spread.sigma) + "\n";
    out += "n_total: " + std::to_string(rep.spread.n_total) + "\n";
    out += "n_agree: " + std::to_string(rep.spread.n_agree) + "\n";
    out += "n_disagree: " + std::to_string(rep.spread.n_disagree) + "\n";
    out += "kappa: " + fmt_double(rep.kappa) + "\n";
    out += "holds: " + fmt_bool(rep.holds) + "\n";
    out += "split: " + split_name(rep.split) + "\n";
    return out;
}

} // namespace kdaudit
