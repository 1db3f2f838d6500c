#include "kdaudit/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "kdaudit/error.hpp"

namespace kdaudit {

namespace {

constexpr double kDivergenceCeiling = 1e6;

// log(sum_j exp(gamma*z_j)) with max subtraction; optionally fills the
// softmax probabilities computed from the same pass.
double log_sum_exp_scaled(std::span<const double> z, double gamma,
                          std::vector<double>* probs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : z) m = std::max(m, gamma * v);
    double s = 0.0;
    for (double v : z) s += std::exp(gamma * v - m);
    double lse = m + std::log(s);
    if (probs) {
        probs->resize(z.size());
        for (std::size_t i = 0; i < z.size(); ++i)
            (*probs)[i] = std::exp(gamma * z[i] - lse);
    }
    return lse;
}

double sample_ce(std::span<const double> z, std::size_t label, double gamma) {
    return log_sum_exp_scaled(z, gamma, nullptr) - gamma * z[label];
}

double sample_gap_sq(std::span<const double> zs, std::span<const double> zt) {
    double s = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
        double d = zs[i] - zt[i];
        s += d * d;
    }
    return s;
}

// d(loss)/d(logits) for one sample of the blended loss.
std::vector<double> blended_output_grad(const std::vector<double>& z, std::size_t label,
                                        const std::vector<double>* zt, double alpha,
                                        double gamma) {
    std::vector<double> g(z.size(), 0.0);
    if (alpha > 0.0) {
        std::vector<double> p;
        log_sum_exp_scaled(z, gamma, &p);
        for (std::size_t i = 0; i < z.size(); ++i)
            g[i] += alpha * gamma * (p[i] - (i == label ? 1.0 : 0.0));
    }
    if (alpha < 1.0) {
        for (std::size_t i = 0; i < z.size(); ++i)
            g[i] += (1.0 - alpha) * 2.0 * (z[i] - (*zt)[i]);
    }
    return g;
}

struct Trace {
    // pre[l] = W_l a_l + b_l; act[0] is the input, act[l+1] the layer-l
    // output after its activation (identity on the last layer).
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
};

Trace forward_trace(const MlpModel& m, std::span<const double> x) {
    Trace tr;
    std::size_t layers = m.num_layers();
    tr.pre.resize(layers);
    tr.act.resize(layers + 1);
    tr.act[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers; ++l) {
        std::size_t in = m.layer_dims[l];
        std::size_t out = m.layer_dims[l + 1];
        const auto& w = m.weights[l];
        const auto& b = m.biases[l];
        const auto& a = tr.act[l];
        auto& z = tr.pre[l];
        z.assign(b.begin(), b.end());
        for (std::size_t i = 0; i < out; ++i) {
            const double* row = w.data() + i * in;
            double acc = z[i];
            for (std::size_t j = 0; j < in; ++j) acc += row[j] * a[j];
            z[i] = acc;
        }
        if (l + 1 < layers) {
            auto& a_next = tr.act[l + 1];
            a_next.resize(out);
            for (std::size_t i = 0; i < out; ++i) a_next[i] = z[i] > 0.0 ? z[i] : 0.0;
        } else {
            tr.act[l + 1] = z;
        }
    }
    return tr;
}

Gradients zero_like(const MlpModel& m) {
    Gradients g;
    g.weights.resize(m.weights.size());
    g.biases.resize(m.biases.size());
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        g.weights[l].assign(m.weights[l].size(), 0.0);
        g.biases[l].assign(m.biases[l].size(), 0.0);
    }
    return g;
}

// Backprop one sample's output gradient through the trace, adding the
// parameter gradients into g. Rectifier derivative at 0 is taken as 0.
void accumulate_sample_grads(const MlpModel& m, const Trace& tr,
                             std::vector<double> delta, Gradients& g) {
    for (std::size_t l = m.num_layers(); l-- > 0;) {
        std::size_t in = m.layer_dims[l];
        std::size_t out = m.layer_dims[l + 1];
        const auto& a = tr.act[l];
        auto& gw = g.weights[l];
        auto& gb = g.biases[l];
        for (std::size_t i = 0; i < out; ++i) {
            gb[i] += delta[i];
            double* row = gw.data() + i * in;
            for (std::size_t j = 0; j < in; ++j) row[j] += delta[i] * a[j];
        }
        if (l == 0) break;
        const auto& w = m.weights[l];
        std::vector<double> prev(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double* row = w.data() + i * in;
            for (std::size_t j = 0; j < in; ++j) prev[j] += row[j] * delta[i];
        }
        for (std::size_t j = 0; j < in; ++j)
            if (tr.pre[l - 1][j] <= 0.0) prev[j] = 0.0;
        delta = std::move(prev);
    }
}

void check_spec(const MlpModel& model, const LossSpec& spec) {
    if (!(spec.alpha >= 0.0 && spec.alpha <= 1.0))
        throw Error("loss alpha must lie in [0, 1], got " + fmt_double(spec.alpha));
    if (!(spec.gamma > 0.0))
        throw Error("loss gamma must be positive, got " + fmt_double(spec.gamma));
    if (!spec.teacher && spec.alpha < 1.0)
        throw Error("logit-matching loss term needs a teacher model");
    if (spec.teacher) {
        validate(*spec.teacher);
        if (spec.teacher->in_dim() != model.in_dim() ||
            spec.teacher->out_dim() != model.out_dim())
            throw Error("teacher and student interface dims differ");
    }
}

void check_batch_point(const LabeledPoint& pt, const MlpModel& model, bool need_label) {
    if (pt.features.size() != model.in_dim())
        throw Error("point has " + std::to_string(pt.features.size()) +
                    " features, model expects " + std::to_string(model.in_dim()));
    for (double v : pt.features)
        if (!std::isfinite(v)) throw Error("non-finite feature value");
    if (need_label && pt.label >= model.out_dim())
        throw Error("label " + std::to_string(pt.label) + " out of range for " +
                    std::to_string(model.out_dim()) + " classes");
}

// The training objective over data indices: alpha == 1 with null rows means
// plain cross-entropy; otherwise rows holds the cached teacher logits.
struct Objective {
    double alpha = 1.0;
    const std::vector<std::vector<double>>* rows = nullptr;
};

double batch_mean_loss_and_grads(const MlpModel& m, const std::vector<LabeledPoint>& data,
                                 std::span<const std::size_t> idx, const Objective& obj,
                                 double gamma, Gradients& g) {
    double loss = 0.0;
    for (std::size_t k : idx) {
        const LabeledPoint& pt = data[k];
        Trace tr = forward_trace(m, pt.features);
        const std::vector<double>& z = tr.act.back();
        const std::vector<double>* zt = obj.rows ? &(*obj.rows)[k] : nullptr;
        if (obj.alpha > 0.0) loss += obj.alpha * sample_ce(z, pt.label, gamma);
        if (obj.alpha < 1.0) loss += (1.0 - obj.alpha) * sample_gap_sq(z, *zt);
        accumulate_sample_grads(m, tr, blended_output_grad(z, pt.label, zt, obj.alpha, gamma), g);
    }
    double inv = 1.0 / static_cast<double>(idx.size());
    for (auto& layer : g.weights)
        for (double& v : layer) v *= inv;
    for (auto& layer : g.biases)
        for (double& v : layer) v *= inv;
    return loss * inv;
}

void apply_update(MlpModel& m, const Gradients& g, double lr, double wd) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        auto& w = m.weights[l];
        const auto& gw = g.weights[l];
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * (gw[i] + wd * w[i]);
        auto& b = m.biases[l];
        const auto& gb = g.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= lr * gb[i];
    }
}

double full_train_sum_loss(const MlpModel& m, const std::vector<LabeledPoint>& data,
                           const Objective& obj, double gamma) {
    double loss = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        std::vector<double> z = forward(m, data[k].features);
        if (obj.alpha > 0.0) loss += obj.alpha * sample_ce(z, data[k].label, gamma);
        if (obj.alpha < 1.0) loss += (1.0 - obj.alpha) * sample_gap_sq(z, (*obj.rows)[k]);
    }
    return loss;
}

double train_accuracy(const MlpModel& m, const std::vector<LabeledPoint>& data) {
    std::size_t hits = 0;
    for (const auto& pt : data) {
        std::vector<double> z = forward(m, pt.features);
        std::size_t best = 0;
        for (std::size_t i = 1; i < z.size(); ++i)
            if (z[i] > z[best]) best = i;
        if (best == pt.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

void run_sgd(MlpModel& m, const std::vector<LabeledPoint>& data, const Objective& obj,
             const Objective& log_obj, double gamma, double lr, std::size_t batch,
             std::size_t epochs, double wd, SplitMix64& rng, TrainLog& log) {
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t e = 0; e < epochs; ++e) {
        rng.shuffle(idx);
        double loss_acc = 0.0;
        std::size_t nb = 0;
        for (std::size_t off = 0; off < idx.size(); off += batch) {
            std::size_t len = std::min(batch, idx.size() - off);
            Gradients g = zero_like(m);
            double ml = batch_mean_loss_and_grads(
                m, data, std::span<const std::size_t>(idx).subspan(off, len), obj, gamma, g);
            if (!std::isfinite(ml) || ml > kDivergenceCeiling)
                throw Error("training diverged at epoch " +
                            std::to_string(log.epochs.size() + 1) + ": batch loss " +
                            fmt_double(ml));
            apply_update(m, g, lr, wd);
            loss_acc += ml;
            ++nb;
        }
        double sum_loss = full_train_sum_loss(m, data, log_obj, gamma);
        if (!std::isfinite(sum_loss))
            throw Error("training diverged at epoch " +
                        std::to_string(log.epochs.size() + 1) + ": non-finite loss");
        log.epochs.push_back({log.epochs.size() + 1, loss_acc / static_cast<double>(nb),
                              sum_loss, train_accuracy(m, data)});
    }
}

void check_training_data(const std::vector<LabeledPoint>& data, const MlpModel& model) {
    if (data.empty()) throw Error("training data is empty");
    for (const auto& pt : data) check_batch_point(pt, model, true);
}

std::vector<std::vector<double>> cache_logits(const MlpModel& m,
                                              const std::vector<LabeledPoint>& data) {
    std::vector<std::vector<double>> rows;
    rows.reserve(data.size());
    for (const auto& pt : data) rows.push_back(forward(m, pt.features));
    return rows;
}

} // namespace

void validate(const DistillConfig& cfg) {
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0))
        throw Error("config alpha must lie in [0, 1], got " + fmt_double(cfg.alpha));
    if (!(cfg.gamma > 0.0))
        throw Error("config gamma must be positive, got " + fmt_double(cfg.gamma));
    // zero is allowed so a frozen-parameter run stays expressible
    if (!(cfg.lr_stg1 >= 0.0))
        throw Error("config lr_stg1 must be non-negative, got " + fmt_double(cfg.lr_stg1));
    if (!(cfg.lr_stg2 >= 0.0))
        throw Error("config lr_stg2 must be non-negative, got " + fmt_double(cfg.lr_stg2));
    if (cfg.batch == 0) throw Error("config batch must be at least 1");
    if (!(cfg.weight_decay >= 0.0))
        throw Error("config weight_decay must be non-negative, got " +
                    fmt_double(cfg.weight_decay));
}

DistillConfig config_from_kv(const KvPairs& kv) {
    DistillConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "alpha") cfg.alpha = parse_double(value, "alpha");
        else if (key == "gamma") cfg.gamma = parse_double(value, "gamma");
        else if (key == "lr_stg1") cfg.lr_stg1 = parse_double(value, "lr_stg1");
        else if (key == "lr_stg2") cfg.lr_stg2 = parse_double(value, "lr_stg2");
        else if (key == "batch") cfg.batch = static_cast<std::size_t>(parse_uint(value, "batch"));
        else if (key == "epochs_stg1") cfg.epochs_stg1 = static_cast<std::size_t>(parse_uint(value, "epochs_stg1"));
        else if (key == "epochs_stg2") cfg.epochs_stg2 = static_cast<std::size_t>(parse_uint(value, "epochs_stg2"));
        else if (key == "weight_decay") cfg.weight_decay = parse_double(value, "weight_decay");
        else if (key == "seed") cfg.seed = parse_uint(value, "seed");
        else throw Error("unknown config key '" + key + "'");
    }
    validate(cfg);
    return cfg;
}

DistillConfig load_config(const std::string& path) {
    return config_from_kv(parse_kv_file(path));
}

std::string config_text(const DistillConfig& cfg) {
    std::ostringstream out;
    out << "alpha: " << fmt_double(cfg.alpha) << "\n";
    out << "gamma: " << fmt_double(cfg.gamma) << "\n";
    out << "lr_stg1: " << fmt_double(cfg.lr_stg1) << "\n";
    out << "lr_stg2: " << fmt_double(cfg.lr_stg2) << "\n";
    out << "batch: " << cfg.batch << "\n";
    out << "epochs_stg1: " << cfg.epochs_stg1 << "\n";
    out << "epochs_stg2: " << cfg.epochs_stg2 << "\n";
    out << "weight_decay: " << fmt_double(cfg.weight_decay) << "\n";
    out << "seed: " << cfg.seed << "\n";
    return out.str();
}

std::string config_line(const DistillConfig& cfg) {
    std::ostringstream out;
    out << "alpha=" << fmt_double(cfg.alpha)
        << ",gamma=" << fmt_double(cfg.gamma)
        << ",lr_stg1=" << fmt_double(cfg.lr_stg1)
        << ",lr_stg2=" << fmt_double(cfg.lr_stg2)
        << ",batch=" << cfg.batch
        << ",epochs_stg1=" << cfg.epochs_stg1
        << ",epochs_stg2=" << cfg.epochs_stg2
        << ",weight_decay=" << fmt_double(cfg.weight_decay)
        << ",seed=" << cfg.seed;
    return out.str();
}

std::string train_log_csv(const TrainLog& log) {
    std::ostringstream out;
    out << "epoch,mean_batch_loss,sum_loss_full_train,train_accuracy\n";
    for (const auto& e : log.epochs)
        out << e.epoch << ',' << fmt_double(e.mean_batch_loss) << ','
            << fmt_double(e.sum_loss_full_train) << ',' << fmt_double(e.train_accuracy)
            << '\n';
    return out.str();
}

double evaluate_loss(const MlpModel& model, std::span<const LabeledPoint> batch,
                     const LossSpec& spec) {
    validate(model);
    check_spec(model, spec);
    if (batch.empty()) throw Error("loss over an empty batch is undefined");
    double loss = 0.0;
    for (const auto& pt : batch) {
        check_batch_point(pt, model, spec.alpha > 0.0);
        std::vector<double> z = forward(model, pt.features);
        if (spec.alpha > 0.0) loss += spec.alpha * sample_ce(z, pt.label, spec.gamma);
        if (spec.alpha < 1.0) {
            std::vector<double> zt = forward(*spec.teacher, pt.features);
            loss += (1.0 - spec.alpha) * sample_gap_sq(z, zt);
        }
    }
    if (spec.reduction == Reduction::mean) loss /= static_cast<double>(batch.size());
    return loss;
}

double prediction_loss(std::span<const LabeledPoint> batch, const MlpModel& teacher,
                       const MlpModel& student, double alpha, double gamma,
                       Reduction reduction) {
    LossSpec spec{alpha, gamma, &teacher, reduction};
    return evaluate_loss(student, batch, spec);
}

Gradients backward(const MlpModel& model, std::span<const LabeledPoint> batch,
                   const LossSpec& spec) {
    validate(model);
    check_spec(model, spec);
    if (batch.empty()) throw Error("gradient over an empty batch is undefined");
    Gradients g = zero_like(model);
    for (const auto& pt : batch) {
        check_batch_point(pt, model, spec.alpha > 0.0);
        Trace tr = forward_trace(model, pt.features);
        const std::vector<double>& z = tr.act.back();
        std::vector<double> zt;
        if (spec.alpha < 1.0) zt = forward(*spec.teacher, pt.features);
        accumulate_sample_grads(
            model, tr,
            blended_output_grad(z, pt.label, spec.alpha < 1.0 ? &zt : nullptr,
                                spec.alpha, spec.gamma),
            g);
    }
    if (spec.reduction == Reduction::mean) {
        double inv = 1.0 / static_cast<double>(batch.size());
        for (auto& layer : g.weights)
            for (double& v : layer) v *= inv;
        for (auto& layer : g.biases)
            for (double& v : layer) v *= inv;
    }
    return g;
}

std::pair<MlpModel, TrainLog> train_teacher(const std::vector<LabeledPoint>& data,
                                            const std::vector<std::size_t>& dims,
                                            const DistillConfig& cfg) {
    validate(cfg);
    SplitMix64 rng(cfg.seed);
    MlpModel m = init_mlp(dims, rng);
    check_training_data(data, m);
    TrainLog log;
    Objective ce;
    run_sgd(m, data, ce, ce, cfg.gamma, cfg.lr_stg1, cfg.batch, cfg.epochs_stg1,
            cfg.weight_decay, rng, log);
    return {std::move(m), std::move(log)};
}

Stage1Result distill_stage1(const MlpModel* teacher_for_log,
                            const std::vector<LabeledPoint>& data,
                            const std::vector<std::size_t>& student_dims,
                            const DistillConfig& cfg) {
    validate(cfg);
    SplitMix64 rng(cfg.seed);
    MlpModel s = init_mlp(student_dims, rng);
    check_training_data(data, s);
    std::vector<std::vector<double>> rows;
    Objective ce;
    Objective log_obj = ce;
    if (teacher_for_log) {
        validate(*teacher_for_log);
        if (teacher_for_log->in_dim() != s.in_dim() ||
            teacher_for_log->out_dim() != s.out_dim())
            throw Error("teacher and student interface dims differ");
        rows = cache_logits(*teacher_for_log, data);
        log_obj = Objective{cfg.alpha, &rows};
    }
    TrainLog log;
    run_sgd(s, data, ce, log_obj, cfg.gamma, cfg.lr_stg1, cfg.batch, cfg.epochs_stg1,
            cfg.weight_decay, rng, log);
    return {std::move(s), rng, std::move(log)};
}

std::pair<MlpModel, TrainLog> distill_stage2(const MlpModel& teacher,
                                             const std::vector<LabeledPoint>& data,
                                             const Stage1Result& stage1,
                                             const DistillConfig& cfg) {
    validate(cfg);
    validate(teacher);
    validate(stage1.student);
    if (teacher.in_dim() != stage1.student.in_dim() ||
        teacher.out_dim() != stage1.student.out_dim())
        throw Error("teacher and student interface dims differ");
    MlpModel s = stage1.student;
    check_training_data(data, s);
    SplitMix64 rng = stage1.rng;
    TrainLog log = stage1.log;
    std::vector<std::vector<double>> rows = cache_logits(teacher, data);
    Objective obj{cfg.alpha, &rows};
    run_sgd(s, data, obj, obj, cfg.gamma, cfg.lr_stg2, cfg.batch, cfg.epochs_stg2,
            cfg.weight_decay, rng, log);
    return {std::move(s), std::move(log)};
}

std::pair<MlpModel, TrainLog> distill(const MlpModel& teacher,
                                      const std::vector<LabeledPoint>& data,
                                      const std::vector<std::size_t>& student_dims,
                                      const DistillConfig& cfg) {
    Stage1Result s1 = distill_stage1(&teacher, data, student_dims, cfg);
    return distill_stage2(teacher, data, s1, cfg);
}

PairedDataset export_pairs(const MlpModel& teacher, const MlpModel& student,
                           const std::vector<LabeledPoint>& data, Split tag) {
    validate(teacher);
    validate(student);
    if (teacher.in_dim() != student.in_dim() || teacher.out_dim() != student.out_dim())
        throw Error("teacher and student interface dims differ");
    if (data.empty()) throw Error("no points to export");
    PairedDataset ds;
    ds.split_tag = tag;
    ds.records.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        check_batch_point(data[i], teacher, true);
        PairedLogitRecord rec;
        rec.id = std::to_string(i);
        rec.teacher_logits = forward(teacher, data[i].features);
        rec.student_logits = forward(student, data[i].features);
        rec.label = data[i].label;
        ds.records.push_back(std::move(rec));
    }
    validate(ds);
    return ds;
}

} // namespace kdaudit
