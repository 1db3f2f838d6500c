#include "kdaudit/tuner.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "kdaudit/error.hpp"
#include "kdaudit/metrics.hpp"

namespace kdaudit {

namespace {

std::vector<double> parse_double_list(const std::string& value, const std::string& key) {
    std::vector<double> out;
    for (const auto& piece : split_csv(value)) out.push_back(parse_double(piece, key));
    if (out.empty()) throw Error("grid key '" + key + "' has no values");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& value, const std::string& key) {
    std::vector<std::size_t> out;
    for (const auto& piece : split_csv(value))
        out.push_back(static_cast<std::size_t>(parse_uint(piece, key)));
    if (out.empty()) throw Error("grid key '" + key + "' has no values");
    return out;
}

DistillConfig combo_config(const DistillConfig& baseline, double lr1, double lr2,
                           std::size_t batch, std::size_t e2, double wd, std::size_t e1) {
    DistillConfig cfg = baseline;
    cfg.lr_stg1 = lr1;
    cfg.lr_stg2 = lr2;
    cfg.batch = batch;
    cfg.epochs_stg2 = e2;
    cfg.weight_decay = wd;
    cfg.epochs_stg1 = e1;
    return cfg;
}

std::string stage1_key(const DistillConfig& cfg) {
    return fmt_double(cfg.lr_stg1) + "|" + std::to_string(cfg.epochs_stg1) + "|" +
           std::to_string(cfg.batch) + "|" + fmt_double(cfg.weight_decay);
}

} // namespace

std::size_t TuneGrid::num_combinations() const {
    return lr_stg1.size() * lr_stg2.size() * batch.size() * epochs_stg1.size() *
           epochs_stg2.size() * weight_decay.size();
}

void validate(const TuneGrid& g) {
    if (g.lr_stg1.empty() || g.lr_stg2.empty() || g.batch.empty() ||
        g.epochs_stg1.empty() || g.epochs_stg2.empty() || g.weight_decay.empty())
        throw Error("every grid dimension needs at least one value");
    for (double v : g.lr_stg1)
        if (!(v > 0.0)) throw Error("grid lr_stg1 values must be positive");
    for (double v : g.lr_stg2)
        if (!(v > 0.0)) throw Error("grid lr_stg2 values must be positive");
    for (std::size_t v : g.batch)
        if (v == 0) throw Error("grid batch values must be at least 1");
    for (double v : g.weight_decay)
        if (!(v >= 0.0)) throw Error("grid weight_decay values must be non-negative");
}

TuneGrid default_grid(const DistillConfig& baseline) {
    TuneGrid g;
    g.lr_stg1 = {baseline.lr_stg1};
    g.epochs_stg1 = {baseline.epochs_stg1};
    g.lr_stg2 = {3e-6, 1e-5, 3e-5, 7e-5, 4e-4, 5e-4, 8e-4};
    g.batch = {28, 32, 34, 36, 38, 40};
    g.epochs_stg2 = {2, 3, 4, 5, 6};
    g.weight_decay = {1e-4, 1e-3, 5e-3, 1e-2, 5e-2};
    return g;
}

TuneGrid grid_from_kv(const KvPairs& kv, const DistillConfig& baseline) {
    TuneGrid g;
    g.lr_stg1 = {baseline.lr_stg1};
    g.lr_stg2 = {baseline.lr_stg2};
    g.batch = {baseline.batch};
    g.epochs_stg1 = {baseline.epochs_stg1};
    g.epochs_stg2 = {baseline.epochs_stg2};
    g.weight_decay = {baseline.weight_decay};
    for (const auto& [key, value] : kv) {
        if (key == "lr_stg1") g.lr_stg1 = parse_double_list(value, key);
        else if (key == "lr_stg2") g.lr_stg2 = parse_double_list(value, key);
        else if (key == "batch") g.batch = parse_size_list(value, key);
        else if (key == "epochs_stg1") g.epochs_stg1 = parse_size_list(value, key);
        else if (key == "epochs_stg2") g.epochs_stg2 = parse_size_list(value, key);
        else if (key == "weight_decay") g.weight_decay = parse_double_list(value, key);
        else throw Error("unknown grid key '" + key + "'");
    }
    validate(g);
    return g;
}

TuneGrid load_grid(const std::string& path, const DistillConfig& baseline) {
    return grid_from_kv(parse_kv_file(path), baseline);
}

std::optional<std::size_t> select_best(const std::vector<Trial>& trials) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < trials.size(); ++i) {
        if (!trials[i].feasible) continue;
        if (!best) {
            best = i;
            continue;
        }
        const Trial& cur = trials[*best];
        const Trial& cand = trials[i];
        if (cand.sigma < cur.sigma ||
            (cand.sigma == cur.sigma && cand.acc > cur.acc))
            best = i;
    }
    return best;
}

TuneOutcome tune(const MlpModel& teacher, const std::vector<LabeledPoint>& train,
                 const std::vector<LabeledPoint>& eval_pts,
                 const std::vector<std::size_t>& student_dims, const TuneGrid& grid,
                 double kappa, double max_acc_drop, const DistillConfig& baseline,
                 std::optional<std::size_t> max_trials) {
    validate(grid);
    validate(baseline);
    if (!(kappa > 0.0)) throw Error("kappa must be positive, got " + fmt_double(kappa));
    if (!(max_acc_drop >= 0.0))
        throw Error("max_acc_drop must be non-negative, got " + fmt_double(max_acc_drop));

    std::map<std::string, Stage1Result> stage1_memo;
    auto stage1_for = [&](const DistillConfig& cfg) -> const Stage1Result& {
        std::string key = stage1_key(cfg);
        auto it = stage1_memo.find(key);
        if (it == stage1_memo.end())
            it = stage1_memo.emplace(key, distill_stage1(nullptr, train, student_dims, cfg)).first;
        return it->second;
    };
    // sigma is audited where the property is defined, on the train split;
    // the accuracy constraint is checked on held-out points.
    auto run_trial = [&](const DistillConfig& cfg) {
        MlpModel student = distill_stage2(teacher, train, stage1_for(cfg), cfg).first;
        PairedDataset train_pairs = export_pairs(teacher, student, train, Split::train);
        SigmaResult sr = confidence_spread(train_pairs, cfg.gamma, BotPolicy::zero);
        PairedDataset eval_pairs = export_pairs(teacher, student, eval_pts, Split::eval);
        double acc = accuracy(eval_pairs, Side::student, cfg.gamma);
        return std::pair<double, double>(sr.sigma, acc);
    };

    TuneOutcome out;
    out.kappa = kappa;
    out.max_acc_drop = max_acc_drop;

    auto [base_sigma, base_acc] = run_trial(baseline);
    out.baseline_sigma = base_sigma;
    out.baseline_acc = base_acc;
    out.trials.push_back({0, baseline, base_sigma, base_acc,
                          verdict(base_sigma, kappa), true});

    std::size_t budget = max_trials.value_or(grid.num_combinations());
    std::size_t produced = 0;
    for (double lr1 : grid.lr_stg1) {
        for (double lr2 : grid.lr_stg2) {
            for (std::size_t b : grid.batch) {
                for (std::size_t e2 : grid.epochs_stg2) {
                    for (double wd : grid.weight_decay) {
                        for (std::size_t e1 : grid.epochs_stg1) {
                            if (produced >= budget) goto done;
                            ++produced;
                            DistillConfig cfg = combo_config(baseline, lr1, lr2, b, e2, wd, e1);
                            Trial t;
                            t.index = out.trials.size();
                            t.config = cfg;
                            try {
                                auto [sigma, acc] = run_trial(cfg);
                                t.sigma = sigma;
                                t.acc = acc;
                                t.holds = verdict(sigma, kappa);
                                t.feasible = acc >= base_acc - max_acc_drop;
                            } catch (const Error&) {
                                // diverged; keep the row so the report shows it
                                t.sigma = std::numeric_limits<double>::quiet_NaN();
                                t.acc = 0.0;
                                t.holds = false;
                                t.feasible = false;
                            }
                            out.trials.push_back(std::move(t));
                        }
                    }
                }
            }
        }
    }
done:
    if (auto best = select_best(out.trials); best && out.trials[*best].holds) {
        out.best_config = out.trials[*best].config;
        out.best_sigma = out.trials[*best].sigma;
        out.best_acc = out.trials[*best].acc;
    }
    return out;
}

std::string render_outcome(const TuneOutcome& o) {
    std::ostringstream out;
    out << "kappa: " << fmt_double(o.kappa) << "\n";
    out << "max_acc_drop: " << fmt_double(o.max_acc_drop) << "\n";
    out << "baseline_sigma: " << fmt_double(o.baseline_sigma) << "\n";
    out << "baseline_acc: " << fmt_double(o.baseline_acc) << "\n";
    if (o.best_config) {
        out << "best_config: " << config_line(*o.best_config) << "\n";
        out << "best_sigma: " << fmt_double(o.best_sigma) << "\n";
        out << "best_acc: " << fmt_double(o.best_acc) << "\n";
    } else {
        out << "best_config: absent\n";
        out << "best_sigma: absent\n";
        out << "best_acc: absent\n";
    }
    out << "trials:\n";
    out << "index,lr_stg1,lr_stg2,batch,epochs_stg1,epochs_stg2,weight_decay,sigma,acc,holds,feasible\n";
    for (const Trial& t : o.trials) {
        out << t.index << ',' << fmt_double(t.config.lr_stg1) << ','
            << fmt_double(t.config.lr_stg2) << ',' << t.config.batch << ','
            << t.config.epochs_stg1 << ',' << t.config.epochs_stg2 << ','
            << fmt_double(t.config.weight_decay) << ',' << fmt_double(t.sigma) << ','
            << fmt_double(t.acc) << ',' << fmt_bool(t.holds) << ','
            << fmt_bool(t.feasible) << '\n';
    }
    return out.str();
}

TunedComparison compare_tuned(const MlpModel& teacher,
                              const std::vector<LabeledPoint>& train,
                              const std::vector<LabeledPoint>& eval_pts,
                              const std::vector<std::size_t>& student_dims,
                              const DistillConfig& baseline, const DistillConfig& tuned,
                              double kappa) {
    auto measure = [&](const DistillConfig& cfg) {
        MlpModel student = distill(teacher, train, student_dims, cfg).first;
        auto on_split = [&](const std::vector<LabeledPoint>& pts, Split tag) {
            PairedDataset pairs = export_pairs(teacher, student, pts, tag);
            SigmaResult sr = confidence_spread(pairs, cfg.gamma, BotPolicy::zero);
            SplitMetrics m;
            m.acc = accuracy(pairs, Side::student, cfg.gamma);
            m.sigma = sr.sigma;
            m.holds = verdict(sr.sigma, kappa);
            return m;
        };
        return std::pair<SplitMetrics, SplitMetrics>(on_split(train, Split::train),
                                                     on_split(eval_pts, Split::eval));
    };
    TunedComparison c;
    c.kappa = kappa;
    std::tie(c.base_train, c.base_eval) = measure(baseline);
    std::tie(c.tuned_train, c.tuned_eval) = measure(tuned);
    return c;
}

std::string render_comparison(const TunedComparison& c) {
    std::ostringstream out;
    out << "comparison:\n";
    out << "config,split,acc,sigma,holds\n";
    auto row = [&](const char* name, const char* split, const SplitMetrics& m) {
        out << name << ',' << split << ',' << fmt_double(m.acc) << ','
            << fmt_double(m.sigma) << ',' << fmt_bool(m.holds) << '\n';
    };
    row("baseline", "train", c.base_train);
    row("baseline", "eval", c.base_eval);
    row("tuned", "train", c.tuned_train);
    row("tuned", "eval", c.tuned_eval);
    return out.str();
}

} // namespace kdaudit
