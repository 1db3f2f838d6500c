#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "kdaudit/bound.hpp"
#include "kdaudit/distill.hpp"
#include "kdaudit/error.hpp"
#include "kdaudit/kv.hpp"
#include "kdaudit/logits_io.hpp"
#include "kdaudit/metrics.hpp"
#include "kdaudit/mlp.hpp"
#include "kdaudit/tuner.hpp"

namespace {

using namespace kdaudit;

struct AuditArgs {
    std::string input;
    double kappa = 0.05;
    double gamma = 1.0;
    std::size_t ece_bins = 10;
    std::string bot_policy = "zero";
    std::string out;
};

int cmd_audit(const AuditArgs& a) {
    PairedDataset ds = load_paired(a.input);
    ConfidenceReport rep =
        make_report(ds, a.gamma, a.kappa, bot_policy_from_name(a.bot_policy), a.ece_bins);
    std::string text = render_report(rep);
    std::cout << text;
    if (!a.out.empty()) write_text_file(a.out, text);
    return rep.holds ? 0 : 1;
}

struct HistogramArgs {
    std::string input;
    std::size_t bins = 50;
    double gamma = 1.0;
    std::string out_prefix;
};

int cmd_histogram(const HistogramArgs& a) {
    PairedDataset ds = load_paired(a.input);
    DistributionSet d = distributions(ds, a.gamma, a.bins);
    write_text_file(a.out_prefix + "teacher_conf.csv", histogram_csv(d.teacher_conf));
    write_text_file(a.out_prefix + "student_conf.csv", histogram_csv(d.student_conf));
    write_text_file(a.out_prefix + "delta_cnf.csv", histogram_csv(d.delta));
    std::cout << "bot_count: " << d.bot_count << "\n";
    return 0;
}

struct BoundArgs {
    std::string input;
    double alpha = 0.0;
    double gamma = 1.0;
    std::string loss;
    double tol = 1e-9;
};

int cmd_bound(const BoundArgs& a) {
    PairedDataset ds = load_paired(a.input);
    double beta = a.loss == "auto" ? observed_loss_from_pairs(ds, a.alpha, a.gamma)
                                   : parse_double(a.loss, "--loss");
    BoundChainReport rep = verify_chain(ds, a.gamma, a.alpha, beta, a.tol);
    std::cout << render_chain_report(rep);
    return rep.all_hold ? 0 : 1;
}

struct GenDataArgs {
    std::string task;
    std::size_t n = 0;
    double noise = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen_data(const GenDataArgs& a) {
    std::vector<LabeledPoint> pts = gen_synthetic(task_from_name(a.task), a.n, a.noise, a.seed);
    save_points(pts, a.out);
    std::cout << "points: " << pts.size() << "\n";
    return 0;
}

void print_last_epoch(const TrainLog& log) {
    std::cout << "epochs: " << log.epochs.size() << "\n";
    if (!log.epochs.empty()) {
        const EpochRecord& last = log.epochs.back();
        std::cout << "final_sum_loss: " << fmt_double(last.sum_loss_full_train) << "\n";
        std::cout << "final_train_accuracy: " << fmt_double(last.train_accuracy) << "\n";
    }
}

struct TrainTeacherArgs {
    std::string data;
    std::string dims = "2,64,64,64,2";
    std::string config;
    std::string out;
};

int cmd_train_teacher(const TrainTeacherArgs& a) {
    std::vector<LabeledPoint> pts = load_points(a.data);
    DistillConfig cfg = load_config(a.config);
    auto [model, log] = train_teacher(pts, parse_dims(a.dims), cfg);
    save_model(model, a.out);
    print_last_epoch(log);
    return 0;
}

struct DistillArgs {
    std::string teacher;
    std::string data;
    std::string dims = "2,32,32,2";
    std::string config;
    std::string out;
    std::string emit_pairs;
};

int cmd_distill(const DistillArgs& a) {
    MlpModel teacher = load_model(a.teacher);
    std::vector<LabeledPoint> pts = load_points(a.data);
    DistillConfig cfg = load_config(a.config);
    auto [student, log] = distill(teacher, pts, parse_dims(a.dims), cfg);
    save_model(student, a.out);
    if (!a.emit_pairs.empty())
        save_paired(export_pairs(teacher, student, pts, Split::train), a.emit_pairs);
    print_last_epoch(log);
    return 0;
}

struct TuneArgs {
    std::string teacher;
    std::string data;
    std::string eval;
    std::string dims;
    std::string grid;
    double kappa = 0.05;
    double max_acc_drop = 0.01;
    std::uint64_t seed = 1;
    std::string out;
    std::optional<std::size_t> max_trials;
};

int cmd_tune(const TuneArgs& a) {
    MlpModel teacher = load_model(a.teacher);
    std::vector<LabeledPoint> train = load_points(a.data);
    std::vector<LabeledPoint> eval_pts = load_points(a.eval);
    std::vector<std::size_t> dims = parse_dims(a.dims);
    DistillConfig baseline;
    baseline.seed = a.seed;
    TuneGrid grid = a.grid.empty() ? default_grid(baseline) : load_grid(a.grid, baseline);
    std::cout << "n_combinations: " << grid.num_combinations() << "\n";
    TuneOutcome o = tune(teacher, train, eval_pts, dims, grid, a.kappa, a.max_acc_drop,
                         baseline, a.max_trials);
    std::string text = render_outcome(o);
    if (o.best_config)
        text += render_comparison(
            compare_tuned(teacher, train, eval_pts, dims, baseline, *o.best_config, a.kappa));
    write_text_file(a.out, text);
    std::cout << text;
    return o.best_config ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Confidence-preservation audit toolkit for distilled classifier pairs"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    AuditArgs aa;
    CLI::App* audit = app.add_subcommand(
        "audit", "Audit a paired-logits file against the confidence-spread threshold");
    audit->add_option("--input", aa.input, "paired-logits JSONL file")->required();
    audit->add_option("--kappa", aa.kappa, "spread threshold");
    audit->add_option("--gamma", aa.gamma, "softmax inverse temperature");
    audit->add_option("--ece-bins", aa.ece_bins, "calibration-error bin count");
    audit->add_option("--bot-policy", aa.bot_policy, "disagreement handling")
        ->check(CLI::IsMember({"zero", "exclude"}));
    audit->add_option("--out", aa.out, "also write the report here");

    HistogramArgs ha;
    CLI::App* histogram = app.add_subcommand(
        "histogram", "Export confidence and difference histograms as CSV");
    histogram->add_option("--input", ha.input, "paired-logits JSONL file")->required();
    histogram->add_option("--bins", ha.bins, "bin count");
    histogram->add_option("--gamma", ha.gamma, "softmax inverse temperature");
    histogram->add_option("--out-prefix", ha.out_prefix, "output path prefix")->required();

    BoundArgs ba;
    CLI::App* bound = app.add_subcommand(
        "bound", "Check the spread-vs-loss inequality chain on a paired-logits file");
    bound->add_option("--input", ba.input, "paired-logits JSONL file")->required();
    bound->add_option("--alpha", ba.alpha, "label-loss mix used in training");
    bound->add_option("--gamma", ba.gamma, "softmax inverse temperature");
    bound->add_option("--loss", ba.loss,
                      "observed sum-form training loss, or 'auto' to reconstruct it")
        ->required();
    bound->add_option("--tol", ba.tol, "slack tolerance");

    GenDataArgs ga;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic 2-D dataset");
    gen->add_option("--task", ga.task, "blobs, moons, or xor")->required();
    gen->add_option("--n", ga.n, "number of points")->required();
    gen->add_option("--noise", ga.noise, "Gaussian noise sigma")->required();
    gen->add_option("--seed", ga.seed, "generator seed")->required();
    gen->add_option("--out", ga.out, "output JSONL file")->required();

    TrainTeacherArgs ta;
    CLI::App* train = app.add_subcommand("train-teacher", "Train the reference classifier");
    train->add_option("--data", ta.data, "training points JSONL")->required();
    train->add_option("--dims", ta.dims, "layer sizes, comma-separated");
    train->add_option("--config", ta.config, "training config file")->required();
    train->add_option("--out", ta.out, "model output path")->required();

    DistillArgs da;
    CLI::App* dist = app.add_subcommand("distill", "Distill a student from a trained teacher");
    dist->add_option("--teacher", da.teacher, "teacher model file")->required();
    dist->add_option("--data", da.data, "training points JSONL")->required();
    dist->add_option("--dims", da.dims, "student layer sizes, comma-separated");
    dist->add_option("--config", da.config, "training config file")->required();
    dist->add_option("--out", da.out, "student model output path")->required();
    dist->add_option("--emit-pairs", da.emit_pairs, "write paired logits for auditing here")
        ->required();

    TuneArgs ua;
    CLI::App* tune_cmd = app.add_subcommand(
        "tune", "Grid-search distillation settings until the spread property holds");
    tune_cmd->add_option("--teacher", ua.teacher, "teacher model file")->required();
    tune_cmd->add_option("--data", ua.data, "training points JSONL")->required();
    tune_cmd->add_option("--eval", ua.eval, "held-out points JSONL")->required();
    tune_cmd->add_option("--dims", ua.dims, "student layer sizes, comma-separated")->required();
    tune_cmd->add_option("--grid", ua.grid, "grid file; omit for the stock search space");
    tune_cmd->add_option("--kappa", ua.kappa, "spread threshold");
    tune_cmd->add_option("--max-acc-drop", ua.max_acc_drop, "largest tolerated eval accuracy drop");
    tune_cmd->add_option("--seed", ua.seed, "baseline config seed")->required();
    tune_cmd->add_option("--out", ua.out, "outcome report path")->required();
    tune_cmd->add_option("--max-trials", ua.max_trials,
                         "cap on grid trials, truncated in enumeration order");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (audit->parsed()) return cmd_audit(aa);
        if (histogram->parsed()) return cmd_histogram(ha);
        if (bound->parsed()) return cmd_bound(ba);
        if (gen->parsed()) return cmd_gen_data(ga);
        if (train->parsed()) return cmd_train_teacher(ta);
        if (dist->parsed()) return cmd_distill(da);
        if (tune_cmd->parsed()) return cmd_tune(ua);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
