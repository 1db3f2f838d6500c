#include "kdaudit/logits_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "kdaudit/error.hpp"
#include "kdaudit/kv.hpp"
#include "kdaudit/rng.hpp"

namespace kdaudit {

using nlohmann::json;

std::string split_name(Split s) { return s == Split::train ? "train" : "eval"; }

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "eval") return Split::eval;
    throw Error("unknown split '" + name + "' (expected train or eval)");
}

std::string task_name(Task t) {
    switch (t) {
        case Task::blobs: return "blobs";
        case Task::moons: return "moons";
        case Task::xor_clusters: return "xor";
    }
    throw Error("invalid task enum value");
}

Task task_from_name(const std::string& name) {
    if (name == "blobs") return Task::blobs;
    if (name == "moons") return Task::moons;
    if (name == "xor") return Task::xor_clusters;
    throw Error("unknown task '" + name + "' (expected blobs, moons, or xor)");
}

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void validate_record(const PairedLogitRecord& rec, const std::string& where) {
    if (rec.teacher_logits.size() != rec.student_logits.size())
        throw Error(where + ": dimension mismatch for id '" + rec.id + "': teacher has " +
                    std::to_string(rec.teacher_logits.size()) + " logits, student has " +
                    std::to_string(rec.student_logits.size()));
    if (rec.teacher_logits.size() < 2)
        throw Error(where + ": record '" + rec.id + "' needs at least 2 classes, got " +
                    std::to_string(rec.teacher_logits.size()));
    if (!all_finite(rec.teacher_logits) || !all_finite(rec.student_logits))
        throw Error(where + ": non-finite logit in record '" + rec.id + "'");
    if (rec.label && *rec.label >= rec.num_classes())
        throw Error(where + ": label " + std::to_string(*rec.label) + " out of range for id '" +
                    rec.id + "' (C=" + std::to_string(rec.num_classes()) + ")");
}

} // namespace

void validate(const PairedDataset& ds) {
    if (ds.records.empty())
        throw Error("dataset is empty");
    const std::size_t classes = ds.records.front().num_classes();
    std::unordered_set<std::string> ids;
    ids.reserve(ds.records.size());
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& rec = ds.records[i];
        const std::string where = "record " + std::to_string(i + 1);
        validate_record(rec, where);
        if (rec.num_classes() != classes)
            throw Error(where + ": dimension mismatch for id '" + rec.id + "': has C=" +
                        std::to_string(rec.num_classes()) + ", dataset has C=" +
                        std::to_string(classes));
        if (!ids.insert(rec.id).second)
            throw Error(where + ": duplicate id '" + rec.id + "'");
    }
}

namespace {

std::vector<double> number_array(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key))
        throw Error(where + ": missing field '" + key + "'");
    const json& arr = j.at(key);
    if (!arr.is_array())
        throw Error(where + ": field '" + key + "' is not an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number())
            throw Error(where + ": field '" + key + "' contains a non-numeric entry");
        out.push_back(v.get<double>());
    }
    return out;
}

} // namespace

PairedDataset load_paired(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");

    PairedDataset ds;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineno);

        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(where + ": parse error: " + e.what());
        }
        if (!j.is_object())
            throw Error(where + ": expected a JSON object");

        PairedLogitRecord rec;
        if (!j.contains("id") || !j.at("id").is_string())
            throw Error(where + ": missing or non-string field 'id'");
        rec.id = j.at("id").get<std::string>();
        rec.teacher_logits = number_array(j, "teacher_logits", where);
        rec.student_logits = number_array(j, "student_logits", where);
        if (j.contains("label") && !j.at("label").is_null()) {
            const json& lab = j.at("label");
            if (!lab.is_number_integer())
                throw Error(where + ": field 'label' must be an integer or null");
            const std::int64_t v = lab.get<std::int64_t>();
            if (v < 0)
                throw Error(where + ": negative label for id '" + rec.id + "'");
            rec.label = static_cast<std::size_t>(v);
        }

        validate_record(rec, where);
        if (!ds.records.empty() && rec.num_classes() != ds.num_classes())
            throw Error(where + ": dimension mismatch for id '" + rec.id + "': has C=" +
                        std::to_string(rec.num_classes()) + ", dataset has C=" +
                        std::to_string(ds.num_classes()));
        if (!ids.insert(rec.id).second)
            throw Error(where + ": duplicate id '" + rec.id + "'");
        ds.records.push_back(std::move(rec));
    }
    if (in.bad())
        throw Error("I/O failure while reading '" + path + "'");
    if (ds.records.empty())
        throw Error("'" + path + "' contains no records");
    return ds;
}

namespace {

void append_array(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(v[i]);
    }
    out += ']';
}

} // namespace

void save_paired(const PairedDataset& ds, const std::string& path) {
    validate(ds);
    std::string out;
    for (const auto& rec : ds.records) {
        out += "{\"id\":";
        out += json(rec.id).dump();
        out += ",\"teacher_logits\":";
        append_array(out, rec.teacher_logits);
        out += ",\"student_logits\":";
        append_array(out, rec.student_logits);
        out += ",\"label\":";
        out += rec.label ? std::to_string(*rec.label) : "null";
        out += "}\n";
    }
    write_text_file(path, out);
}

std::vector<LabeledPoint> gen_synthetic(Task task, std::size_t n, double noise,
                                        std::uint64_t seed) {
    if (n < 4)
        throw Error("gen_synthetic needs n >= 4, got " + std::to_string(n));
    if (!(noise >= 0.0))
        throw Error("gen_synthetic needs noise >= 0");

    SplitMix64 rng(seed);
    std::vector<LabeledPoint> out;
    out.reserve(n);

    constexpr double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        LabeledPoint p;
        double cx = 0.0, cy = 0.0;
        switch (task) {
            case Task::blobs:
                p.label = i % 2;
                cx = p.label == 0 ? -2.0 : 2.0;
                cy = cx;
                break;
            case Task::moons: {
                p.label = i % 2;
                const double t = rng.uniform(0.0, pi);
                if (p.label == 0) {
                    cx = std::cos(t);
                    cy = std::sin(t);
                } else {
                    cx = 1.0 - std::cos(t);
                    cy = 0.5 - std::sin(t);
                }
                break;
            }
            case Task::xor_clusters: {
                // Cycle (1,1) (1,-1) (-1,-1) (-1,1) so every prefix stays
                // balanced; label = XOR of the coordinate signs.
                static constexpr double cxs[4] = {1.0, 1.0, -1.0, -1.0};
                static constexpr double cys[4] = {1.0, -1.0, -1.0, 1.0};
                cx = cxs[i % 4];
                cy = cys[i % 4];
                p.label = (cx > 0) == (cy > 0) ? 0 : 1;
                break;
            }
        }
        p.features = {cx + noise * rng.normal(), cy + noise * rng.normal()};
        out.push_back(std::move(p));
    }
    return out;
}

std::pair<std::vector<LabeledPoint>, std::vector<LabeledPoint>>
split_points(const std::vector<LabeledPoint>& points, double eval_fraction,
             std::uint64_t seed) {
    const std::size_t n = points.size();
    if (n < 2)
        throw Error("split needs at least 2 points, got " + std::to_string(n));
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0))
        throw Error("eval_fraction must be in (0,1)");

    std::size_t eval_n = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * eval_fraction));
    if (eval_n < 1) eval_n = 1;
    if (eval_n > n - 1) eval_n = n - 1;

    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    SplitMix64 rng(seed);
    rng.shuffle(idx);

    std::vector<LabeledPoint> eval_set, train_set;
    eval_set.reserve(eval_n);
    train_set.reserve(n - eval_n);
    for (std::size_t i = 0; i < n; ++i)
        (i < eval_n ? eval_set : train_set).push_back(points[idx[i]]);
    return {std::move(train_set), std::move(eval_set)};
}

std::vector<LabeledPoint> load_points(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open '" + path + "' for reading");

    std::vector<LabeledPoint> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t dims = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::string where = "line " + std::to_string(lineno);

        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(where + ": parse error: " + e.what());
        }
        if (!j.is_object())
            throw Error(where + ": expected a JSON object");

        LabeledPoint p;
        p.features = number_array(j, "features", where);
        if (p.features.empty() || !all_finite(p.features))
            throw Error(where + ": features must be non-empty and finite");
        if (!j.contains("label") || !j.at("label").is_number_integer())
            throw Error(where + ": missing or non-integer field 'label'");
        const std::int64_t v = j.at("label").get<std::int64_t>();
        if (v < 0)
            throw Error(where + ": negative label");
        p.label = static_cast<std::size_t>(v);

        if (dims == 0)
            dims = p.features.size();
        else if (p.features.size() != dims)
            throw Error(where + ": feature dimension " + std::to_string(p.features.size()) +
                        " differs from earlier records (" + std::to_string(dims) + ")");
        out.push_back(std::move(p));
    }
    if (in.bad())
        throw Error("I/O failure while reading '" + path + "'");
    if (out.empty())
        throw Error("'" + path + "' contains no records");
    return out;
}

void save_points(const std::vector<LabeledPoint>& points, const std::string& path) {
    if (points.empty())
        throw Error("refusing to save an empty point list");
    std::string out;
    for (const auto& p : points) {
        out += "{\"features\":";
        append_array(out, p.features);
        out += ",\"label\":";
        out += std::to_string(p.label);
        out += "}\n";
    }
    write_text_file(path, out);
}

} // namespace kdaudit
