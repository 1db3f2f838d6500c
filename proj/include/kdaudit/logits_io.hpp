#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace kdaudit {

enum class Split { train, eval };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// One input's logits under both models, plus the ground-truth label when
/// known. Both logit vectors must have the same length (the class count).
struct PairedLogitRecord {
    std::string id;
    std::vector<double> teacher_logits;
    std::vector<double> student_logits;
    std::optional<std::size_t> label;

    std::size_t num_classes() const { return teacher_logits.size(); }
};

struct PairedDataset {
    std::vector<PairedLogitRecord> records;
    Split split_tag = Split::train;

    std::size_t size() const { return records.size(); }
    std::size_t num_classes() const { return records.empty() ? 0 : records.front().num_classes(); }
};

/// Throws Error unless the dataset is non-empty, ids are unique, every
/// record is finite with a consistent class count >= 2, and labels are in
/// range.
void validate(const PairedDataset& ds);

/// Reads line-delimited records: one JSON object per line with keys "id",
/// "teacher_logits", "student_logits", "label" (int or null). Unknown keys
/// are ignored. Errors carry the 1-based line number.
PairedDataset load_paired(const std::string& path);

/// Inverse of load_paired. Numbers are written with 17 significant digits
/// so the round-trip is exact. Refuses empty datasets.
void save_paired(const PairedDataset& ds, const std::string& path);

struct LabeledPoint {
    std::vector<double> features;
    std::size_t label;
};

enum class Task { blobs, moons, xor_clusters };

Task task_from_name(const std::string& name);
std::string task_name(Task t);

/// Deterministic 2-D binary classification data. blobs = two Gaussian
/// clusters at (-2,-2)/(2,2); moons = two interleaved half-circles;
/// xor = four clusters at (+-1,+-1) labeled by the sign product. Classes
/// are balanced within +-1; `noise` is the per-coordinate Gaussian sigma.
std::vector<LabeledPoint> gen_synthetic(Task task, std::size_t n, double noise,
                                        std::uint64_t seed);

/// Seeded disjoint partition into (train, eval). The eval side gets
/// round(n * eval_fraction) points clamped to [1, n-1].
std::pair<std::vector<LabeledPoint>, std::vector<LabeledPoint>>
split_points(const std::vector<LabeledPoint>& points, double eval_fraction,
             std::uint64_t seed);

/// Line-delimited {"features":[...],"label":N} files.
std::vector<LabeledPoint> load_points(const std::string& path);
void save_points(const std::vector<LabeledPoint>& points, const std::string& path);

} // namespace kdaudit
