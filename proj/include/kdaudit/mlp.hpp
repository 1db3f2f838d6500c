#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kdaudit/rng.hpp"

namespace kdaudit {

/// Fully connected feed-forward classifier: rectifier on hidden layers,
/// identity on the output layer (raw logits). Weights are row-major
/// [out x in] per layer.
struct MlpModel {
    std::vector<std::size_t> layer_dims; // [d_in, h_1, ..., C]
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t in_dim() const { return layer_dims.front(); }
    std::size_t out_dim() const { return layer_dims.back(); }
    std::size_t param_count() const;
};

/// Throws Error if shapes are inconsistent or parameters non-finite.
void validate(const MlpModel& m);

/// Per-layer uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], weights
/// first then biases, layer by layer.
MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, SplitMix64& rng);

std::vector<double> forward(const MlpModel& m, std::span<const double> features);

/// Plain-text model file, round-trip exact (17 significant digits).
void save_model(const MlpModel& m, const std::string& path);
MlpModel load_model(const std::string& path);

std::vector<std::size_t> parse_dims(const std::string& csv);

} // namespace kdaudit
