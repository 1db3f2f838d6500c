#include "kdaudit/mlp.hpp"

#include <cmath>
#include <sstream>

#include "kdaudit/error.hpp"
#include "kdaudit/kv.hpp"

namespace kdaudit {

std::size_t MlpModel::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

void validate(const MlpModel& m) {
    if (m.layer_dims.size() < 2)
        throw Error("model needs at least [d_in, C] layer dims");
    for (std::size_t d : m.layer_dims)
        if (d == 0)
            throw Error("model has a zero-width layer");
    if (m.layer_dims.back() < 2)
        throw Error("model needs at least 2 output classes");
    const std::size_t layers = m.layer_dims.size() - 1;
    if (m.weights.size() != layers || m.biases.size() != layers)
        throw Error("model has " + std::to_string(m.weights.size()) + " weight and " +
                    std::to_string(m.biases.size()) + " bias blocks, expected " +
                    std::to_string(layers));
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = m.layer_dims[l], out = m.layer_dims[l + 1];
        if (m.weights[l].size() != in * out)
            throw Error("layer " + std::to_string(l) + " weight block has " +
                        std::to_string(m.weights[l].size()) + " entries, expected " +
                        std::to_string(in * out));
        if (m.biases[l].size() != out)
            throw Error("layer " + std::to_string(l) + " bias block has " +
                        std::to_string(m.biases[l].size()) + " entries, expected " +
                        std::to_string(out));
        for (double w : m.weights[l])
            if (!std::isfinite(w)) throw Error("non-finite weight in layer " + std::to_string(l));
        for (double b : m.biases[l])
            if (!std::isfinite(b)) throw Error("non-finite bias in layer " + std::to_string(l));
    }
}

MlpModel init_mlp(const std::vector<std::size_t>& layer_dims, SplitMix64& rng) {
    MlpModel m;
    m.layer_dims = layer_dims;
    if (layer_dims.size() < 2)
        throw Error("model needs at least [d_in, C] layer dims");
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t in = layer_dims[l], out = layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::vector<double> w(in * out), b(out);
        for (double& x : w) x = rng.uniform(-bound, bound);
        for (double& x : b) x = rng.uniform(-bound, bound);
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    validate(m);
    return m;
}

std::vector<double> forward(const MlpModel& m, std::span<const double> features) {
    if (features.size() != m.in_dim())
        throw Error("forward: input has " + std::to_string(features.size()) +
                    " features, model expects " + std::to_string(m.in_dim()));

    std::vector<double> act(features.begin(), features.end());
    std::vector<double> next;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        const std::size_t in = m.layer_dims[l], out = m.layer_dims[l + 1];
        next.assign(out, 0.0);
        const double* w = m.weights[l].data();
        for (std::size_t i = 0; i < out; ++i) {
            double z = m.biases[l][i];
            const double* row = w + i * in;
            for (std::size_t j = 0; j < in; ++j) z += row[j] * act[j];
            next[i] = z;
        }
        if (l + 1 < m.num_layers())
            for (double& z : next) z = z > 0.0 ? z : 0.0;
        act.swap(next);
    }
    return act;
}

void save_model(const MlpModel& m, const std::string& path) {
    validate(m);
    std::string out = "format: kdaudit-mlp-v1\n";
    out += "layer_dims: ";
    for (std::size_t i = 0; i < m.layer_dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(m.layer_dims[i]);
    }
    out += '\n';
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
        out += "weights" + std::to_string(l) + ":";
        for (double w : m.weights[l]) {
            out += ' ';
            out += fmt_double(w);
        }
        out += '\n';
        out += "biases" + std::to_string(l) + ":";
        for (double b : m.biases[l]) {
            out += ' ';
            out += fmt_double(b);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

namespace {

std::vector<double> parse_number_row(const std::string& line, std::size_t expected,
                                     const std::string& context) {
    std::vector<double> out;
    out.reserve(expected);
    std::stringstream ss(line);
    std::string tok;
    while (ss >> tok)
        out.push_back(parse_double(tok, context));
    if (out.size() != expected)
        throw Error(context + ": expected " + std::to_string(expected) + " values, got " +
                    std::to_string(out.size()));
    return out;
}

} // namespace

MlpModel load_model(const std::string& path) {
    const KvPairs kv = parse_kv_text(read_text_file(path));
    if (kv.empty() || kv[0].first != "format" || kv[0].second != "kdaudit-mlp-v1")
        throw Error("'" + path + "' is not a kdaudit-mlp-v1 model file");
    if (kv.size() < 2 || kv[1].first != "layer_dims")
        throw Error("'" + path + "': missing layer_dims");

    MlpModel m;
    m.layer_dims = parse_dims(kv[1].second);
    const std::size_t layers = m.layer_dims.size() - 1;
    if (kv.size() != 2 + 2 * layers)
        throw Error("'" + path + "': expected " + std::to_string(2 * layers) +
                    " parameter rows, got " + std::to_string(kv.size() - 2));
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = m.layer_dims[l], out = m.layer_dims[l + 1];
        const auto& wrow = kv[2 + 2 * l];
        const auto& brow = kv[3 + 2 * l];
        if (wrow.first != "weights" + std::to_string(l))
            throw Error("'" + path + "': expected weights" + std::to_string(l) + ", got '" +
                        wrow.first + "'");
        if (brow.first != "biases" + std::to_string(l))
            throw Error("'" + path + "': expected biases" + std::to_string(l) + ", got '" +
                        brow.first + "'");
        m.weights.push_back(parse_number_row(wrow.second, in * out, path + " weights" + std::to_string(l)));
        m.biases.push_back(parse_number_row(brow.second, out, path + " biases" + std::to_string(l)));
    }
    validate(m);
    return m;
}

std::vector<std::size_t> parse_dims(const std::string& csv) {
    std::vector<std::size_t> dims;
    for (const std::string& tok : split_csv(csv))
        dims.push_back(static_cast<std::size_t>(parse_uint(tok, "layer dims")));
    if (dims.size() < 2)
        throw Error("layer dims need at least [d_in, C], got '" + csv + "'");
    return dims;
}

} // namespace kdaudit
