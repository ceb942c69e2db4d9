#pragma once
// ReLU MLP probe mapping a hidden state to a scalar correctness logit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "groundprobe/detail/binary_io.hpp"
#include "groundprobe/error.hpp"
#include "groundprobe/rng.hpp"

namespace groundprobe {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ColVector = Eigen::Matrix<double, Eigen::Dynamic, 1>;

using Widths = std::vector<std::size_t>;

struct ProbeConfig {
    Widths hidden_widths{128, 64};
    double dropout = 0.1;
    double learning_rate = 1e-3;
    double weight_decay = 1e-5;
    double beta = 0.26;    // Brier weight
    double lambda = 0.20;  // rank weight
    double gamma = 0.09;   // rank margin, probability units
    std::uint64_t seed = 23;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;

    friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

// Hard preconditions. Coefficients outside the search ranges are allowed
// (ablations zero them) and reported by config_warnings instead.
inline void validate(const ProbeConfig& config) {
    for (const auto w : config.hidden_widths) require(w > 0, ErrorKind::validation, "hidden widths must be positive");
    require(config.dropout >= 0.0 && config.dropout < 1.0, ErrorKind::validation, "dropout must lie in [0, 1)");
    require(config.learning_rate > 0.0, ErrorKind::validation, "learning_rate must be positive");
    require(config.weight_decay >= 0.0, ErrorKind::validation, "weight_decay must be nonnegative");
    require(config.beta >= 0.0, ErrorKind::validation, "beta must be nonnegative");
    require(config.lambda >= 0.0, ErrorKind::validation, "lambda must be nonnegative");
    require(config.gamma > 0.0, ErrorKind::validation, "gamma must be positive");
    require(config.batch_size >= 1, ErrorKind::validation, "batch_size must be >= 1");
    require(config.max_epochs >= 1, ErrorKind::validation, "max_epochs must be >= 1");
    require(config.patience >= 1, ErrorKind::validation, "patience must be >= 1");
}

inline std::vector<std::string> config_warnings(const ProbeConfig& config) {
    std::vector<std::string> out;
    const double d = config.dropout;
    if (d != 0.0 && d != 0.1 && d != 0.3 && d != 0.5) out.push_back("dropout outside {0, 0.1, 0.3, 0.5}");
    if (config.beta > 0.5) out.push_back("beta outside [0, 0.5]");
    if (config.lambda < 0.01 || config.lambda > 0.3) out.push_back("lambda outside [0.01, 0.3]");
    if (config.gamma < 0.05 || config.gamma > 0.25) out.push_back("gamma outside [0.05, 0.25]");
    return out;
}

inline nlohmann::json to_json(const ProbeConfig& c) {
    return {{"hidden_widths", c.hidden_widths}, {"dropout", c.dropout},       {"learning_rate", c.learning_rate},
            {"weight_decay", c.weight_decay},   {"beta", c.beta},             {"lambda", c.lambda},
            {"gamma", c.gamma},                 {"seed", c.seed},             {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},       {"patience", c.patience}};
}

// Fields absent from `j` keep the values already in `config`.
inline void update_from_json(ProbeConfig& config, const nlohmann::json& j) {
    require(j.is_object(), ErrorKind::format, "probe config must be a JSON object");
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    take("hidden_widths", config.hidden_widths);
    take("dropout", config.dropout);
    take("learning_rate", config.learning_rate);
    take("weight_decay", config.weight_decay);
    take("beta", config.beta);
    take("lambda", config.lambda);
    take("gamma", config.gamma);
    take("seed", config.seed);
    take("batch_size", config.batch_size);
    take("max_epochs", config.max_epochs);
    take("patience", config.patience);
}

// Weight is fan_in x fan_out; a row of activations times weight plus bias
// gives the next layer.
struct Layer {
    Matrix weight;
    RowVector bias;
};

using ParameterSet = std::vector<Layer>;

struct Probe {
    std::uint32_t d_h = 0;
    Widths hidden_widths;
    double dropout = 0.0;
    ParameterSet layers;

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& layer : layers) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
        return n;
    }
};

inline bool operator==(const Layer& a, const Layer& b) {
    return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() && a.weight == b.weight &&
           a.bias.size() == b.bias.size() && a.bias == b.bias;
}

inline bool operator==(const Probe& a, const Probe& b) {
    return a.d_h == b.d_h && a.hidden_widths == b.hidden_widths && a.dropout == b.dropout && a.layers == b.layers;
}

// Trainable scalars of d_h -> H_1 -> ... -> H_k -> 1, biases included.
constexpr std::uint64_t param_count(std::span<const std::size_t> widths, std::uint64_t d_h) {
    std::uint64_t fan_in = d_h;
    std::uint64_t total = 0;
    for (const auto w : widths) {
        total += fan_in * w + w;
        fan_in = w;
    }
    return total + fan_in + 1;
}

inline std::uint64_t param_count(const Widths& widths, std::uint64_t d_h) {
    return param_count(std::span<const std::size_t>(widths), d_h);
}

inline ParameterSet zeros_like(const ParameterSet& params) {
    ParameterSet out;
    out.reserve(params.size());
    for (const auto& layer : params) {
        out.push_back({Matrix::Zero(layer.weight.rows(), layer.weight.cols()), RowVector::Zero(layer.bias.size())});
    }
    return out;
}

// He-uniform weights (bound sqrt(6 / fan_in)) drawn layer by layer in
// row-major order from the init substream of config.seed; zero biases.
inline Probe init_probe(const ProbeConfig& config, std::uint32_t d_h) {
    require(d_h >= 1, ErrorKind::validation, "d_h must be >= 1");
    validate(config);
    Probe probe;
    probe.d_h = d_h;
    probe.hidden_widths = config.hidden_widths;
    probe.dropout = config.dropout;

    Rng rng = Rng::substream(config.seed, streams::init);
    std::size_t fan_in = d_h;
    auto add_layer = [&](std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Layer layer{Matrix(fan_in, fan_out), RowVector::Zero(static_cast<Eigen::Index>(fan_out))};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
        }
        probe.layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (const auto w : config.hidden_widths) add_layer(w);
    add_layer(1);
    return probe;
}

enum class Mode { train, eval };

// Probability in (0, 1) for any finite logit. Saturated values are clamped
// to the nearest representable interior points.
inline double stable_sigmoid(double logit) {
    constexpr double upper = 1.0 - 0x1.0p-53;
    constexpr double lower = std::numeric_limits<double>::min();
    double p;
    if (logit >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-logit));
    } else {
        const double e = std::exp(logit);
        p = e / (1.0 + e);
    }
    return std::clamp(p, lower, upper);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Everything backpropagation needs from one forward pass over a batch.
struct ForwardCache {
    std::vector<Matrix> inputs;       // inputs[l] feeds layer l; inputs[0] is the batch itself
    std::vector<Matrix> preactivations;  // hidden layers only
    std::vector<Matrix> masks;        // hidden layers only; empty in eval mode or when dropout is 0
    ColVector logits;
};

inline ForwardCache forward_batch(const Probe& probe, const Matrix& batch, Mode mode, Rng* rng) {
    require(batch.cols() == static_cast<Eigen::Index>(probe.d_h), ErrorKind::validation,
            "input dimension " + std::to_string(batch.cols()) + " does not match probe d_h " + std::to_string(probe.d_h));
    const bool use_dropout = mode == Mode::train && probe.dropout > 0.0;
    require(!use_dropout || rng != nullptr, ErrorKind::validation, "train-mode dropout needs a random stream");
    const double keep = 1.0 - probe.dropout;
    const double scale = use_dropout ? 1.0 / keep : 1.0;

    ForwardCache cache;
    const std::size_t hidden = probe.layers.size() - 1;
    cache.inputs.reserve(probe.layers.size());
    cache.inputs.push_back(batch);
    for (std::size_t l = 0; l < hidden; ++l) {
        const auto& layer = probe.layers[l];
        Matrix z = cache.inputs.back() * layer.weight;
        z.rowwise() += layer.bias;
        Matrix a = z.cwiseMax(0.0);
        if (use_dropout) {
            Matrix mask(a.rows(), a.cols());
            for (Eigen::Index r = 0; r < mask.rows(); ++r) {
                for (Eigen::Index c = 0; c < mask.cols(); ++c) mask(r, c) = rng->bernoulli(keep) ? scale : 0.0;
            }
            a = a.cwiseProduct(mask);
            cache.masks.push_back(std::move(mask));
        }
        cache.preactivations.push_back(std::move(z));
        cache.inputs.push_back(std::move(a));
    }
    const auto& out = probe.layers.back();
    Matrix logits = cache.inputs.back() * out.weight;
    logits.rowwise() += out.bias;
    cache.logits = logits.col(0);
    return cache;
}

// Accumulates d(loss)/d(parameters) into `grads` given d(loss)/d(logit) per row.
inline void backward_batch(const Probe& probe, const ForwardCache& cache, const ColVector& dlogits, ParameterSet& grads) {
    Matrix delta = dlogits;
    for (std::size_t l = probe.layers.size(); l-- > 0;) {
        grads[l].weight.noalias() += cache.inputs[l].transpose() * delta;
        grads[l].bias += delta.colwise().sum();
        if (l == 0) break;
        Matrix upstream = delta * probe.layers[l].weight.transpose();
        if (!cache.masks.empty()) upstream = upstream.cwiseProduct(cache.masks[l - 1]);
        delta = upstream.cwiseProduct((cache.preactivations[l - 1].array() > 0.0).cast<double>().matrix());
    }
}

struct SingleForward {
    double logit = 0.0;
    ForwardCache cache;
};

inline SingleForward forward(const Probe& probe, std::span<const double> h, Mode mode, Rng* rng = nullptr) {
    require(h.size() == probe.d_h, ErrorKind::validation,
            "input dimension " + std::to_string(h.size()) + " does not match probe d_h " + std::to_string(probe.d_h));
    Matrix row(1, static_cast<Eigen::Index>(h.size()));
    for (std::size_t j = 0; j < h.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = h[j];
    SingleForward out;
    out.cache = forward_batch(probe, row, mode, rng);
    out.logit = out.cache.logits(0);
    return out;
}

template <class Vec>
Matrix to_matrix(std::span<const Vec> rows, std::size_t d) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == d, ErrorKind::validation,
                "row " + std::to_string(i) + " has length " + std::to_string(rows[i].size()) + ", expected " +
                    std::to_string(d));
        for (std::size_t j = 0; j < d; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = static_cast<double>(rows[i][j]);
        }
    }
    return m;
}

// Eval-mode confidences for every row, processed in fixed 256-row chunks.
inline std::vector<double> predict(const Probe& probe, const Matrix& features) {
    require(features.cols() == static_cast<Eigen::Index>(probe.d_h), ErrorKind::validation,
            "input dimension does not match probe d_h");
    constexpr Eigen::Index chunk = 256;
    std::vector<double> out(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index start = 0; start < features.rows(); start += chunk) {
        const Eigen::Index n = std::min(chunk, features.rows() - start);
        const auto cache = forward_batch(probe, features.middleRows(start, n), Mode::eval, nullptr);
        for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(start + i)] = stable_sigmoid(cache.logits(i));
    }
    return out;
}

template <class Vec>
std::vector<double> predict(const Probe& probe, std::span<const Vec> base_features) {
    return predict(probe, to_matrix(base_features, probe.d_h));
}

// ---------------------------------------------------------------------------
// Serialization: magic "BICRPB01", u32 d_h, u32 k, k x u32 widths, f64
// dropout, then per layer the row-major f64 weight (fan_in x fan_out)
// followed by the f64 bias. Little-endian throughout.

inline constexpr std::string_view kProbeMagic = "BICRPB01";

inline detail::Bytes encode_probe(const Probe& probe) {
    detail::Bytes out;
    detail::put_raw(out, kProbeMagic);
    detail::put_le<std::uint32_t>(out, probe.d_h);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(probe.hidden_widths.size()));
    for (const auto w : probe.hidden_widths) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    detail::put_f64(out, probe.dropout);
    for (const auto& layer : probe.layers) {
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) detail::put_f64(out, layer.weight(r, c));
        }
        for (Eigen::Index c = 0; c < layer.bias.size(); ++c) detail::put_f64(out, layer.bias(c));
    }
    return out;
}

inline Probe decode_probe(std::span<const std::uint8_t> bytes) {
    detail::Reader in(bytes);
    if (bytes.size() < kProbeMagic.size() ||
        std::string_view(reinterpret_cast<const char*>(bytes.data()), kProbeMagic.size()) != kProbeMagic) {
        fail(ErrorKind::format, "bad magic: not a probe file");
    }
    (void)in.get_raw(kProbeMagic.size());
    Probe probe;
    probe.d_h = in.get_le<std::uint32_t>();
    require(probe.d_h >= 1, ErrorKind::format, "probe d_h must be >= 1");
    const auto k = in.get_le<std::uint32_t>();
    require(k <= in.remaining() / 4, ErrorKind::truncation, "probe width list is truncated");
    for (std::uint32_t i = 0; i < k; ++i) {
        const auto w = in.get_le<std::uint32_t>();
        require(w > 0, ErrorKind::format, "probe widths must be positive");
        probe.hidden_widths.push_back(w);
    }
    probe.dropout = in.get_f64();
    const std::uint64_t expected = param_count(probe.hidden_widths, probe.d_h);
    require(in.remaining() == expected * 8, in.remaining() < expected * 8 ? ErrorKind::truncation : ErrorKind::format,
            "probe parameter block has " + std::to_string(in.remaining()) + " bytes, expected " +
                std::to_string(expected * 8));
    std::size_t fan_in = probe.d_h;
    auto read_layer = [&](std::size_t fan_out) {
        Layer layer{Matrix(fan_in, fan_out), RowVector(static_cast<Eigen::Index>(fan_out))};
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = in.get_f64();
        }
        for (Eigen::Index c = 0; c < layer.bias.size(); ++c) layer.bias(c) = in.get_f64();
        require(layer.weight.allFinite() && layer.bias.allFinite(), ErrorKind::validation, "probe has non-finite parameters");
        probe.layers.push_back(std::move(layer));
        fan_in = fan_out;
    };
    for (const auto w : probe.hidden_widths) read_layer(w);
    read_layer(1);
    return probe;
}

inline void write_probe(const std::filesystem::path& path, const Probe& probe) {
    detail::write_file_bytes(path, encode_probe(probe));
}

inline Probe read_probe(const std::filesystem::path& path) { return decode_probe(detail::read_file_bytes(path)); }

}  // namespace groundprobe
