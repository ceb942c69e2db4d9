#pragma once
// Synthetic paired hidden states with a controllable grounded/ungrounded mix.
//
// Per seed: two orthonormal directions u (correctness) and v (grounding),
// Gram-Schmidt on two Gaussian draws. Per sample:
//   G ~ Bernoulli(rho_grounded)
//   y ~ Bernoulli(q_grounded) if G else Bernoulli(q_prior)
//   z ~ N(0, noise_sigma^2 I)
//   h_blank = z
//   h_base  = z + c v + (2y - 1) s u        if G
//   h_base  = z + eta, eta ~ N(0, (0.01 noise_sigma)^2 I)   otherwise
// Splits are drawn in order train, val, test from one stream, so all share
// u and v. Vectors are stored at binary32, as in feature files.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundprobe/error.hpp"
#include "groundprobe/feature_store.hpp"
#include "groundprobe/rng.hpp"

namespace groundprobe {

inline constexpr double kUngroundedJitter = 0.01;

struct SynthConfig {
    std::size_t n_train = 20000;
    std::size_t n_val = 5000;
    std::size_t n_test = 10000;
    std::uint32_t d_h = 64;
    double rho_grounded = 0.7;
    double q_grounded = 0.85;
    double q_prior = 0.6;
    double signal_strength = 2.0;     // s
    double grounding_strength = 2.0;  // c
    double noise_sigma = 1.0;
    std::uint64_t seed = 23;

    [[nodiscard]] std::size_t n() const { return n_train + n_val + n_test; }
};

inline void validate(const SynthConfig& c) {
    require(c.d_h >= 2, ErrorKind::validation, "synthgen needs d_h >= 2 to hold two orthogonal directions");
    require(c.n() >= 1, ErrorKind::validation, "synthgen needs at least one sample");
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    require(unit(c.rho_grounded), ErrorKind::validation, "rho_grounded must lie in [0,1]");
    require(unit(c.q_grounded), ErrorKind::validation, "q_grounded must lie in [0,1]");
    require(unit(c.q_prior), ErrorKind::validation, "q_prior must lie in [0,1]");
    require(c.signal_strength > 0.0, ErrorKind::validation, "signal_strength must be positive");
    require(c.grounding_strength > 0.0, ErrorKind::validation, "grounding_strength must be positive");
    require(c.noise_sigma > 0.0, ErrorKind::validation, "noise_sigma must be positive");
}

inline nlohmann::json to_json(const SynthConfig& c) {
    return {{"n_train", c.n_train},
            {"n_val", c.n_val},
            {"n_test", c.n_test},
            {"d_h", c.d_h},
            {"rho_grounded", c.rho_grounded},
            {"q_grounded", c.q_grounded},
            {"q_prior", c.q_prior},
            {"signal_strength", c.signal_strength},
            {"grounding_strength", c.grounding_strength},
            {"noise_sigma", c.noise_sigma},
            {"seed", c.seed}};
}

struct SynthDataset {
    std::uint32_t d_h = 0;
    std::vector<PairedSample> samples;  // train, then val, then test
    std::vector<bool> grounded;
    Manifest manifest;                  // flip_swap = 1 - grounded
    std::vector<double> u;              // correctness direction
    std::vector<double> v;              // grounding direction

    [[nodiscard]] std::vector<PairedSample> split(Split which) const { return select_split(samples, which); }

    [[nodiscard]] std::vector<FeatureRecord> records(View view, const std::string& lvlm_id = "synthetic") const {
        std::vector<FeatureRecord> out;
        out.reserve(samples.size());
        for (const auto& s : samples) {
            out.push_back({s.hash_id, lvlm_id, view, s.split, s.y, view == View::base ? s.h_base : s.h_blank});
        }
        return out;
    }
};

inline SynthDataset generate(const SynthConfig& config) {
    validate(config);
    const std::size_t d = config.d_h;
    Rng rng = Rng::substream(config.seed, streams::synth);
    Rng id_rng = Rng::substream(config.seed, streams::synth_ids);

    std::vector<double> u(d), v(d);
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a[j] * b[j];
        return s;
    };
    const double u_norm = std::sqrt(dot(u, u));
    for (auto& x : u) x /= u_norm;
    const double proj = dot(u, v);
    for (std::size_t j = 0; j < d; ++j) v[j] -= proj * u[j];
    const double v_norm = std::sqrt(dot(v, v));
    require(v_norm > 0.0, ErrorKind::validation, "degenerate direction draw");
    for (auto& x : v) x /= v_norm;

    SynthDataset data;
    data.d_h = config.d_h;
    data.u = u;
    data.v = v;
    data.samples.reserve(config.n());
    data.grounded.reserve(config.n());

    const std::pair<Split, std::size_t> plan[] = {
        {Split::train, config.n_train}, {Split::val, config.n_val}, {Split::test, config.n_test}};
    std::vector<double> z(d);
    for (const auto& [split, count] : plan) {
        for (std::size_t i = 0; i < count; ++i) {
            const bool g = rng.bernoulli(config.rho_grounded);
            const bool correct = rng.bernoulli(g ? config.q_grounded : config.q_prior);
            for (auto& x : z) x = config.noise_sigma * rng.normal();

            PairedSample s;
            for (std::size_t k = 0; k < 2; ++k) {
                const std::uint64_t word = id_rng.next();
                for (std::size_t b = 0; b < 8; ++b) s.hash_id[8 * k + b] = static_cast<std::uint8_t>(word >> (8 * b));
            }
            s.y = correct ? Label::correct : Label::incorrect;
            s.split = split;
            s.dataset = "synthetic";
            s.h_blank.resize(d);
            s.h_base.resize(d);
            const double sign = correct ? 1.0 : -1.0;
            for (std::size_t j = 0; j < d; ++j) {
                s.h_blank[j] = static_cast<float>(z[j]);
                double base = z[j];
                if (g) {
                    base += config.grounding_strength * v[j] + sign * config.signal_strength * u[j];
                } else {
                    base += kUngroundedJitter * config.noise_sigma * rng.normal();
                }
                s.h_base[j] = static_cast<float>(base);
            }
            data.manifest.add({to_hex(s.hash_id), "synthetic", g ? "grounded" : "ungrounded", g ? 1 : 0, std::nullopt,
                               std::nullopt});
            data.grounded.push_back(g);
            data.samples.push_back(std::move(s));
        }
    }
    return data;
}

}  // namespace groundprobe
