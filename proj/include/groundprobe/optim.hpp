#pragma once

#include <cmath>
#include <cstdint>

#include "groundprobe/error.hpp"
#include "groundprobe/probe.hpp"

namespace groundprobe {

// Classic Adam with L2 weight decay folded into the gradient.
struct AdamState {
    ParameterSet first_moment;
    ParameterSet second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_probe(const Probe& probe) {
        AdamState state;
        state.first_moment = zeros_like(probe.layers);
        state.second_moment = zeros_like(probe.layers);
        return state;
    }
};

namespace detail {
template <class Param, class Grad, class Moment>
void adam_update(Param& param, const Grad& grad, Moment& m, Moment& v, const AdamState& s, double lr,
                 double weight_decay, double correction1, double correction2) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
        const double g = grad.data()[i] + weight_decay * param.data()[i];
        double& mi = m.data()[i];
        double& vi = v.data()[i];
        mi = s.beta1 * mi + (1.0 - s.beta1) * g;
        vi = s.beta2 * vi + (1.0 - s.beta2) * g * g;
        const double m_hat = mi / correction1;
        const double v_hat = vi / correction2;
        param.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
}
}  // namespace detail

inline void adam_step(Probe& probe, AdamState& state, const ParameterSet& grads, double learning_rate,
                      double weight_decay) {
    require(grads.size() == probe.layers.size() && state.first_moment.size() == probe.layers.size(),
            ErrorKind::validation, "optimizer state does not match probe shape");
    ++state.step;
    const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < probe.layers.size(); ++l) {
        auto& layer = probe.layers[l];
        require(grads[l].weight.size() == layer.weight.size() && grads[l].bias.size() == layer.bias.size(),
                ErrorKind::validation, "gradient shape does not match probe layer " + std::to_string(l));
        detail::adam_update(layer.weight, grads[l].weight, state.first_moment[l].weight, state.second_moment[l].weight,
                            state, learning_rate, weight_decay, correction1, correction2);
        detail::adam_update(layer.bias, grads[l].bias, state.first_moment[l].bias, state.second_moment[l].bias, state,
                            learning_rate, weight_decay, correction1, correction2);
    }
}

}  // namespace groundprobe
