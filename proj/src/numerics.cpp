#include "dvs/numerics.hpp"

#include <cmath>
#include <stdexcept>

namespace dvs {

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state size mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  std::vector<double> params,
                  const std::vector<double>& analytic_grads,
                  double epsilon) {
    if (params.size() != analytic_grads.size())
        throw ShapeError("grad_check: gradient size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + epsilon;
        const double fp = f(params);
        params[i] = saved - epsilon;
        const double fm = f(params);
        params[i] = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("grad_check: non-finite objective evaluation");
        const double fd = (fp - fm) / (2.0 * epsilon);
        const double an = analytic_grads[i];
        const double rel = std::fabs(fd - an) / std::max(1e-12, std::fabs(fd) + std::fabs(an));
        worst = std::max(worst, rel);
    }
    return worst;
}

void glorot_init(Matrix& w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.raw()) v = dist(rng);
}

}  // namespace dvs
