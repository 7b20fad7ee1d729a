#pragma once

#include <functional>
#include <random>
#include <vector>

#include "dvs/matrix.hpp"

namespace dvs {

/// Adam moment buffers for one flat parameter vector. Shapes mirror the
/// parameter layout owned by the caller.
struct AdamState {
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-5;
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t n = 0, double lr = 1e-5)
        : learning_rate(lr), m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update over a flat parameter/gradient pair.
/// Increments state.step before computing the corrections.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state);

/// Max relative error between analytic gradients and central finite
/// differences of f over the flat parameter vector.
double grad_check(const std::function<double(const std::vector<double>&)>& f,
                  std::vector<double> params,
                  const std::vector<double>& analytic_grads,
                  double epsilon);

/// Fill with uniform(-sqrt(6/(fan_in+fan_out)), +...) draws.
void glorot_init(Matrix& w, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

}  // namespace dvs
