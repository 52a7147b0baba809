#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stylerl/tensor.hpp"

namespace stylerl {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers for a fixed, ordered parameter list.
struct AdamState {
    AdamConfig config;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(AdamConfig cfg, std::span<const ParamRef> params);
};

// Bias-corrected Adam update using each parameter's accumulated grad.
// Throws ShapeError when grads or moments do not match the parameters.
void adam_step(std::span<const ParamRef> params, AdamState& state);

void zero_grads(std::span<const ParamRef> params);

// Gradient check against central finite differences.
struct ParamGradError {
    std::string name;
    double max_rel_error = 0.0; // max |analytic - numeric| / max(1, |numeric|)
    std::size_t checked = 0;
};

struct GradCheckReport {
    std::vector<ParamGradError> params;
    double max_error() const;
    bool passed(double tol) const { return max_error() <= tol; }
};

struct GradCheckOptions {
    double h = 1e-5;
    // When nonzero, at most this many coordinates per parameter are probed
    // (evenly strided) to keep large models affordable.
    std::size_t max_coords = 0;
};

// scalar_fn builds a scalar loss on the given tape from the parameters it
// closes over. Throws DeterminismError when two evaluations at the same
// point disagree.
GradCheckReport check_gradients(const std::function<Var(Tape&)>& scalar_fn,
                                std::span<const ParamRef> params, GradCheckOptions options = {});

} // namespace stylerl
