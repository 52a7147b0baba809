#include "stylerl/optim.hpp"

#include <algorithm>
#include <cmath>

#include "stylerl/errors.hpp"

namespace stylerl {

AdamState::AdamState(AdamConfig cfg, std::span<const ParamRef> params) : config(cfg) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
        m.emplace_back(p.tensor->values.size(), 0.0);
        v.emplace_back(p.tensor->values.size(), 0.0);
    }
}

void adam_step(std::span<const ParamRef> params, AdamState& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor& p = *params[k].tensor;
        if (p.grad.size() != p.values.size())
            throw ShapeError("adam: gradient of " + params[k].name + " has " +
                             std::to_string(p.grad.size()) + " entries for " +
                             std::to_string(p.values.size()) + " values");
        if (state.m[k].size() != p.values.size() || state.v[k].size() != p.values.size())
            throw ShapeError("adam: moment buffers do not match " + params[k].name);
    }

    const auto& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k].tensor;
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            const double g = p.grad[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
        }
    }
}

void zero_grads(std::span<const ParamRef> params) {
    for (const auto& p : params)
        p.tensor->zero_grad();
}

double GradCheckReport::max_error() const {
    double worst = 0.0;
    for (const auto& p : params)
        worst = std::max(worst, p.max_rel_error);
    return worst;
}

namespace {

double evaluate(const std::function<Var(Tape&)>& fn) {
    Tape tape(false);
    return fn(tape).item();
}

} // namespace

GradCheckReport check_gradients(const std::function<Var(Tape&)>& scalar_fn,
                                std::span<const ParamRef> params, GradCheckOptions options) {
    if (!(options.h > 0.0))
        throw ConfigError("finite-difference step must be positive");

    const double first = evaluate(scalar_fn);
    const double second = evaluate(scalar_fn);
    if (first != second)
        throw DeterminismError("scalar function returned " + std::to_string(first) + " then " +
                               std::to_string(second) + " at the same point");

    zero_grads(params);
    {
        Tape tape;
        Var loss = scalar_fn(tape);
        tape.backward(loss);
    }

    GradCheckReport report;
    for (const auto& p : params) {
        Tensor& t = *p.tensor;
        ParamGradError err{p.name, 0.0, 0};
        const std::size_t n = t.values.size();
        const std::size_t stride =
            options.max_coords == 0 || n <= options.max_coords ? 1 : (n + options.max_coords - 1) / options.max_coords;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = t.values[i];
            t.values[i] = saved + options.h;
            const double up = evaluate(scalar_fn);
            t.values[i] = saved - options.h;
            const double down = evaluate(scalar_fn);
            t.values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.h);
            const double analytic = t.grad.empty() ? 0.0 : t.grad[i];
            const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
            err.max_rel_error = std::max(err.max_rel_error, rel);
            ++err.checked;
        }
        report.params.push_back(err);
    }
    return report;
}

} // namespace stylerl
