#include "stylerl/nn.hpp"

#include <cmath>

#include "stylerl/errors.hpp"

namespace stylerl {

Tensor& ParameterStore::add(std::string name, Shape shape) {
    Tensor& t = tensors_.emplace_back(Tensor::zeros(std::move(shape), true));
    names_.push_back(std::move(name));
    return t;
}

std::vector<ParamRef> ParameterStore::refs() {
    std::vector<ParamRef> out;
    out.reserve(tensors_.size());
    for (std::size_t i = 0; i < tensors_.size(); ++i)
        out.push_back({names_[i], &tensors_[i]});
    return out;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_)
        n += t.size();
    return n;
}

void ParameterStore::set_trainable(bool on) {
    for (auto& t : tensors_) {
        t.requires_grad = on;
        if (!on)
            t.grad.clear();
    }
}

void init_normal(Tensor& t, Rng& rng, double stddev) {
    for (auto& v : t.values)
        v = rng.normal(0.0, stddev);
}

void init_constant(Tensor& t, double value) {
    for (auto& v : t.values)
        v = value;
}

ParamSnapshot snapshot(std::span<const ParamRef> params) {
    ParamSnapshot s;
    s.reserve(params.size());
    for (const auto& p : params)
        s.push_back(p.tensor->values);
    return s;
}

void restore(std::span<const ParamRef> params, const ParamSnapshot& snap) {
    if (snap.size() != params.size())
        throw ShapeError("snapshot holds " + std::to_string(snap.size()) + " tensors, model has " +
                         std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (snap[i].size() != params[i].tensor->values.size())
            throw ShapeError("snapshot size mismatch for " + params[i].name);
        params[i].tensor->values = snap[i];
    }
}

Linear make_linear(ParameterStore& ps, const std::string& name, std::size_t in, std::size_t out) {
    Linear l;
    l.w = &ps.add(name + ".w", {in, out});
    l.b = &ps.add(name + ".b", {out});
    return l;
}

LayerNormParams make_layer_norm(ParameterStore& ps, const std::string& name, std::size_t d) {
    LayerNormParams ln;
    ln.gamma = &ps.add(name + ".gamma", {d});
    ln.beta = &ps.add(name + ".beta", {d});
    init_constant(*ln.gamma, 1.0);
    return ln;
}

Attention make_attention(ParameterStore& ps, const std::string& name, std::size_t d) {
    Attention a;
    a.q = make_linear(ps, name + ".q", d, d);
    a.k = make_linear(ps, name + ".k", d, d);
    a.v = make_linear(ps, name + ".v", d, d);
    a.o = make_linear(ps, name + ".o", d, d);
    return a;
}

FeedForward make_feed_forward(ParameterStore& ps, const std::string& name, std::size_t d,
                              std::size_t d_ff) {
    return {make_linear(ps, name + ".up", d, d_ff), make_linear(ps, name + ".down", d_ff, d)};
}

Var linear(Binder& bind, const Linear& l, Var x) {
    return add_row(matmul(x, bind(*l.w)), bind(*l.b));
}

Var layer_norm(Binder& bind, const LayerNormParams& ln, Var x) {
    return layer_norm(x, bind(*ln.gamma), bind(*ln.beta));
}

Var feed_forward(Binder& bind, const FeedForward& ff, Var x) {
    return linear(bind, ff.down, gelu(linear(bind, ff.up, x)));
}

Var attention(Binder& bind, const Attention& att, Var queries, Var memory, std::size_t heads,
              bool causal) {
    const std::size_t d = queries.shape().at(1);
    if (heads == 0 || d % heads != 0)
        throw ShapeError("model width " + std::to_string(d) + " not divisible into " +
                         std::to_string(heads) + " heads");
    const std::size_t n = queries.shape()[0];
    const std::size_t m = memory.shape().at(0);
    if (causal && n != m)
        throw ShapeError("causal attention needs equal query and key lengths");
    const std::size_t dh = d / heads;

    Var q = linear(bind, att.q, queries);
    Var k = linear(bind, att.k, memory);
    Var v = linear(bind, att.v, memory);

    std::vector<std::uint8_t> mask;
    if (causal) {
        mask.assign(n * m, 0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < m; ++j)
                mask[i * m + j] = 1;
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = slice_cols(v, h * dh, (h + 1) * dh);
        Var scores = scale(matmul_nt(qh, kh), inv);
        if (causal)
            scores = mask_fill(scores, mask, -1e30);
        outs.push_back(matmul(softmax(scores), vh));
    }
    Var joined = heads == 1 ? outs[0] : concat_cols(outs);
    return linear(bind, att.o, joined);
}

} // namespace stylerl
