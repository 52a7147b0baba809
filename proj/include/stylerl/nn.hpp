#pragma once

#include <deque>
#include <span>
#include <string>
#include <vector>

#include "stylerl/rng.hpp"
#include "stylerl/tensor.hpp"

namespace stylerl {

// Owns a model's parameter tensors. Storage is a deque so references handed
// out by add() stay valid.
class ParameterStore {
  public:
    ParameterStore() = default;
    ParameterStore(const ParameterStore&) = delete;
    ParameterStore& operator=(const ParameterStore&) = delete;

    // Zero-filled, requires_grad.
    Tensor& add(std::string name, Shape shape);

    std::vector<ParamRef> refs();
    std::size_t size() const { return tensors_.size(); }
    std::size_t scalar_count() const;

    void set_trainable(bool on);

  private:
    std::deque<Tensor> tensors_;
    std::vector<std::string> names_;
};

void init_normal(Tensor& t, Rng& rng, double stddev);
void init_constant(Tensor& t, double value);

using ParamSnapshot = std::vector<std::vector<double>>;
ParamSnapshot snapshot(std::span<const ParamRef> params);
// Throws ShapeError when the snapshot was taken from a different layout.
void restore(std::span<const ParamRef> params, const ParamSnapshot& snap);

struct Linear {
    Tensor* w = nullptr; // [in,out]
    Tensor* b = nullptr; // [out]
};

struct LayerNormParams {
    Tensor* gamma = nullptr;
    Tensor* beta = nullptr;
};

struct Attention {
    Linear q, k, v, o;
};

struct FeedForward {
    Linear up, down;
};

Linear make_linear(ParameterStore& ps, const std::string& name, std::size_t in, std::size_t out);
LayerNormParams make_layer_norm(ParameterStore& ps, const std::string& name, std::size_t d);
Attention make_attention(ParameterStore& ps, const std::string& name, std::size_t d);
FeedForward make_feed_forward(ParameterStore& ps, const std::string& name, std::size_t d,
                              std::size_t d_ff);

Var linear(Binder& bind, const Linear& l, Var x);
Var layer_norm(Binder& bind, const LayerNormParams& ln, Var x);
Var feed_forward(Binder& bind, const FeedForward& ff, Var x);

// Multi-head scaled dot-product attention of queries [n,d] over keys/values
// [m,d]. With causal set, query i only sees keys 0..i (requires n == m).
Var attention(Binder& bind, const Attention& att, Var queries, Var memory, std::size_t heads,
              bool causal);

} // namespace stylerl
