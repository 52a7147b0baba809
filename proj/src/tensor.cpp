#include "stylerl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stylerl/errors.hpp"
#include "stylerl/kernels.hpp"

namespace stylerl {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

Tensor::Tensor(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
    if (numel(shape) != values.size())
        throw ShapeError("tensor of shape " + shape_string(shape) + " given " +
                         std::to_string(values.size()) + " values");
    if (requires_grad)
        grad.assign(values.size(), 0.0);
}

Tensor Tensor::zeros(Shape s, bool rg) { return filled(std::move(s), 0.0, rg); }

Tensor Tensor::filled(Shape s, double value, bool rg) {
    const std::size_t n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, value), rg);
}

void Tensor::zero_grad() { grad.assign(values.size(), 0.0); }

const char* op_name(OpKind kind) {
    switch (kind) {
    case OpKind::Param: return "param";
    case OpKind::Constant: return "constant";
    case OpKind::Embedding: return "embedding";
    case OpKind::MatMul: return "matmul";
    case OpKind::MatMulNT: return "matmul_nt";
    case OpKind::Transpose: return "transpose";
    case OpKind::Add: return "add";
    case OpKind::AddRow: return "add_row";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Reshape: return "reshape";
    case OpKind::Relu: return "relu";
    case OpKind::Gelu: return "gelu";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Softmax: return "softmax";
    case OpKind::LogSoftmax: return "log_softmax";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::Gather: return "gather";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::SliceRows: return "slice_rows";
    case OpKind::Conv1d: return "conv1d";
    case OpKind::MaxOverTime: return "max_over_time";
    case OpKind::MaskFill: return "mask_fill";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Dot: return "dot";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Var

const Shape& Var::shape() const { return tape_->record(id_).shape; }

std::span<const double> Var::values() const { return tape_->record(id_).values; }

double Var::item() const {
    const auto& rec = tape_->record(id_);
    if (rec.values.size() != 1)
        throw ShapeError("item() on tensor of shape " + shape_string(rec.shape));
    return rec.values[0];
}

std::span<const double> Var::grad() const { return tape_->record(id_).grad; }

// ---------------------------------------------------------------------------
// Tape

namespace {

void require_finite(OpKind kind, const std::vector<double>& values) {
    for (double v : values)
        if (!std::isfinite(v))
            throw NumericsError(std::string("non-finite value produced by ") + op_name(kind));
}

} // namespace

Var Tape::push(OpKind kind, std::vector<int> inputs, Shape shape, std::vector<double> values,
               BackwardFn backward) {
    require_finite(kind, values);
    Record rec;
    rec.kind = kind;
    rec.shape = std::move(shape);
    rec.values = std::move(values);
    if (record_) {
        for (int in : inputs)
            rec.needs_grad = rec.needs_grad || records_[static_cast<std::size_t>(in)].needs_grad;
    }
    if (rec.needs_grad)
        rec.backward = std::move(backward);
    rec.inputs = std::move(inputs);
    records_.push_back(std::move(rec));
    return Var(this, static_cast<int>(records_.size() - 1));
}

Var Tape::param(Tensor& p) {
    if (numel(p.shape) != p.values.size())
        throw ShapeError("parameter shape " + shape_string(p.shape) + " does not match its values");
    require_finite(OpKind::Param, p.values);
    Record rec;
    rec.kind = OpKind::Param;
    rec.shape = p.shape;
    rec.values = p.values;
    rec.param = &p;
    rec.needs_grad = record_ && p.requires_grad;
    records_.push_back(std::move(rec));
    return Var(this, static_cast<int>(records_.size() - 1));
}

Var Tape::constant(Tensor t) { return constant(std::move(t.shape), std::move(t.values)); }

Var Tape::constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size())
        throw ShapeError("constant shape " + shape_string(shape) + " does not match its values");
    return push(OpKind::Constant, {}, std::move(shape), std::move(values), nullptr);
}

Var Tape::scalar(double v) { return constant(Shape{}, {v}); }

Var Binder::operator()(const Tensor& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end())
        return it->second;
    // Gradients are only written back when p.requires_grad is set.
    Var v = tape_.param(const_cast<Tensor&>(p));
    bound_.emplace(&p, v);
    return v;
}

std::vector<double>& Tape::grad_buffer(int id) {
    auto& rec = records_[static_cast<std::size_t>(id)];
    if (rec.grad.empty())
        rec.grad.assign(rec.values.size(), 0.0);
    return rec.grad;
}

void Tape::backward(Var loss) {
    if (&loss.tape() != this)
        throw ShapeError("loss was recorded on a different tape");
    const auto& lrec = record(loss.id());
    if (lrec.values.size() != 1)
        throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(lrec.shape));
    if (!lrec.needs_grad)
        return;
    grad_buffer(loss.id())[0] = 1.0;
    for (int id = loss.id(); id >= 0; --id) {
        auto& rec = records_[static_cast<std::size_t>(id)];
        if (!rec.needs_grad || rec.grad.empty())
            continue;
        if (rec.backward)
            rec.backward(*this, id);
        if (rec.param != nullptr) {
            auto& pg = rec.param->grad;
            if (pg.size() != rec.grad.size())
                pg.assign(rec.grad.size(), 0.0);
            for (std::size_t i = 0; i < pg.size(); ++i)
                pg[i] += rec.grad[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

struct Dims2 {
    std::size_t rows, cols;
};

Dims2 dims2(const Var& v, const char* what) {
    const auto& s = v.shape();
    if (s.size() != 2)
        throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + shape_string(s));
    return {s[0], s[1]};
}

void same_shape(const Var& a, const Var& b, const char* what) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
}

void same_tape(const Var& a, const Var& b) {
    if (&a.tape() != &b.tape())
        throw ShapeError("operands recorded on different tapes");
}

// Accumulate `scale * g` into the gradient of input `id` if it needs one.
void accumulate(Tape& t, int id, std::span<const double> g, double scale = 1.0) {
    if (!t.needs_grad(id))
        return;
    auto& buf = t.grad_buffer(id);
    for (std::size_t i = 0; i < g.size(); ++i)
        buf[i] += scale * g[i];
}

const std::vector<double>& grad_of(Tape& t, int id) { return t.record(id).grad; }

const std::vector<double>& values_of(Tape& t, int id) { return t.record(id).values; }

} // namespace

Var embedding(Var table, std::span<const int> ids) {
    const auto [vocab, dim] = dims2(table, "embedding");
    const auto src = table.values();
    std::vector<double> out(ids.size() * dim);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
            throw ShapeError("embedding id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(vocab) + " rows");
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(ids[i] * dim), dim,
                    out.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    std::vector<int> saved(ids.begin(), ids.end());
    const int tid = table.id();
    return table.tape().push(
        OpKind::Embedding, {tid}, {ids.size(), dim}, std::move(out),
        [saved = std::move(saved), tid, dim](Tape& t, int self) {
            if (!t.needs_grad(tid))
                return;
            const auto& g = grad_of(t, self);
            auto& gt = t.grad_buffer(tid);
            for (std::size_t i = 0; i < saved.size(); ++i) {
                double* row = gt.data() + static_cast<std::size_t>(saved[i]) * dim;
                for (std::size_t j = 0; j < dim; ++j)
                    row[j] += g[i * dim + j];
            }
        });
}

Var matmul(Var a, Var b) {
    same_tape(a, b);
    const auto [m, k] = dims2(a, "matmul");
    const auto [k2, n] = dims2(b, "matmul");
    if (k != k2)
        throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    std::vector<double> out(m * n, 0.0);
    kernels::matmul(m, n, k, a.values().data(), k, b.values().data(), n, out.data(), n);
    const int ia = a.id(), ib = b.id();
    return a.tape().push(OpKind::MatMul, {ia, ib}, {m, n}, std::move(out),
                         [ia, ib, m = m, n = n, k = k](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             if (t.needs_grad(ia))
                                 kernels::matmul_nt(m, n, k, g.data(), n, values_of(t, ib).data(), n,
                                                    t.grad_buffer(ia).data(), k);
                             if (t.needs_grad(ib))
                                 kernels::matmul_tn(m, n, k, values_of(t, ia).data(), k, g.data(), n,
                                                    t.grad_buffer(ib).data(), n);
                         });
}

Var matmul_nt(Var a, Var b) {
    same_tape(a, b);
    const auto [m, k] = dims2(a, "matmul_nt");
    const auto [n, k2] = dims2(b, "matmul_nt");
    if (k != k2)
        throw ShapeError("matmul_nt: inner dimensions differ " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()) + "^T");
    std::vector<double> out(m * n, 0.0);
    kernels::matmul_nt(m, k, n, a.values().data(), k, b.values().data(), k, out.data(), n);
    const int ia = a.id(), ib = b.id();
    return a.tape().push(OpKind::MatMulNT, {ia, ib}, {m, n}, std::move(out),
                         [ia, ib, m = m, n = n, k = k](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             if (t.needs_grad(ia))
                                 kernels::matmul(m, k, n, g.data(), n, values_of(t, ib).data(), k,
                                                 t.grad_buffer(ia).data(), k);
                             if (t.needs_grad(ib))
                                 kernels::matmul_tn(m, k, n, g.data(), n, values_of(t, ia).data(), k,
                                                    t.grad_buffer(ib).data(), k);
                         });
}

Var transpose(Var a) {
    const auto [m, n] = dims2(a, "transpose");
    const auto src = a.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[j * m + i] = src[i * n + j];
    const int ia = a.id();
    return a.tape().push(OpKind::Transpose, {ia}, {n, m}, std::move(out),
                         [ia, m = m, n = n](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j)
                                     ga[i * n + j] += g[j * m + i];
                         });
}

namespace {

template <class F>
Var binary_elementwise(OpKind kind, Var a, Var b, F f, const char* what) {
    same_tape(a, b);
    same_shape(a, b, what);
    const auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = f(av[i], bv[i]);
    const int ia = a.id(), ib = b.id();
    Tape::BackwardFn back;
    switch (kind) {
    case OpKind::Add:
        back = [ia, ib](Tape& t, int self) {
            accumulate(t, ia, grad_of(t, self));
            accumulate(t, ib, grad_of(t, self));
        };
        break;
    case OpKind::Sub:
        back = [ia, ib](Tape& t, int self) {
            accumulate(t, ia, grad_of(t, self));
            accumulate(t, ib, grad_of(t, self), -1.0);
        };
        break;
    default: // Mul
        back = [ia, ib](Tape& t, int self) {
            const auto& g = grad_of(t, self);
            if (t.needs_grad(ia)) {
                const auto& bv = values_of(t, ib);
                auto& ga = t.grad_buffer(ia);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * bv[i];
            }
            if (t.needs_grad(ib)) {
                const auto& av = values_of(t, ia);
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gb[i] += g[i] * av[i];
            }
        };
    }
    return a.tape().push(kind, {ia, ib}, a.shape(), std::move(out), std::move(back));
}

} // namespace

Var add(Var a, Var b) {
    return binary_elementwise(OpKind::Add, a, b, [](double x, double y) { return x + y; }, "add");
}

Var sub(Var a, Var b) {
    return binary_elementwise(OpKind::Sub, a, b, [](double x, double y) { return x - y; }, "sub");
}

Var mul(Var a, Var b) {
    return binary_elementwise(OpKind::Mul, a, b, [](double x, double y) { return x * y; }, "mul");
}

Var add_row(Var a, Var row) {
    same_tape(a, row);
    const auto [m, n] = dims2(a, "add_row");
    if (row.shape() != Shape{n})
        throw ShapeError("add_row: row of shape " + shape_string(row.shape()) + " for matrix " +
                         shape_string(a.shape()));
    const auto av = a.values(), rv = row.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[i * n + j] = av[i * n + j] + rv[j];
    const int ia = a.id(), ir = row.id();
    return a.tape().push(OpKind::AddRow, {ia, ir}, {m, n}, std::move(out),
                         [ia, ir, m = m, n = n](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             accumulate(t, ia, g);
                             if (t.needs_grad(ir)) {
                                 auto& gr = t.grad_buffer(ir);
                                 for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < n; ++j)
                                         gr[j] += g[i * n + j];
                             }
                         });
}

Var scale(Var a, double c) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = av[i] * c;
    const int ia = a.id();
    return a.tape().push(OpKind::Scale, {ia}, a.shape(), std::move(out),
                         [ia, c](Tape& t, int self) { accumulate(t, ia, grad_of(t, self), c); });
}

Var reshape(Var a, Shape shape) {
    if (numel(shape) != a.values().size())
        throw ShapeError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
    const auto av = a.values();
    std::vector<double> out(av.begin(), av.end());
    const int ia = a.id();
    return a.tape().push(OpKind::Reshape, {ia}, std::move(shape), std::move(out),
                         [ia](Tape& t, int self) { accumulate(t, ia, grad_of(t, self)); });
}

Var relu(Var a) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = av[i] > 0.0 ? av[i] : 0.0;
    const int ia = a.id();
    return a.tape().push(OpKind::Relu, {ia}, a.shape(), std::move(out), [ia](Tape& t, int self) {
        const auto& g = grad_of(t, self);
        const auto& x = values_of(t, ia);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0)
                ga[i] += g[i];
    });
}

namespace {
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
} // namespace

Var gelu(Var a) {
    const auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = av[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
    }
    const int ia = a.id();
    return a.tape().push(OpKind::Gelu, {ia}, a.shape(), std::move(out), [ia](Tape& t, int self) {
        const auto& g = grad_of(t, self);
        const auto& xs = values_of(t, ia);
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double x = xs[i];
            const double th = std::tanh(kGeluC * (x + kGeluA * x * x * x));
            const double d = 0.5 * (1.0 + th) +
                             0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
            ga[i] += g[i] * d;
        }
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    same_tape(x, gamma);
    same_tape(x, beta);
    const auto [m, n] = dims2(x, "layer_norm");
    if (gamma.shape() != Shape{n} || beta.shape() != Shape{n})
        throw ShapeError("layer_norm: affine parameters must have shape [" + std::to_string(n) + "]");
    const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
    std::vector<double> out(m * n), xhat(m * n), rstd(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xv.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            mu += row[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(n);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mu) * rstd[i];
            out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
        }
    }
    const int ix = x.id(), ig = gamma.id(), ib = beta.id();
    return x.tape().push(
        OpKind::LayerNorm, {ix, ig, ib}, {m, n}, std::move(out),
        [ix, ig, ib, m = m, n = n, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, int self) {
            const auto& g = grad_of(t, self);
            if (t.needs_grad(ig)) {
                auto& gg = t.grad_buffer(ig);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        gg[j] += g[i * n + j] * xhat[i * n + j];
            }
            if (t.needs_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        gb[j] += g[i * n + j];
            }
            if (t.needs_grad(ix)) {
                const auto& gv = values_of(t, ig);
                auto& gx = t.grad_buffer(ix);
                std::vector<double> dxhat(n);
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_d = 0.0, mean_dx = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        dxhat[j] = g[i * n + j] * gv[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat[i * n + j];
                    }
                    mean_d /= static_cast<double>(n);
                    mean_dx /= static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j)
                        gx[i * n + j] += rstd[i] * (dxhat[j] - mean_d - xhat[i * n + j] * mean_dx);
                }
            }
        });
}

namespace {

// (rows, cols) for a last-axis reduction over a tensor of rank >= 1.
Dims2 last_axis(const Var& v, const char* what) {
    const auto& s = v.shape();
    if (s.empty() || s.back() == 0)
        throw ShapeError(std::string(what) + " needs a non-empty last axis, got " + shape_string(s));
    return {numel(s) / s.back(), s.back()};
}

} // namespace

Var softmax(Var a) {
    const auto [m, n] = last_axis(a, "softmax");
    std::vector<double> out(m * n);
    kernels::softmax_rows(m, n, a.values().data(), out.data());
    const int ia = a.id();
    return a.tape().push(OpKind::Softmax, {ia}, a.shape(), std::move(out),
                         [ia, m = m, n = n](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             const auto& y = values_of(t, self);
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < m; ++i) {
                                 double s = 0.0;
                                 for (std::size_t j = 0; j < n; ++j)
                                     s += g[i * n + j] * y[i * n + j];
                                 for (std::size_t j = 0; j < n; ++j)
                                     ga[i * n + j] += y[i * n + j] * (g[i * n + j] - s);
                             }
                         });
}

namespace {

void log_softmax_row(std::size_t n, const double* in, double* out) {
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j)
        mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j)
        out[j] = in[j] - lse;
}

} // namespace

Var log_softmax(Var a) {
    const auto [m, n] = last_axis(a, "log_softmax");
    const auto av = a.values();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        log_softmax_row(n, av.data() + i * n, out.data() + i * n);
    const int ia = a.id();
    return a.tape().push(OpKind::LogSoftmax, {ia}, a.shape(), std::move(out),
                         [ia, m = m, n = n](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             const auto& y = values_of(t, self);
                             auto& ga = t.grad_buffer(ia);
                             for (std::size_t i = 0; i < m; ++i) {
                                 double s = 0.0;
                                 for (std::size_t j = 0; j < n; ++j)
                                     s += g[i * n + j];
                                 for (std::size_t j = 0; j < n; ++j)
                                     ga[i * n + j] += g[i * n + j] - std::exp(y[i * n + j]) * s;
                             }
                         });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
    const auto [m, n] = dims2(logits, "cross_entropy");
    if (targets.size() != m)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
    const auto lv = logits.values();
    std::vector<double> logp(m * n);
    std::size_t count = 0;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] < 0)
            continue;
        if (static_cast<std::size_t>(targets[i]) >= n)
            throw ShapeError("cross_entropy: target " + std::to_string(targets[i]) + " outside " +
                             std::to_string(n) + " classes");
        log_softmax_row(n, lv.data() + i * n, logp.data() + i * n);
        total -= logp[i * n + static_cast<std::size_t>(targets[i])];
        ++count;
    }
    if (count == 0)
        throw ShapeError("cross_entropy: every target is ignored");
    std::vector<int> saved(targets.begin(), targets.end());
    const int il = logits.id();
    return logits.tape().push(
        OpKind::CrossEntropy, {il}, {}, {total / static_cast<double>(count)},
        [il, m = m, n = n, count, saved = std::move(saved), logp = std::move(logp)](Tape& t, int self) {
            const double g = grad_of(t, self)[0] / static_cast<double>(count);
            auto& gl = t.grad_buffer(il);
            for (std::size_t i = 0; i < m; ++i) {
                if (saved[i] < 0)
                    continue;
                for (std::size_t j = 0; j < n; ++j)
                    gl[i * n + j] += g * std::exp(logp[i * n + j]);
                gl[i * n + static_cast<std::size_t>(saved[i])] -= g;
            }
        });
}

Var gather(Var x, std::span<const int> index) {
    const auto [m, n] = dims2(x, "gather");
    if (index.size() != m)
        throw ShapeError("gather: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(m) + " rows");
    const auto xv = x.values();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n)
            throw ShapeError("gather: index " + std::to_string(index[i]) + " outside " +
                             std::to_string(n) + " columns");
        out[i] = xv[i * n + static_cast<std::size_t>(index[i])];
    }
    std::vector<int> saved(index.begin(), index.end());
    const int ix = x.id();
    return x.tape().push(OpKind::Gather, {ix}, {m}, std::move(out),
                         [ix, n = n, saved = std::move(saved)](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             auto& gx = t.grad_buffer(ix);
                             for (std::size_t i = 0; i < saved.size(); ++i)
                                 gx[i * n + static_cast<std::size_t>(saved[i])] += g[i];
                         });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty())
        throw ShapeError("concat_cols of nothing");
    const std::size_t m = dims2(parts[0], "concat_cols").rows;
    std::vector<std::size_t> widths;
    std::vector<int> ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        same_tape(parts[0], p);
        const auto d = dims2(p, "concat_cols");
        if (d.rows != m)
            throw ShapeError("concat_cols: row counts differ");
        widths.push_back(d.cols);
        ids.push_back(p.id());
        total += d.cols;
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto pv = parts[k].values();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(i * widths[k]), widths[k],
                        out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
        offset += widths[k];
    }
    auto inputs = ids;
    return parts[0].tape().push(
        OpKind::ConcatCols, std::move(inputs), {m, total}, std::move(out),
        [ids = std::move(ids), widths = std::move(widths), m, total](Tape& t, int self) {
            const auto& g = grad_of(t, self);
            std::size_t offset = 0;
            for (std::size_t k = 0; k < ids.size(); ++k) {
                if (t.needs_grad(ids[k])) {
                    auto& gp = t.grad_buffer(ids[k]);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < widths[k]; ++j)
                            gp[i * widths[k] + j] += g[i * total + offset + j];
                }
                offset += widths[k];
            }
        });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
    const auto [m, n] = dims2(x, "slice_cols");
    if (begin >= end || end > n)
        throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + std::to_string(n) + " columns");
    const std::size_t w = end - begin;
    const auto xv = x.values();
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * n + begin), w,
                    out.begin() + static_cast<std::ptrdiff_t>(i * w));
    const int ix = x.id();
    return x.tape().push(OpKind::SliceCols, {ix}, {m, w}, std::move(out),
                         [ix, m = m, n = n, begin, w](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             auto& gx = t.grad_buffer(ix);
                             for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < w; ++j)
                                     gx[i * n + begin + j] += g[i * w + j];
                         });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty())
        throw ShapeError("concat_rows of nothing");
    const std::size_t n = dims2(parts[0], "concat_rows").cols;
    std::vector<int> ids;
    std::vector<std::size_t> sizes;
    std::vector<double> out;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        same_tape(parts[0], p);
        const auto d = dims2(p, "concat_rows");
        if (d.cols != n)
            throw ShapeError("concat_rows: column counts differ");
        const auto pv = p.values();
        out.insert(out.end(), pv.begin(), pv.end());
        ids.push_back(p.id());
        sizes.push_back(pv.size());
        rows += d.rows;
    }
    auto inputs = ids;
    return parts[0].tape().push(OpKind::ConcatRows, std::move(inputs), {rows, n}, std::move(out),
                                [ids = std::move(ids), sizes = std::move(sizes)](Tape& t, int self) {
                                    const auto& g = grad_of(t, self);
                                    std::size_t offset = 0;
                                    for (std::size_t k = 0; k < ids.size(); ++k) {
                                        accumulate(t, ids[k],
                                                   std::span<const double>(g).subspan(offset, sizes[k]));
                                        offset += sizes[k];
                                    }
                                });
}

Var slice_rows(Var x, std::size_t begin, std::size_t end) {
    const auto [m, n] = dims2(x, "slice_rows");
    if (begin >= end || end > m)
        throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + std::to_string(m) + " rows");
    const auto xv = x.values();
    std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(begin * n),
                            xv.begin() + static_cast<std::ptrdiff_t>(end * n));
    const int ix = x.id();
    return x.tape().push(OpKind::SliceRows, {ix}, {end - begin, n}, std::move(out),
                         [ix, n = n, begin](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             auto& gx = t.grad_buffer(ix);
                             for (std::size_t i = 0; i < g.size(); ++i)
                                 gx[begin * n + i] += g[i];
                         });
}

Var conv1d(Var x, Var w, Var bias, std::size_t width) {
    same_tape(x, w);
    same_tape(x, bias);
    const auto [n, d] = dims2(x, "conv1d");
    const auto [wk, f] = dims2(w, "conv1d");
    if (width == 0 || wk != width * d)
        throw ShapeError("conv1d: filter bank " + shape_string(w.shape()) + " does not match width " +
                         std::to_string(width) + " over " + std::to_string(d) + " channels");
    if (bias.shape() != Shape{f})
        throw ShapeError("conv1d: bias shape " + shape_string(bias.shape()));
    if (n < width)
        throw ShapeError("conv1d: sequence of " + std::to_string(n) + " rows shorter than width " +
                         std::to_string(width));
    const std::size_t steps = n - width + 1;
    const auto bv = bias.values();
    std::vector<double> out(steps * f);
    for (std::size_t s = 0; s < steps; ++s)
        std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(s * f));
    // Window s is the contiguous slice x[s*d, (s+width)*d): an overlapping
    // strided view with leading dimension d.
    kernels::matmul(steps, f, wk, x.values().data(), d, w.values().data(), f, out.data(), f);
    const int ix = x.id(), iw = w.id(), ib = bias.id();
    return x.tape().push(
        OpKind::Conv1d, {ix, iw, ib}, {steps, f}, std::move(out),
        [ix, iw, ib, steps, f = f, wk = wk, d = d](Tape& t, int self) {
            const auto& g = grad_of(t, self);
            if (t.needs_grad(iw))
                kernels::matmul_tn(steps, f, wk, values_of(t, ix).data(), d, g.data(), f,
                                   t.grad_buffer(iw).data(), f);
            if (t.needs_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t s = 0; s < steps; ++s)
                    for (std::size_t j = 0; j < f; ++j)
                        gb[j] += g[s * f + j];
            }
            if (t.needs_grad(ix)) {
                std::vector<double> windows(steps * wk, 0.0);
                kernels::matmul_nt(steps, f, wk, g.data(), f, values_of(t, iw).data(), f,
                                   windows.data(), wk);
                auto& gx = t.grad_buffer(ix);
                for (std::size_t s = 0; s < steps; ++s)
                    for (std::size_t j = 0; j < wk; ++j)
                        gx[s * d + j] += windows[s * wk + j];
            }
        });
}

Var max_over_time(Var x, std::size_t valid_rows) {
    const auto [t_rows, f] = dims2(x, "max_over_time");
    if (valid_rows == 0 || valid_rows > t_rows)
        throw ShapeError("max_over_time: " + std::to_string(valid_rows) + " valid rows of " +
                         std::to_string(t_rows));
    const auto xv = x.values();
    std::vector<double> out(xv.begin(), xv.begin() + static_cast<std::ptrdiff_t>(f));
    std::vector<std::size_t> arg(f, 0);
    for (std::size_t s = 1; s < valid_rows; ++s)
        for (std::size_t j = 0; j < f; ++j)
            if (xv[s * f + j] > out[j]) {
                out[j] = xv[s * f + j];
                arg[j] = s;
            }
    const int ix = x.id();
    return x.tape().push(OpKind::MaxOverTime, {ix}, {f}, std::move(out),
                         [ix, f = f, arg = std::move(arg)](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             auto& gx = t.grad_buffer(ix);
                             for (std::size_t j = 0; j < f; ++j)
                                 gx[arg[j] * f + j] += g[j];
                         });
}

Var mask_fill(Var x, std::span<const std::uint8_t> mask, double value) {
    const auto xv = x.values();
    if (mask.size() != xv.size())
        throw ShapeError("mask_fill: mask of " + std::to_string(mask.size()) + " entries for tensor " +
                         shape_string(x.shape()));
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = mask[i] ? value : xv[i];
    std::vector<std::uint8_t> saved(mask.begin(), mask.end());
    const int ix = x.id();
    return x.tape().push(OpKind::MaskFill, {ix}, x.shape(), std::move(out),
                         [ix, saved = std::move(saved)](Tape& t, int self) {
                             const auto& g = grad_of(t, self);
                             auto& gx = t.grad_buffer(ix);
                             for (std::size_t i = 0; i < g.size(); ++i)
                                 if (!saved[i])
                                     gx[i] += g[i];
                         });
}

Var sum(Var a) {
    const auto av = a.values();
    double total = 0.0;
    for (double v : av)
        total += v;
    const int ia = a.id();
    return a.tape().push(OpKind::Sum, {ia}, {}, {total}, [ia](Tape& t, int self) {
        const double g = grad_of(t, self)[0];
        for (double& v : t.grad_buffer(ia))
            v += g;
    });
}

Var mean(Var a) {
    const auto av = a.values();
    if (av.empty())
        throw ShapeError("mean of an empty tensor");
    double total = 0.0;
    for (double v : av)
        total += v;
    const double count = static_cast<double>(av.size());
    const int ia = a.id();
    return a.tape().push(OpKind::Mean, {ia}, {}, {total / count}, [ia, count](Tape& t, int self) {
        const double g = grad_of(t, self)[0] / count;
        for (double& v : t.grad_buffer(ia))
            v += g;
    });
}

Var dot(Var a, Var b) {
    same_tape(a, b);
    same_shape(a, b, "dot");
    const auto av = a.values(), bv = b.values();
    double total = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i)
        total += av[i] * bv[i];
    const int ia = a.id(), ib = b.id();
    return a.tape().push(OpKind::Dot, {ia, ib}, {}, {total}, [ia, ib](Tape& t, int self) {
        const double g = grad_of(t, self)[0];
        accumulate(t, ia, values_of(t, ib), g);
        accumulate(t, ib, values_of(t, ia), g);
    });
}

} // namespace stylerl
