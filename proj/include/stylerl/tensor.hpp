#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace stylerl {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Model parameters are Tensors owned by the
// model; intermediate values live inside a Tape.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad; // empty until a gradient is accumulated
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> v, bool requires_grad = false);

    static Tensor zeros(Shape s, bool requires_grad = false);
    static Tensor filled(Shape s, double value, bool requires_grad = false);

    std::size_t size() const { return values.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? numel(shape) : numel(shape) / shape[0]; }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    void zero_grad();
};

// Named handle onto a model parameter.
struct ParamRef {
    std::string name;
    Tensor* tensor;
};

enum class OpKind : std::uint8_t {
    Param,
    Constant,
    Embedding,
    MatMul,
    MatMulNT,
    Transpose,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    Reshape,
    Relu,
    Gelu,
    LayerNorm,
    Softmax,
    LogSoftmax,
    CrossEntropy,
    Gather,
    ConcatCols,
    SliceCols,
    ConcatRows,
    SliceRows,
    Conv1d,
    MaxOverTime,
    MaskFill,
    Sum,
    Mean,
    Dot,
};

const char* op_name(OpKind kind);

class Tape;

// Lightweight reference to a value recorded on a tape.
class Var {
  public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Shape& shape() const;
    std::span<const double> values() const;
    double item() const; // value of a one-element Var
    std::span<const double> grad() const;

  private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Dynamic reverse-mode tape, rebuilt for every forward pass. Records are
// appended in execution order, so every input id precedes its consumer and
// backward() is a single reverse sweep.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    struct Record {
        OpKind kind;
        std::vector<int> inputs;
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;
        BackwardFn backward;
        Tensor* param = nullptr;
        bool needs_grad = false;
    };

    // With record_gradients == false no backward closures are kept (inference).
    explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool records_gradients() const { return record_; }

    // Leaf bound to a parameter; backward() adds into param.grad when the
    // parameter requires gradients.
    Var param(Tensor& p);
    Var constant(Tensor t);
    Var constant(Shape shape, std::vector<double> values);
    Var scalar(double v);

    // Populates gradients for every recorded value reachable from loss and
    // accumulates parameter gradients. Throws ShapeError for non-scalar loss.
    void backward(Var loss);

    std::size_t size() const { return records_.size(); }
    bool needs_grad(int id) const { return record(id).needs_grad; }
    const Record& record(int id) const { return records_[static_cast<std::size_t>(id)]; }

    // Gradient buffer of a record, allocated (zero-filled) on first use.
    std::vector<double>& grad_buffer(int id);

    Var push(OpKind kind, std::vector<int> inputs, Shape shape, std::vector<double> values,
             BackwardFn backward);

  private:
    bool record_;
    // deque: spans into earlier records stay valid while new ones are pushed
    std::deque<Record> records_;
};

// Binds each parameter to a single leaf per tape so a forward pass that
// touches a weight many times records (and copies) it once.
class Binder {
  public:
    explicit Binder(Tape& tape) : tape_(tape) {}
    Tape& tape() const { return tape_; }
    Var operator()(const Tensor& p);

  private:
    Tape& tape_;
    std::unordered_map<const Tensor*, Var> bound_;
};

// ---------------------------------------------------------------------------
// Primitives. Every primitive validates shapes (ShapeError) and rejects
// non-finite results (NumericsError).

// Rows of table [V,d] selected by ids -> [n,d]
Var embedding(Var table, std::span<const int> ids);

Var matmul(Var a, Var b);    // [m,k] x [k,n]
Var matmul_nt(Var a, Var b); // [m,k] x [n,k]^T
Var transpose(Var a);

Var add(Var a, Var b);
Var add_row(Var a, Var row); // [m,n] + broadcast [n]
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var reshape(Var a, Shape shape); // same values, new shape

Var relu(Var a);
Var gelu(Var a); // tanh approximation

// Row-wise normalization of [m,n] with affine gamma/beta of shape [n].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var softmax(Var a);     // along the last axis
Var log_softmax(Var a); // along the last axis

// Mean over non-ignored rows of -log softmax(logits)[row, target]. Rows with
// a negative target are ignored. Scalar result.
Var cross_entropy(Var logits, std::span<const int> targets);

// out[i] = x[i, index[i]]  -> [m]
Var gather(Var x, std::span<const int> index);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);

// Valid 1-D convolution over time of x [n,d] with filters w [width*d, f]
// and bias [f] -> [n-width+1, f].
Var conv1d(Var x, Var w, Var bias, std::size_t width);

// Column-wise max over the first `valid_rows` rows of x [t,f] -> [f].
Var max_over_time(Var x, std::size_t valid_rows);

// Replace entries where mask != 0 by value; their gradient is zero.
Var mask_fill(Var x, std::span<const std::uint8_t> mask, double value);

Var sum(Var a);
Var mean(Var a);
Var dot(Var a, Var b);

} // namespace stylerl
