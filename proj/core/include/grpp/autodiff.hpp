#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grpp::ad {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// overflow-safe scalar activations
// ---------------------------------------------------------------------------

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// flat parameter storage with a named shape registry
// ---------------------------------------------------------------------------

struct TensorShape {
    std::string name;
    int rows = 0;
    int cols = 0;
    int offset = 0;  // position of the first entry in the flat vector
    int size() const { return rows * cols; }
};

class ParamVector {
  public:
    // Registers a named block and grows the flat storage. Throws on duplicate
    // names or non-positive shapes.
    int add(std::string name, int rows, int cols);

    int index_of(std::string_view name) const;  // throws if missing
    bool contains(std::string_view name) const { return lookup_.count(std::string(name)) > 0; }

    const TensorShape& shape(int index) const { return shapes_.at(static_cast<std::size_t>(index)); }
    const TensorShape& shape(std::string_view name) const { return shape(index_of(name)); }
    const std::vector<TensorShape>& shapes() const { return shapes_; }

    std::span<double> block(int index);
    std::span<const double> block(int index) const;
    std::span<double> block(std::string_view name) { return block(index_of(name)); }
    std::span<const double> block(std::string_view name) const { return block(index_of(name)); }

    std::size_t size() const { return values.size(); }

    Vec values;

  private:
    std::vector<TensorShape> shapes_;
    std::unordered_map<std::string, int> lookup_;
};

struct GradientRecord {
    double loss = 0.0;
    Vec gradient;
};

// Raised when a kernel produces a non-finite value; carries the kernel name.
struct NumericError : std::runtime_error {
    NumericError(std::string kernel_name, std::string msg)
        : std::runtime_error(std::move(msg)), kernel(std::move(kernel_name)) {}
    std::string kernel;
};

// ---------------------------------------------------------------------------
// reverse-mode tape
// ---------------------------------------------------------------------------

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Records a DAG of vector-valued kernel applications and accumulates adjoints
// in reverse creation order. The kernel set is fixed: add, multiply (scalar x
// vector), matrix-vector product, concatenation, tanh, sigmoid, softplus,
// exponential, logarithm, sum, element-wise product, plus leaf/constant
// nodes. Every forward output is checked finite so failures name the kernel
// that produced them.
class Tape {
  public:
    explicit Tape(const ParamVector* params = nullptr) : params_(params) {}

    // Leaves. param() exposes a whole registered block as a flat vector;
    // param_row() exposes one row (table lookups). Leaves are cached so each
    // (block, row) pair appears once and adjoints gather without duplicates.
    Var param(std::string_view name);
    Var param_row(std::string_view name, int row);

    Var constant(Vec v);
    Var constant(double x) { return constant(Vec{x}); }

    // kernels
    Var add(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var mul(Var scalar, Var v);  // size-1 node times vector
    Var scale(Var a, double c);  // compile-time constant multiplier
    Var matvec(Var w, Var x, int rows, int cols);
    Var concat(Var a, Var b);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var softplus(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var sum(Var a);

    // composites built from the kernel set
    Var dot(Var a, Var b) { return sum(hadamard(a, b)); }
    Var div(Var a, Var b_positive) { return hadamard(a, exp(scale(log(b_positive), -1.0))); }
    Var neg(Var a) { return scale(a, -1.0); }

    int size(Var v) const { return node(v).n; }
    std::span<const double> values(Var v) const;
    double value_scalar(Var v) const;

    // Reverse pass from a size-1 root. Adjoints of leaves are then gathered
    // into a flat gradient with grad_into(). Gradients accumulate (+=).
    void backward(Var root);
    void grad_into(std::span<double> flat_gradient) const;

    std::size_t node_count() const { return nodes_.size(); }

  private:
    enum class Kernel : std::uint8_t {
        leaf, constant, add, hadamard, mul, scale, matvec, concat,
        tanh_k, sigmoid_k, softplus_k, exp_k, log_k, sum_k,
    };

    struct Node {
        Kernel op;
        std::int32_t a = -1;
        std::int32_t b = -1;
        std::int32_t off = 0;  // into vals_/adj_
        std::int32_t n = 0;
        double c = 0.0;          // scale factor
        std::int32_t param = -1; // leaf: registry index
        std::int32_t row = -1;   // leaf: row within the block, -1 = whole block
    };

    const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }
    Var push(Kernel op, int n, Var a, Var b, double c = 0.0, int param = -1, int row = -1);
    double* out(const Node& nd) { return vals_.data() + nd.off; }
    const double* out(const Node& nd) const { return vals_.data() + nd.off; }
    void check_finite(const Node& nd);
    static const char* kernel_name(Kernel op);

    const ParamVector* params_;
    std::vector<Node> nodes_;
    Vec vals_;
    Vec adj_;
    std::unordered_map<std::int64_t, Var> leaf_cache_;
};

// ---------------------------------------------------------------------------
// gradient evaluation and the finite-difference oracle
// ---------------------------------------------------------------------------

// A scalar function expressed as a tape program; it must return a size-1 Var.
using TapeFunction = std::function<Var(Tape&)>;

GradientRecord evaluate_with_gradients(const TapeFunction& f, const ParamVector& x);

// Value/gradient pair for functions that are not tape programs (test oracles).
struct ScalarFunction {
    std::function<double(const ParamVector&)> value;
    std::function<Vec(const ParamVector&)> gradient;
};

ScalarFunction as_scalar_function(const TapeFunction& f);

// Central differences (f(x+h) - f(x-h)) / 2h against the analytic gradient.
// Returns the worst relative error, denominator max(|analytic|, |numeric|, 1e-8).
double finite_difference_check(const ScalarFunction& f, const ParamVector& x, double step);
double finite_difference_check(const TapeFunction& f, const ParamVector& x, double step);

}  // namespace grpp::ad
