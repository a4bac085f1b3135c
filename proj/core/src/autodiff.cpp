#include "grpp/autodiff.hpp"

#include <algorithm>
#include <cassert>

namespace grpp::ad {

// ---------------------------------------------------------------------------
// ParamVector
// ---------------------------------------------------------------------------

int ParamVector::add(std::string name, int rows, int cols) {
    if (rows <= 0 || cols <= 0) {
        throw std::invalid_argument("ParamVector::add: non-positive shape for '" + name + "'");
    }
    if (lookup_.count(name) > 0) {
        throw std::invalid_argument("ParamVector::add: duplicate parameter '" + name + "'");
    }
    TensorShape s;
    s.name = name;
    s.rows = rows;
    s.cols = cols;
    s.offset = static_cast<int>(values.size());
    values.resize(values.size() + static_cast<std::size_t>(s.size()), 0.0);
    const int index = static_cast<int>(shapes_.size());
    shapes_.push_back(std::move(s));
    lookup_.emplace(std::move(name), index);
    return index;
}

int ParamVector::index_of(std::string_view name) const {
    auto it = lookup_.find(std::string(name));
    if (it == lookup_.end()) {
        throw std::out_of_range("ParamVector: unknown parameter '" + std::string(name) + "'");
    }
    return it->second;
}

std::span<double> ParamVector::block(int index) {
    const TensorShape& s = shape(index);
    return {values.data() + s.offset, static_cast<std::size_t>(s.size())};
}

std::span<const double> ParamVector::block(int index) const {
    const TensorShape& s = shape(index);
    return {values.data() + s.offset, static_cast<std::size_t>(s.size())};
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

const char* Tape::kernel_name(Kernel op) {
    switch (op) {
        case Kernel::leaf: return "leaf";
        case Kernel::constant: return "constant";
        case Kernel::add: return "add";
        case Kernel::hadamard: return "hadamard";
        case Kernel::mul: return "mul";
        case Kernel::scale: return "scale";
        case Kernel::matvec: return "matvec";
        case Kernel::concat: return "concat";
        case Kernel::tanh_k: return "tanh";
        case Kernel::sigmoid_k: return "sigmoid";
        case Kernel::softplus_k: return "softplus";
        case Kernel::exp_k: return "exp";
        case Kernel::log_k: return "log";
        case Kernel::sum_k: return "sum";
    }
    return "?";
}

void Tape::check_finite(const Node& nd) {
    const double* y = out(nd);
    for (int i = 0; i < nd.n; ++i) {
        if (!std::isfinite(y[i])) {
            throw NumericError(kernel_name(nd.op),
                               std::string("non-finite value produced by kernel '") +
                                   kernel_name(nd.op) + "'");
        }
    }
}

Var Tape::push(Kernel op, int n, Var a, Var b, double c, int param, int row) {
    Node nd;
    nd.op = op;
    nd.a = a.id;
    nd.b = b.id;
    nd.off = static_cast<std::int32_t>(vals_.size());
    nd.n = n;
    nd.c = c;
    nd.param = param;
    nd.row = row;
    vals_.resize(vals_.size() + static_cast<std::size_t>(n), 0.0);
    nodes_.push_back(nd);
    return Var{static_cast<std::int32_t>(nodes_.size()) - 1};
}

Var Tape::param(std::string_view name) { return param_row(name, -1); }

Var Tape::param_row(std::string_view name, int row) {
    if (params_ == nullptr) {
        throw std::logic_error("Tape: no parameter vector bound");
    }
    const int index = params_->index_of(name);
    const TensorShape& s = params_->shape(index);
    if (row >= s.rows) {
        throw std::out_of_range("Tape: row out of range for '" + std::string(name) + "'");
    }
    const std::int64_t key = (static_cast<std::int64_t>(index) << 32) | static_cast<std::uint32_t>(row + 1);
    auto it = leaf_cache_.find(key);
    if (it != leaf_cache_.end()) return it->second;

    const int n = row < 0 ? s.size() : s.cols;
    Var v = push(Kernel::leaf, n, {}, {}, 0.0, index, row);
    const double* src = params_->values.data() + s.offset + (row < 0 ? 0 : row * s.cols);
    std::copy(src, src + n, out(nodes_.back()));
    check_finite(nodes_.back());
    leaf_cache_.emplace(key, v);
    return v;
}

Var Tape::constant(Vec v) {
    Var r = push(Kernel::constant, static_cast<int>(v.size()), {}, {});
    std::copy(v.begin(), v.end(), out(nodes_.back()));
    check_finite(nodes_.back());
    return r;
}

Var Tape::add(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.n != nb.n) throw std::invalid_argument("add: size mismatch");
    Var r = push(Kernel::add, na.n, a, b);
    const Node& nr = nodes_.back();
    const double* xa = out(node(a));
    const double* xb = out(node(b));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = xa[i] + xb[i];
    check_finite(nr);
    return r;
}

Var Tape::hadamard(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.n != nb.n) throw std::invalid_argument("hadamard: size mismatch");
    Var r = push(Kernel::hadamard, na.n, a, b);
    const Node& nr = nodes_.back();
    const double* xa = out(node(a));
    const double* xb = out(node(b));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = xa[i] * xb[i];
    check_finite(nr);
    return r;
}

Var Tape::mul(Var scalar, Var v) {
    if (node(scalar).n != 1) throw std::invalid_argument("mul: first argument must be size 1");
    Var r = push(Kernel::mul, node(v).n, scalar, v);
    const Node& nr = nodes_.back();
    const double s = out(node(scalar))[0];
    const double* x = out(node(v));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = s * x[i];
    check_finite(nr);
    return r;
}

Var Tape::scale(Var a, double c) {
    Var r = push(Kernel::scale, node(a).n, a, {}, c);
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = c * x[i];
    check_finite(nr);
    return r;
}

Var Tape::matvec(Var w, Var x, int rows, int cols) {
    if (node(w).n != rows * cols) throw std::invalid_argument("matvec: matrix size mismatch");
    if (node(x).n != cols) throw std::invalid_argument("matvec: vector size mismatch");
    Var r = push(Kernel::matvec, rows, w, x);
    const Node& nr = nodes_.back();
    const double* m = out(node(w));
    const double* v = out(node(x));
    double* y = out(nr);
    for (int i = 0; i < rows; ++i) {
        const double* mrow = m + static_cast<std::size_t>(i) * cols;
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += mrow[j] * v[j];
        y[i] = acc;
    }
    check_finite(nr);
    return r;
}

Var Tape::concat(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    Var r = push(Kernel::concat, na.n + nb.n, a, b);
    const Node& nr = nodes_.back();
    const double* xa = out(node(a));
    const double* xb = out(node(b));
    double* y = out(nr);
    std::copy(xa, xa + node(a).n, y);
    std::copy(xb, xb + node(b).n, y + node(a).n);
    check_finite(nr);
    return r;
}

Var Tape::tanh(Var a) {
    Var r = push(Kernel::tanh_k, node(a).n, a, {});
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = std::tanh(x[i]);
    check_finite(nr);
    return r;
}

Var Tape::sigmoid(Var a) {
    Var r = push(Kernel::sigmoid_k, node(a).n, a, {});
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = ad::sigmoid(x[i]);
    check_finite(nr);
    return r;
}

Var Tape::softplus(Var a) {
    Var r = push(Kernel::softplus_k, node(a).n, a, {});
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = ad::softplus(x[i]);
    check_finite(nr);
    return r;
}

Var Tape::exp(Var a) {
    Var r = push(Kernel::exp_k, node(a).n, a, {});
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = std::exp(x[i]);
    check_finite(nr);
    return r;
}

Var Tape::log(Var a) {
    Var r = push(Kernel::log_k, node(a).n, a, {});
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double* y = out(nr);
    for (int i = 0; i < nr.n; ++i) y[i] = std::log(x[i]);
    check_finite(nr);
    return r;
}

Var Tape::sum(Var a) {
    Var r = push(Kernel::sum_k, 1, a, {});
    const Node& nr = nodes_.back();
    const double* x = out(node(a));
    double acc = 0.0;
    for (int i = 0; i < node(a).n; ++i) acc += x[i];
    out(nr)[0] = acc;
    check_finite(nr);
    return r;
}

std::span<const double> Tape::values(Var v) const {
    const Node& nd = node(v);
    return {vals_.data() + nd.off, static_cast<std::size_t>(nd.n)};
}

double Tape::value_scalar(Var v) const {
    const Node& nd = node(v);
    if (nd.n != 1) throw std::invalid_argument("value_scalar: node is not size 1");
    return vals_[static_cast<std::size_t>(nd.off)];
}

void Tape::backward(Var root) {
    const Node& r = node(root);
    if (r.n != 1) throw std::invalid_argument("backward: root must be size 1");
    adj_.assign(vals_.size(), 0.0);
    adj_[static_cast<std::size_t>(r.off)] = 1.0;

    for (std::size_t k = nodes_.size(); k-- > 0;) {
        const Node& nd = nodes_[k];
        const double* g = adj_.data() + nd.off;
        switch (nd.op) {
            case Kernel::leaf:
            case Kernel::constant:
                break;
            case Kernel::add: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                double* gb = adj_.data() + nodes_[nd.b].off;
                for (int i = 0; i < nd.n; ++i) {
                    ga[i] += g[i];
                    gb[i] += g[i];
                }
                break;
            }
            case Kernel::hadamard: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                double* gb = adj_.data() + nodes_[nd.b].off;
                const double* xa = vals_.data() + nodes_[nd.a].off;
                const double* xb = vals_.data() + nodes_[nd.b].off;
                for (int i = 0; i < nd.n; ++i) {
                    ga[i] += g[i] * xb[i];
                    gb[i] += g[i] * xa[i];
                }
                break;
            }
            case Kernel::mul: {
                double* gs = adj_.data() + nodes_[nd.a].off;
                double* gv = adj_.data() + nodes_[nd.b].off;
                const double s = vals_[static_cast<std::size_t>(nodes_[nd.a].off)];
                const double* x = vals_.data() + nodes_[nd.b].off;
                double acc = 0.0;
                for (int i = 0; i < nd.n; ++i) {
                    acc += g[i] * x[i];
                    gv[i] += g[i] * s;
                }
                gs[0] += acc;
                break;
            }
            case Kernel::scale: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.n; ++i) ga[i] += nd.c * g[i];
                break;
            }
            case Kernel::matvec: {
                const int rows = nd.n;
                const int cols = nodes_[nd.b].n;
                double* gw = adj_.data() + nodes_[nd.a].off;
                double* gx = adj_.data() + nodes_[nd.b].off;
                const double* m = vals_.data() + nodes_[nd.a].off;
                const double* x = vals_.data() + nodes_[nd.b].off;
                for (int i = 0; i < rows; ++i) {
                    const double gi = g[i];
                    if (gi == 0.0) continue;
                    double* gwrow = gw + static_cast<std::size_t>(i) * cols;
                    const double* mrow = m + static_cast<std::size_t>(i) * cols;
                    for (int j = 0; j < cols; ++j) {
                        gwrow[j] += gi * x[j];
                        gx[j] += gi * mrow[j];
                    }
                }
                break;
            }
            case Kernel::concat: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                double* gb = adj_.data() + nodes_[nd.b].off;
                const int na = nodes_[nd.a].n;
                for (int i = 0; i < na; ++i) ga[i] += g[i];
                for (int i = 0; i < nodes_[nd.b].n; ++i) gb[i] += g[na + i];
                break;
            }
            case Kernel::tanh_k: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                const double* y = vals_.data() + nd.off;
                for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Kernel::sigmoid_k: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                const double* y = vals_.data() + nd.off;
                for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Kernel::softplus_k: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                const double* x = vals_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * ad::sigmoid(x[i]);
                break;
            }
            case Kernel::exp_k: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                const double* y = vals_.data() + nd.off;
                for (int i = 0; i < nd.n; ++i) ga[i] += g[i] * y[i];
                break;
            }
            case Kernel::log_k: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                const double* x = vals_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.n; ++i) ga[i] += g[i] / x[i];
                break;
            }
            case Kernel::sum_k: {
                double* ga = adj_.data() + nodes_[nd.a].off;
                const double g0 = g[0];
                for (int i = 0; i < nodes_[nd.a].n; ++i) ga[i] += g0;
                break;
            }
        }
    }
}

void Tape::grad_into(std::span<double> flat_gradient) const {
    if (params_ == nullptr) return;
    if (flat_gradient.size() != params_->size()) {
        throw std::invalid_argument("grad_into: gradient buffer size mismatch");
    }
    for (const Node& nd : nodes_) {
        if (nd.op != Kernel::leaf) continue;
        const TensorShape& s = params_->shape(nd.param);
        const int base = s.offset + (nd.row < 0 ? 0 : nd.row * s.cols);
        const double* g = adj_.data() + nd.off;
        for (int i = 0; i < nd.n; ++i) flat_gradient[static_cast<std::size_t>(base + i)] += g[i];
    }
}

// ---------------------------------------------------------------------------
// gradient evaluation + finite differences
// ---------------------------------------------------------------------------

GradientRecord evaluate_with_gradients(const TapeFunction& f, const ParamVector& x) {
    Tape tape(&x);
    Var root = f(tape);
    GradientRecord rec;
    rec.loss = tape.value_scalar(root);
    rec.gradient.assign(x.size(), 0.0);
    tape.backward(root);
    tape.grad_into(rec.gradient);
    for (double g : rec.gradient) {
        if (!std::isfinite(g)) {
            throw NumericError("backward", "non-finite gradient entry");
        }
    }
    return rec;
}

ScalarFunction as_scalar_function(const TapeFunction& f) {
    ScalarFunction s;
    s.value = [f](const ParamVector& x) {
        Tape tape(&x);
        return tape.value_scalar(f(tape));
    };
    s.gradient = [f](const ParamVector& x) { return evaluate_with_gradients(f, x).gradient; };
    return s;
}

double finite_difference_check(const ScalarFunction& f, const ParamVector& x, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be > 0");
    const Vec analytic = f.gradient(x);
    ParamVector probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double xi = probe.values[i];
        probe.values[i] = xi + step;
        const double fp = f.value(probe);
        probe.values[i] = xi - step;
        const double fm = f.value(probe);
        probe.values[i] = xi;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw NumericError("finite_difference", "non-finite function value at probe point");
        }
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

double finite_difference_check(const TapeFunction& f, const ParamVector& x, double step) {
    return finite_difference_check(as_scalar_function(f), x, step);
}

}  // namespace grpp::ad
