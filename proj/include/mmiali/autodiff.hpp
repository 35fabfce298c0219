// Copyright 2026 The mmiali Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "mmiali/tensor.hpp"

/// Tape-based reverse-mode differentiation for the small MLP workloads used
/// here. A Graph is built fresh for every forward pass; records are appended in
/// evaluation order, so the tape is its own topological order.
namespace mmiali::ad {

enum class Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Mul,
    Affine,  // scale * a + shift
    Relu,
    Sigmoid,
    Log,
    Exp,
    Abs,
    Square,
    Clamp,
    Sum,
    Mean,
    ConcatCols,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Affine: return "affine";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::Log: return "log";
        case Op::Exp: return "exp";
        case Op::Abs: return "abs";
        case Op::Square: return "square";
        case Op::Clamp: return "clamp";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::ConcatCols: return "concat";
    }
    return "?";
}

using NodeId = std::size_t;

struct Record {
    Op op = Op::Leaf;
    NodeId lhs = 0;
    NodeId rhs = 0;
    double p0 = 0.0;  // affine scale / clamp low
    double p1 = 0.0;  // affine shift / clamp high
    Tensor value;
    Storage grad;  // sized lazily during backward
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
public:
    Var() = default;
    Var(Graph* g, NodeId id) : graph_(g), id_(id) {}
    Graph& graph() const { return *graph_; }
    NodeId id() const noexcept { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    double item() const { return value().item(); }

private:
    Graph* graph_ = nullptr;
    NodeId id_ = 0;
};

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Constant or input leaf. Receives a gradient like any leaf.
    Var input(Tensor t) { return push(Op::Leaf, 0, 0, std::move(t)); }

    /// Leaf bound to external parameter storage. Repeated calls with the same
    /// storage return the same node, so shared layers accumulate one gradient.
    Var parameter(const Tensor& storage) {
        auto it = params_.find(&storage);
        if (it != params_.end()) return Var(this, it->second);
        Var v = push(Op::Leaf, 0, 0, storage);
        params_.emplace(&storage, v.id());
        return v;
    }

    /// Gradient of the last backward() root w.r.t. a parameter; zeros when the
    /// parameter was never registered or did not influence the root.
    Tensor parameter_grad(const Tensor& storage) const {
        auto it = params_.find(&storage);
        if (it == params_.end()) return Tensor(storage.shape());
        return grad(Var(const_cast<Graph*>(this), it->second));
    }

    Tensor grad(const Var& v) const {
        const Record& r = records_.at(v.id());
        if (r.grad.empty()) return Tensor(r.value.shape());
        return Tensor(r.value.shape(), r.grad);
    }

    const Tensor& value(NodeId id) const { return records_.at(id).value; }
    const Record& record(NodeId id) const { return records_.at(id); }
    std::size_t size() const noexcept { return records_.size(); }

    Var push(Op op, NodeId lhs, NodeId rhs, Tensor value, double p0 = 0.0, double p1 = 0.0) {
        Record r;
        r.op = op;
        r.lhs = lhs;
        r.rhs = rhs;
        r.p0 = p0;
        r.p1 = p1;
        r.value = std::move(value);
        records_.push_back(std::move(r));
        return Var(this, records_.size() - 1);
    }

    /// Fills gradients of every node w.r.t. a scalar root. Previous gradients
    /// are discarded.
    void backward(const Var& root);

private:
    std::vector<Record> records_;
    std::unordered_map<const Tensor*, NodeId> params_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

namespace detail {

inline void same_graph(const Var& a, const Var& b, const char* op) {
    if (&a.graph() != &b.graph()) throw Error(std::string(op) + ": operands belong to different graphs");
}

/// Either identical shapes or rhs broadcast over the leading batch dim.
inline void check_broadcast(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return;
    if (a.size() == b.size() && !b.empty() && b.front() == 1 &&
        std::equal(a.begin() + 1, a.end(), b.begin() + 1))
        return;
    shape_error(op, a, b);
}

template <typename F>
Var unary(const Var& a, Op op, F f, double p0 = 0.0, double p1 = 0.0) {
    const Tensor& x = a.value();
    Tensor out(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = f(x[k]);
    return a.graph().push(op, a.id(), 0, std::move(out), p0, p1);
}

template <typename F>
Var binary(const Var& a, const Var& b, Op op, const char* name, F f) {
    same_graph(a, b, name);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    check_broadcast(x.shape(), y.shape(), name);
    Tensor out(x.shape());
    // y is repeated every `cols` entries of x; cols == x.size() without broadcast.
    const std::size_t cols = y.size();
    for (std::size_t base = 0; base < x.size(); base += cols)
        for (std::size_t c = 0; c < cols; ++c) out[base + c] = f(x[base + c], y[c]);
    return a.graph().push(op, a.id(), b.id(), std::move(out));
}

}  // namespace detail

// ---- forward ops -----------------------------------------------------------

/// [n,k] x [k,p] -> [n,p].
namespace detail {

using Mat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    detail::same_graph(a, b, "matmul");
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0])
        shape_error("matmul", x.shape(), y.shape());
    const std::size_t n = x.shape()[0], k = x.shape()[1], p = y.shape()[1];
    Tensor out = Tensor::matrix(n, p);
    const double* xd = x.data().data();
    const double* yd = y.data().data();
    detail::ConstMat xm(xd, n, k), ym(yd, k, p);
    detail::Mat om(out.data().data(), n, p);
    om.noalias() = xm * ym;
    return a.graph().push(Op::MatMul, a.id(), b.id(), std::move(out));
}

inline Var add(const Var& a, const Var& b) {
    return detail::binary(a, b, Op::Add, "add", [](double x, double y) { return x + y; });
}
inline Var sub(const Var& a, const Var& b) {
    return detail::binary(a, b, Op::Sub, "sub", [](double x, double y) { return x - y; });
}
inline Var mul(const Var& a, const Var& b) {
    return detail::binary(a, b, Op::Mul, "mul", [](double x, double y) { return x * y; });
}

inline Var affine(const Var& a, double scale, double shift) {
    return detail::unary(a, Op::Affine, [=](double x) { return scale * x + shift; }, scale, shift);
}
inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }
/// c - a
inline Var rsub(double c, const Var& a) { return affine(a, -1.0, c); }

/// Subgradient at exactly 0 is 0.
inline Var relu(const Var& a) {
    return detail::unary(a, Op::Relu, [](double x) { return x > 0.0 ? x : 0.0; });
}

inline Var sigmoid(const Var& a) {
    return detail::unary(a, Op::Sigmoid, [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
}

inline Var log(const Var& a) {
    for (double x : a.value().data())
        if (!(x > 0.0)) throw Error("log: non-positive input " + std::to_string(x) + " in tensor " +
                                    shape_str(a.shape()) + "; clamp probabilities before log");
    return detail::unary(a, Op::Log, [](double x) { return std::log(x); });
}

inline Var exp(const Var& a) {
    return detail::unary(a, Op::Exp, [](double x) { return std::exp(x); });
}
inline Var abs(const Var& a) {
    return detail::unary(a, Op::Abs, [](double x) { return std::fabs(x); });
}
inline Var square(const Var& a) {
    return detail::unary(a, Op::Square, [](double x) { return x * x; });
}

/// Gradient passes only where lo <= x <= hi.
inline Var clamp(const Var& a, double lo, double hi) {
    if (!(lo <= hi)) throw Error("clamp: lo > hi");
    return detail::unary(a, Op::Clamp, [=](double x) { return std::clamp(x, lo, hi); }, lo, hi);
}

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double x : a.value().data()) s += x;
    return a.graph().push(Op::Sum, a.id(), 0, Tensor::scalar(s));
}

inline Var mean(const Var& a) {
    const Tensor& x = a.value();
    if (x.size() == 0) throw Error("mean: empty tensor");
    double s = 0.0;
    for (double v : x.data()) s += v;
    return a.graph().push(Op::Mean, a.id(), 0, Tensor::scalar(s / static_cast<double>(x.size())));
}

/// [n,p] ++ [n,q] -> [n,p+q].
inline Var concat(const Var& a, const Var& b) {
    detail::same_graph(a, b, "concat");
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.rank() != 2 || y.rank() != 2 || x.shape()[0] != y.shape()[0])
        shape_error("concat", x.shape(), y.shape());
    const std::size_t n = x.shape()[0], p = x.shape()[1], q = y.shape()[1];
    Tensor out = Tensor::matrix(n, p + q);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(i * p), p,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * (p + q)));
        std::copy_n(y.data().begin() + static_cast<std::ptrdiff_t>(i * q), q,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * (p + q) + p));
    }
    return a.graph().push(Op::ConcatCols, a.id(), b.id(), std::move(out));
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

// ---- backward --------------------------------------------------------------

inline void Graph::backward(const Var& root) {
    if (&root.graph() != this) throw Error("backward: root belongs to a different graph");
    if (!records_.at(root.id()).value.is_scalar())
        throw Error("backward: root of shape " + shape_str(records_[root.id()].value.shape()) +
                    " is not scalar");
    for (auto& r : records_) r.grad.clear();
    records_[root.id()].grad.assign(1, 1.0);

    auto acc = [this](NodeId id) -> Storage& {
        auto& g = records_[id].grad;
        if (g.empty()) g.assign(records_[id].value.size(), 0.0);
        return g;
    };

    for (std::size_t n = root.id() + 1; n-- > 0;) {
        if (records_[n].grad.empty()) continue;
        const Record& r = records_[n];
        const Storage& g = r.grad;
        const Tensor& out = r.value;
        switch (r.op) {
            case Op::Leaf: break;
            case Op::MatMul: {
                const Tensor& x = records_[r.lhs].value;
                const Tensor& y = records_[r.rhs].value;
                const std::size_t rows = x.shape()[0], k = x.shape()[1], p = y.shape()[1];
                auto& gx = acc(r.lhs);
                auto& gy = acc(r.rhs);
                detail::ConstMat xm(x.data().data(), rows, k), ym(y.data().data(), k, p);
                detail::ConstMat gm(g.data(), rows, p);
                // Reads only values and g, so both may target one buffer.
                detail::Mat(gx.data(), rows, k).noalias() += gm * ym.transpose();
                detail::Mat(gy.data(), k, p).noalias() += xm.transpose() * gm;
                break;
            }
            case Op::Add:
            case Op::Sub:
            case Op::Mul: {
                const Tensor& x = records_[r.lhs].value;
                const Tensor& y = records_[r.rhs].value;
                const std::size_t cols = y.size();
                // Operands may alias (x - x); fetch both buffers before writing.
                acc(r.lhs);
                acc(r.rhs);
                auto& gx = records_[r.lhs].grad;
                auto& gy = records_[r.rhs].grad;
                for (std::size_t base = 0; base < g.size(); base += cols)
                    for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t k = base + c;
                        if (r.op == Op::Add) {
                            gx[k] += g[k];
                            gy[c] += g[k];
                        } else if (r.op == Op::Sub) {
                            gx[k] += g[k];
                            gy[c] -= g[k];
                        } else {
                            gx[k] += g[k] * y[c];
                            gy[c] += g[k] * x[k];
                        }
                    }
                break;
            }
            case Op::Affine: {
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k) gx[k] += r.p0 * g[k];
                break;
            }
            case Op::Relu: {
                const Tensor& x = records_[r.lhs].value;
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (x[k] > 0.0) gx[k] += g[k];
                break;
            }
            case Op::Sigmoid: {
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * out[k] * (1.0 - out[k]);
                break;
            }
            case Op::Log: {
                const Tensor& x = records_[r.lhs].value;
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] / x[k];
                break;
            }
            case Op::Exp: {
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * out[k];
                break;
            }
            case Op::Abs: {
                const Tensor& x = records_[r.lhs].value;
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k)
                    gx[k] += x[k] > 0.0 ? g[k] : (x[k] < 0.0 ? -g[k] : 0.0);
                break;
            }
            case Op::Square: {
                const Tensor& x = records_[r.lhs].value;
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k) gx[k] += 2.0 * x[k] * g[k];
                break;
            }
            case Op::Clamp: {
                const Tensor& x = records_[r.lhs].value;
                auto& gx = acc(r.lhs);
                for (std::size_t k = 0; k < g.size(); ++k)
                    if (x[k] >= r.p0 && x[k] <= r.p1) gx[k] += g[k];
                break;
            }
            case Op::Sum: {
                auto& gx = acc(r.lhs);
                for (double& v : gx) v += g[0];
                break;
            }
            case Op::Mean: {
                auto& gx = acc(r.lhs);
                const double s = g[0] / static_cast<double>(gx.size());
                for (double& v : gx) v += s;
                break;
            }
            case Op::ConcatCols: {
                const Tensor& x = records_[r.lhs].value;
                const Tensor& y = records_[r.rhs].value;
                const std::size_t rows = x.shape()[0], p = x.shape()[1], q = y.shape()[1];
                acc(r.lhs);
                acc(r.rhs);
                auto& gx = records_[r.lhs].grad;
                auto& gy = records_[r.rhs].grad;
                for (std::size_t i = 0; i < rows; ++i) {
                    for (std::size_t j = 0; j < p; ++j) gx[i * p + j] += g[i * (p + q) + j];
                    for (std::size_t j = 0; j < q; ++j) gy[i * q + j] += g[i * (p + q) + p + j];
                }
                break;
            }
        }
    }
}

}  // namespace mmiali::ad
