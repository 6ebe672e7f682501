#pragma once

#include "loadcast/errors.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace loadcast::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const Matrix& m) {
    return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

/// Trainable dense tensor: row-major values plus an accumulated gradient of
/// the same shape.
struct Tensor {
    Matrix value;
    Matrix grad;

    Tensor() = default;
    Tensor(Eigen::Index rows, Eigen::Index cols)
        : value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

    Eigen::Index rows() const { return value.rows(); }
    Eigen::Index cols() const { return value.cols(); }
    Eigen::Index size() const { return value.size(); }
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Handle to a node recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Reverse-mode automatic differentiation over dense matrices.
///
/// Operations are recorded in execution order; `backward` walks them in
/// reverse and accumulates gradients. Parameter leaves reference an external
/// Tensor and add their gradient into `Tensor::grad`. A tape supports one
/// backward pass; `reset` clears it for the next forward pass.
class Tape {
public:
    Tape() { nodes_.reserve(256); }

    /// Constant leaf; receives no gradient.
    Var constant(Matrix value) { return push(Op::Leaf, {}, std::move(value), false); }

    /// Leaf bound to an externally owned tensor.
    Var parameter(Tensor& t) {
        check_recording();
        Node n;
        n.op = Op::Leaf;
        n.external = &t.value;
        n.param = &t;
        n.requires_grad = true;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    /// Read-only leaf bound to an external matrix (no gradient, no copy).
    Var view(const Matrix& m) {
        check_recording();
        Node n;
        n.op = Op::Leaf;
        n.external = &m;
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    Var matmul(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.cols() != B.rows()) {
            throw ShapeError("matmul shape mismatch " + shape_string(A) + " * " + shape_string(B));
        }
        return push(Op::MatMul, {a, b}, A * B);
    }

    Var add(Var a, Var b) {
        same_shape("add", a, b);
        return push(Op::Add, {a, b}, value(a) + value(b));
    }

    Var sub(Var a, Var b) {
        same_shape("sub", a, b);
        return push(Op::Sub, {a, b}, value(a) - value(b));
    }

    /// Element-wise product.
    Var mul(Var a, Var b) {
        same_shape("mul", a, b);
        return push(Op::Mul, {a, b}, value(a).cwiseProduct(value(b)));
    }

    /// a (n x m) plus row vector b (1 x m) broadcast over rows.
    Var add_row(Var a, Var b) {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (B.rows() != 1 || B.cols() != A.cols()) {
            throw ShapeError("add_row shape mismatch " + shape_string(A) + " + " + shape_string(B));
        }
        Matrix out = A;
        out.rowwise() += B.row(0);
        return push(Op::AddRow, {a, b}, std::move(out));
    }

    Var sigmoid(Var a) {
        Matrix out = value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        return push(Op::Sigmoid, {a}, std::move(out));
    }

    Var tanh(Var a) { return push(Op::Tanh, {a}, value(a).array().tanh().matrix()); }

    /// 1 - a.
    Var one_minus(Var a) { return push(Op::OneMinus, {a}, (1.0 - value(a).array()).matrix()); }

    /// Columns [first, first + count).
    Var slice_cols(Var a, Eigen::Index first, Eigen::Index count) {
        const Matrix& A = value(a);
        if (first < 0 || count < 0 || first + count > A.cols()) {
            throw ShapeError("slice_cols [" + std::to_string(first) + ", " + std::to_string(first + count) +
                             ") outside " + shape_string(A));
        }
        Var v = push(Op::SliceCols, {a}, A.middleCols(first, count));
        nodes_[v.id].aux = first;
        return v;
    }

    /// Mean squared error against a constant target; 1x1 result.
    Var mse(Var pred, const Matrix& target) {
        const Matrix& P = value(pred);
        if (P.rows() != target.rows() || P.cols() != target.cols()) {
            throw ShapeError("mse shape mismatch " + shape_string(P) + " vs " + shape_string(target));
        }
        Matrix out(1, 1);
        out(0, 0) = (P - target).squaredNorm() / static_cast<double>(P.size());
        Var v = push(Op::Mse, {pred}, std::move(out));
        nodes_[v.id].target = target;
        return v;
    }

    const Matrix& value(Var v) const {
        const Node& n = nodes_.at(v.id);
        return n.external ? *n.external : n.value;
    }

    double scalar(Var v) const { return value(v)(0, 0); }

    /// Gradient of the last backward pass with respect to `v`.
    const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }

    std::size_t size() const { return nodes_.size(); }

    /// Back-propagates from a 1x1 node, adding into every bound parameter's
    /// gradient.
    void backward(Var loss) {
        if (consumed_) throw StateError("tape already back-propagated; call reset() before reuse");
        if (value(loss).size() != 1) {
            throw ShapeError("backward needs a scalar loss, got " + shape_string(value(loss)));
        }
        consumed_ = true;
        for (auto& n : nodes_) {
            if (n.requires_grad) {
                const Matrix& v = n.external ? *n.external : n.value;
                n.grad.setZero(v.rows(), v.cols());
            }
        }
        nodes_[loss.id].grad(0, 0) = 1.0;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.op == Op::Leaf) continue;
            propagate(n);
        }
        for (auto& n : nodes_) {
            if (n.param) n.param->grad += n.grad;
        }
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

private:
    enum class Op { Leaf, MatMul, Add, Sub, Mul, AddRow, Sigmoid, Tanh, OneMinus, SliceCols, Mse };

    static const char* op_name(Op op) {
        switch (op) {
        case Op::Leaf: return "leaf";
        case Op::MatMul: return "matmul";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::AddRow: return "add_row";
        case Op::Sigmoid: return "sigmoid";
        case Op::Tanh: return "tanh";
        case Op::OneMinus: return "one_minus";
        case Op::SliceCols: return "slice_cols";
        case Op::Mse: return "mse";
        }
        return "?";
    }

    struct Node {
        Op op = Op::Leaf;
        std::size_t in[2] = {0, 0};
        Matrix value;
        Matrix grad;
        Matrix target;
        const Matrix* external = nullptr;
        Tensor* param = nullptr;
        Eigen::Index aux = 0;
        bool requires_grad = false;
    };

    void check_recording() const {
        if (consumed_) throw StateError("tape already back-propagated; call reset() before recording");
    }

    void same_shape(const char* op, Var a, Var b) const {
        const Matrix& A = value(a);
        const Matrix& B = value(b);
        if (A.rows() != B.rows() || A.cols() != B.cols()) {
            throw ShapeError(std::string(op) + " shape mismatch " + shape_string(A) + " vs " + shape_string(B));
        }
    }

    Var push(Op op, std::initializer_list<Var> inputs, Matrix value, bool track = true) {
        check_recording();
        if (!value.allFinite()) {
            throw NumericError(std::string("non-finite value produced by ") + op_name(op));
        }
        Node n;
        n.op = op;
        std::size_t k = 0;
        bool needs = false;
        for (Var v : inputs) {
            n.in[k++] = v.id;
            needs = needs || nodes_[v.id].requires_grad;
        }
        n.requires_grad = track && (op == Op::Leaf ? false : needs);
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    const Matrix& val(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.external ? *n.external : n.value;
    }

    void propagate(Node& n) {
        Node& a = nodes_[n.in[0]];
        const Matrix& g = n.grad;
        switch (n.op) {
        case Op::MatMul: {
            Node& b = nodes_[n.in[1]];
            if (a.requires_grad) a.grad.noalias() += g * val(n.in[1]).transpose();
            if (b.requires_grad) b.grad.noalias() += val(n.in[0]).transpose() * g;
            break;
        }
        case Op::Add: {
            Node& b = nodes_[n.in[1]];
            if (a.requires_grad) a.grad += g;
            if (b.requires_grad) b.grad += g;
            break;
        }
        case Op::Sub: {
            Node& b = nodes_[n.in[1]];
            if (a.requires_grad) a.grad += g;
            if (b.requires_grad) b.grad -= g;
            break;
        }
        case Op::Mul: {
            Node& b = nodes_[n.in[1]];
            if (a.requires_grad) a.grad += g.cwiseProduct(val(n.in[1]));
            if (b.requires_grad) b.grad += g.cwiseProduct(val(n.in[0]));
            break;
        }
        case Op::AddRow: {
            Node& b = nodes_[n.in[1]];
            if (a.requires_grad) a.grad += g;
            if (b.requires_grad) b.grad += g.colwise().sum();
            break;
        }
        case Op::Sigmoid:
            if (a.requires_grad) {
                a.grad.array() += g.array() * n.value.array() * (1.0 - n.value.array());
            }
            break;
        case Op::Tanh:
            if (a.requires_grad) a.grad.array() += g.array() * (1.0 - n.value.array().square());
            break;
        case Op::OneMinus:
            if (a.requires_grad) a.grad -= g;
            break;
        case Op::SliceCols:
            if (a.requires_grad) a.grad.middleCols(n.aux, n.value.cols()) += g;
            break;
        case Op::Mse:
            if (a.requires_grad) {
                const double scale = 2.0 * g(0, 0) / static_cast<double>(n.target.size());
                a.grad += scale * (val(n.in[0]) - n.target);
            }
            break;
        case Op::Leaf: break;
        }
    }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

} // namespace loadcast::nn
