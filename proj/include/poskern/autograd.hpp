#pragma once

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "poskern/matrix.hpp"

namespace poskern {

// A named trainable tensor. grad accumulates across backward passes
// until zero_grad() is called.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)),
          grad(Matrix::Zero(value.rows(), value.cols())) {}

    void zero_grad() { grad.setZero(); }
    Eigen::Index size() const { return value.size(); }
};

// Reverse-mode tape over dense matrices. One tape per forward pass;
// build the graph with the op methods, call backward() on a scalar
// (1x1) node, then flush_param_grads() to accumulate into Parameters.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Var leaf(Matrix v);
    Var param(Parameter& p);

    const Matrix& val(Var v) const { return nodes_[v.id].value; }
    const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

    Var matmul(Var a, Var b);
    // a * b^T; when b_rows >= 0 only the top b_rows rows of b participate.
    Var matmul_bt(Var a, Var b, int b_rows = -1);
    Var add(Var a, Var b);
    Var scale(Var a, double s);
    Var add_row_broadcast(Var x, Var row);  // row is 1 x cols
    Var relu(Var a);
    Var masked_softmax_rows(Var logits);
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
    Var gather_rows(Var table, std::vector<int> idx);
    Var rope(Var x, double base);
    Var toeplitz_upper(Var diag, int k);
    Var toeplitz_lower(Var diag, int k);
    Var triangle_upper(Var packed, int k);
    Var triangle_lower(Var packed, int k);
    // Inverted dropout; p = 0 is a pass-through.
    Var dropout(Var x, double p, std::mt19937_64& rng);
    // Mean negative log-softmax over rows with target >= 0 (full catalog).
    // All rows masked -> loss 0 with zero gradient. Result is 1x1.
    Var ce_loss_rows(Var logits, std::vector<int> targets);
    Var sum(Var a);                              // 1x1
    Var weighted_sum(Var a, Matrix weights);     // 1x1, sum(a .* weights)

    void backward(Var root, double seed = 1.0);
    void flush_param_grads();
    void reset();

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&)> back;
    };

    Var push(Matrix v, std::function<void(Tape&)> back = {});
    Matrix& mut_grad(Var v) { return nodes_[v.id].grad; }

    std::vector<Node> nodes_;
    std::vector<std::pair<int, Parameter*>> param_vars_;
};

}  // namespace poskern
