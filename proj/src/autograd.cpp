#include "poskern/autograd.hpp"

#include <cmath>

namespace poskern {

Tape::Var Tape::push(Matrix v, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(v);
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::leaf(Matrix v) { return push(std::move(v)); }

Tape::Var Tape::param(Parameter& p) {
    Var v = push(p.value);
    param_vars_.emplace_back(v.id, &p);
    return v;
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    if (av.cols() != bv.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(av) +
                                    " x " + shape_str(bv));
    return push(av * bv, [a, b, out = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        t.mut_grad(a).noalias() += g * t.val(b).transpose();
        t.mut_grad(b).noalias() += t.val(a).transpose() * g;
    });
}

Tape::Var Tape::matmul_bt(Var a, Var b, int b_rows) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    const Eigen::Index n = b_rows >= 0 ? b_rows : bv.rows();
    if (av.cols() != bv.cols())
        throw std::invalid_argument("matmul_bt: incompatible shapes " + shape_str(av) +
                                    " x " + shape_str(bv) + "^T");
    return push(av * bv.topRows(n).transpose(),
                [a, b, n, out = int(nodes_.size())](Tape& t) {
                    const Matrix& g = t.nodes_[out].grad;
                    t.mut_grad(a).noalias() += g * t.val(b).topRows(n);
                    t.mut_grad(b).topRows(n).noalias() += g.transpose() * t.val(a);
                });
}

Tape::Var Tape::add(Var a, Var b) {
    return push(val(a) + val(b), [a, b, out = int(nodes_.size())](Tape& t) {
        t.mut_grad(a) += t.nodes_[out].grad;
        t.mut_grad(b) += t.nodes_[out].grad;
    });
}

Tape::Var Tape::scale(Var a, double s) {
    return push(val(a) * s, [a, s, out = int(nodes_.size())](Tape& t) {
        t.mut_grad(a) += t.nodes_[out].grad * s;
    });
}

Tape::Var Tape::add_row_broadcast(Var x, Var row) {
    const Matrix& xv = val(x);
    const Matrix& rv = val(row);
    if (rv.rows() != 1 || rv.cols() != xv.cols())
        throw std::invalid_argument("add_row_broadcast: row must be 1x" +
                                    std::to_string(xv.cols()));
    Matrix out = xv.rowwise() + rv.row(0);
    return push(std::move(out), [x, row, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        t.mut_grad(x) += g;
        t.mut_grad(row).row(0) += g.colwise().sum();
    });
}

Tape::Var Tape::relu(Var a) {
    Matrix out = val(a).cwiseMax(0.0);
    return push(std::move(out), [a, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        const Matrix& v = t.val(a);
        t.mut_grad(a).array() += g.array() * (v.array() > 0.0).cast<double>();
    });
}

Tape::Var Tape::masked_softmax_rows(Var logits) {
    Matrix s = poskern::masked_softmax_rows(val(logits));
    return push(std::move(s), [logits, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& s = t.nodes_[out_id].value;
        const Matrix& g = t.nodes_[out_id].grad;
        Matrix& dl = t.mut_grad(logits);
        for (Eigen::Index i = 0; i < s.rows(); ++i) {
            const double dot = g.row(i).dot(s.row(i));
            // masked entries have s == 0, so their logit grad stays 0
            dl.row(i).array() += s.row(i).array() * (g.row(i).array() - dot);
        }
    });
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Matrix& xv = val(x);
    const Eigen::Index d = xv.cols();
    if (val(gain).cols() != d || val(bias).cols() != d || val(gain).rows() != 1 ||
        val(bias).rows() != 1)
        throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(d));
    Matrix xhat(xv.rows(), d);
    Vector sigma(xv.rows());
    for (Eigen::Index i = 0; i < xv.rows(); ++i) {
        const double mu = xv.row(i).mean();
        const double var = (xv.row(i).array() - mu).square().mean();
        sigma(i) = std::sqrt(var + eps);
        xhat.row(i) = (xv.row(i).array() - mu) / sigma(i);
    }
    Matrix out = (xhat.array().rowwise() * val(gain).row(0).array()).rowwise() +
                 val(bias).row(0).array();
    return push(std::move(out),
                [x, gain, bias, xhat = std::move(xhat), sigma = std::move(sigma),
                 out_id = int(nodes_.size())](Tape& t) {
                    const Matrix& g = t.nodes_[out_id].grad;
                    const Eigen::Index d = g.cols();
                    t.mut_grad(gain).row(0) +=
                        (g.array() * xhat.array()).colwise().sum().matrix();
                    t.mut_grad(bias).row(0) += g.colwise().sum();
                    Matrix& dx = t.mut_grad(x);
                    const auto& gv = t.val(gain).row(0);
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                        Eigen::RowVectorXd dxhat =
                            g.row(i).array() * gv.array();
                        const double m1 = dxhat.mean();
                        const double m2 =
                            (dxhat.array() * xhat.row(i).array()).mean();
                        dx.row(i).array() +=
                            (dxhat.array() - m1 - xhat.row(i).array() * m2) /
                            sigma(i);
                        (void)d;
                    }
                });
}

Tape::Var Tape::gather_rows(Var table, std::vector<int> idx) {
    const Matrix& tv = val(table);
    Matrix out(static_cast<Eigen::Index>(idx.size()), tv.cols());
    for (size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= tv.rows())
            throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) +
                                    " out of [0, " + std::to_string(tv.rows()) + ")");
        out.row(static_cast<Eigen::Index>(i)) = tv.row(idx[i]);
    }
    return push(std::move(out),
                [table, idx = std::move(idx), out_id = int(nodes_.size())](Tape& t) {
                    const Matrix& g = t.nodes_[out_id].grad;
                    Matrix& dt = t.mut_grad(table);
                    for (size_t i = 0; i < idx.size(); ++i)
                        dt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                });
}

namespace {
// Pairwise rotation angles for row p: theta_i = p * base^(-2i/d).
void rope_apply(const Matrix& in, Matrix& out, double base, bool inverse) {
    const Eigen::Index d = in.cols();
    for (Eigen::Index p = 0; p < in.rows(); ++p) {
        for (Eigen::Index i = 0; i < d / 2; ++i) {
            const double theta =
                static_cast<double>(p) *
                std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double c = std::cos(theta);
            const double s = inverse ? -std::sin(theta) : std::sin(theta);
            const double x0 = in(p, 2 * i), x1 = in(p, 2 * i + 1);
            out(p, 2 * i) = x0 * c - x1 * s;
            out(p, 2 * i + 1) = x0 * s + x1 * c;
        }
    }
}
}  // namespace

Tape::Var Tape::rope(Var x, double base) {
    const Matrix& xv = val(x);
    if (xv.cols() % 2 != 0)
        throw std::invalid_argument("rope: embedding dim must be even, got " +
                                    std::to_string(xv.cols()));
    Matrix out(xv.rows(), xv.cols());
    rope_apply(xv, out, base, /*inverse=*/false);
    return push(std::move(out), [x, base, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        Matrix dg(g.rows(), g.cols());
        rope_apply(g, dg, base, /*inverse=*/true);
        t.mut_grad(x) += dg;
    });
}

Tape::Var Tape::toeplitz_upper(Var diag, int k) {
    const Matrix& dv = val(diag);
    if (dv.size() != k)
        throw std::invalid_argument("toeplitz_upper: expected " + std::to_string(k) +
                                    " parameters, got " + std::to_string(dv.size()));
    Matrix out = Matrix::Zero(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) out(i, j) = dv(j - i);
    return push(std::move(out), [diag, k, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        Matrix& dd = t.mut_grad(diag);
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) dd(j - i) += g(i, j);
    });
}

Tape::Var Tape::toeplitz_lower(Var diag, int k) {
    const Matrix& dv = val(diag);
    if (dv.size() != k)
        throw std::invalid_argument("toeplitz_lower: expected " + std::to_string(k) +
                                    " parameters, got " + std::to_string(dv.size()));
    Matrix out = Matrix::Zero(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j <= i; ++j) out(i, j) = dv(i - j);
    return push(std::move(out), [diag, k, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        Matrix& dd = t.mut_grad(diag);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j <= i; ++j) dd(i - j) += g(i, j);
    });
}

Tape::Var Tape::triangle_upper(Var packed, int k) {
    const Matrix& pv = val(packed);
    const int expect = k * (k + 1) / 2;
    if (pv.size() != expect)
        throw std::invalid_argument("triangle_upper: expected " + std::to_string(expect) +
                                    " parameters, got " + std::to_string(pv.size()));
    Matrix out = Matrix::Zero(k, k);
    int idx = 0;
    for (int i = 0; i < k; ++i)
        for (int j = i; j < k; ++j) out(i, j) = pv(idx++);
    return push(std::move(out), [packed, k, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        Matrix& dp = t.mut_grad(packed);
        int idx = 0;
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) dp(idx++) += g(i, j);
    });
}

Tape::Var Tape::triangle_lower(Var packed, int k) {
    const Matrix& pv = val(packed);
    const int expect = k * (k + 1) / 2;
    if (pv.size() != expect)
        throw std::invalid_argument("triangle_lower: expected " + std::to_string(expect) +
                                    " parameters, got " + std::to_string(pv.size()));
    Matrix out = Matrix::Zero(k, k);
    int idx = 0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j <= i; ++j) out(i, j) = pv(idx++);
    return push(std::move(out), [packed, k, out_id = int(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out_id].grad;
        Matrix& dp = t.mut_grad(packed);
        int idx = 0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j <= i; ++j) dp(idx++) += g(i, j);
    });
}

Tape::Var Tape::dropout(Var x, double p, std::mt19937_64& rng) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
    const Matrix& xv = val(x);
    std::bernoulli_distribution keep(1.0 - p);
    Matrix mask(xv.rows(), xv.cols());
    for (Eigen::Index i = 0; i < xv.rows(); ++i)
        for (Eigen::Index j = 0; j < xv.cols(); ++j)
            mask(i, j) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
    Matrix out = xv.cwiseProduct(mask);
    return push(std::move(out),
                [x, mask = std::move(mask), out_id = int(nodes_.size())](Tape& t) {
                    t.mut_grad(x) += t.nodes_[out_id].grad.cwiseProduct(mask);
                });
}

Tape::Var Tape::ce_loss_rows(Var logits, std::vector<int> targets) {
    const Matrix& lv = val(logits);
    if (static_cast<Eigen::Index>(targets.size()) != lv.rows())
        throw std::invalid_argument("ce_loss_rows: one target per row required");
    Matrix probs(lv.rows(), lv.cols());
    double loss = 0.0;
    int n_valid = 0;
    for (Eigen::Index i = 0; i < lv.rows(); ++i) {
        const int t = targets[i];
        if (t < 0) continue;
        if (t >= lv.cols())
            throw std::out_of_range("ce_loss_rows: target " + std::to_string(t) +
                                    " out of catalog");
        const double m = lv.row(i).maxCoeff();
        Eigen::RowVectorXd e = (lv.row(i).array() - m).exp();
        const double z = e.sum();
        probs.row(i) = e / z;
        loss += std::log(z) + m - lv(i, t);
        ++n_valid;
    }
    Matrix out(1, 1);
    out(0, 0) = n_valid > 0 ? loss / n_valid : 0.0;
    return push(std::move(out),
                [logits, targets = std::move(targets), probs = std::move(probs),
                 n_valid, out_id = int(nodes_.size())](Tape& t) {
                    if (n_valid == 0) return;
                    const double g = t.nodes_[out_id].grad(0, 0) / n_valid;
                    Matrix& dl = t.mut_grad(logits);
                    for (size_t i = 0; i < targets.size(); ++i) {
                        const int tgt = targets[i];
                        if (tgt < 0) continue;
                        const Eigen::Index r = static_cast<Eigen::Index>(i);
                        dl.row(r) += g * probs.row(r);
                        dl(r, tgt) -= g;
                    }
                });
}

Tape::Var Tape::sum(Var a) {
    Matrix out(1, 1);
    out(0, 0) = val(a).sum();
    return push(std::move(out), [a, out_id = int(nodes_.size())](Tape& t) {
        t.mut_grad(a).array() += t.nodes_[out_id].grad(0, 0);
    });
}

Tape::Var Tape::weighted_sum(Var a, Matrix weights) {
    const Matrix& av = val(a);
    if (weights.rows() != av.rows() || weights.cols() != av.cols())
        throw std::invalid_argument("weighted_sum: weight shape mismatch");
    Matrix out(1, 1);
    out(0, 0) = av.cwiseProduct(weights).sum();
    return push(std::move(out),
                [a, weights = std::move(weights), out_id = int(nodes_.size())](Tape& t) {
                    t.mut_grad(a) += t.nodes_[out_id].grad(0, 0) * weights;
                });
}

void Tape::backward(Var root, double seed) {
    Matrix& g = mut_grad(root);
    if (g.size() != 1)
        throw std::invalid_argument("backward: root must be scalar (1x1), got " +
                                    shape_str(nodes_[root.id].value));
    g(0, 0) += seed;
    for (int i = root.id; i >= 0; --i)
        if (nodes_[i].back) nodes_[i].back(*this);
}

void Tape::flush_param_grads() {
    for (auto& [id, p] : param_vars_) p->grad += nodes_[id].grad;
}

void Tape::reset() {
    nodes_.clear();
    param_vars_.clear();
}

}  // namespace poskern
