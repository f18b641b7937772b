#include "poskern/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace poskern {

using nlohmann::json;

void ModelConfig::validate() const {
    if (catalog < 1) throw std::invalid_argument("config: catalog size N must be >= 1");
    if (window < 1) throw std::invalid_argument("config: window K must be >= 1");
    if (dim < 1) throw std::invalid_argument("config: embedding dim d must be >= 1");
    if (blocks < 1) throw std::invalid_argument("config: block count B must be >= 1");
    if (scheme == PositionalScheme::Rotary && dim % 2 != 0)
        throw std::invalid_argument("config: Rotary scheme requires even d");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("config: dropout must be in [0, 1)");
}

std::string ModelConfig::to_json() const {
    json j;
    j["catalog"] = catalog;
    j["window"] = window;
    j["dim"] = dim;
    j["blocks"] = blocks;
    j["scheme"] = scheme_str(scheme);
    j["kernel_upper"] = kernel.upper == FactorStructure::Toeplitz ? "toeplitz" : "full";
    j["kernel_lower"] = kernel.lower == FactorStructure::Toeplitz ? "toeplitz" : "full";
    j["share_upper"] = kernel.share_upper;
    j["share_lower"] = kernel.share_lower;
    j["dropout"] = dropout;
    j["seed"] = seed;
    j["rope_base"] = rope_base;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelConfig c;
    c.catalog = j.at("catalog").get<int>();
    c.window = j.at("window").get<int>();
    c.dim = j.at("dim").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.scheme = parse_scheme(j.at("scheme").get<std::string>());
    c.kernel.upper = j.at("kernel_upper").get<std::string>() == "toeplitz"
                         ? FactorStructure::Toeplitz
                         : FactorStructure::Full;
    c.kernel.lower = j.at("kernel_lower").get<std::string>() == "toeplitz"
                         ? FactorStructure::Toeplitz
                         : FactorStructure::Full;
    c.kernel.share_upper = j.at("share_upper").get<bool>();
    c.kernel.share_lower = j.at("share_lower").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.rope_base = j.at("rope_base").get<double>();
    c.validate();
    return c;
}

namespace {
Matrix randn(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double std) {
    std::normal_distribution<double> dist(0.0, std);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}
}  // namespace

Model Model::init(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    std::mt19937_64 rng(cfg.seed);
    const int d = cfg.dim;
    const double std = 0.02;

    m.embedding = Parameter("embedding", randn(rng, cfg.catalog + 1, d, std));
    if (cfg.scheme == PositionalScheme::ClassicAdditive)
        m.pos = Parameter("pos", randn(rng, cfg.window, d, std));

    for (int b = 0; b < cfg.blocks; ++b) {
        const std::string pfx = "block" + std::to_string(b) + ".";
        Block blk;
        blk.ln1_gain = Parameter(pfx + "ln1_gain", Matrix::Ones(1, d));
        blk.ln1_bias = Parameter(pfx + "ln1_bias", Matrix::Zero(1, d));
        blk.wq = Parameter(pfx + "wq", randn(rng, d, d, std));
        blk.wk = Parameter(pfx + "wk", randn(rng, d, d, std));
        blk.wv = Parameter(pfx + "wv", randn(rng, d, d, std));
        blk.ln2_gain = Parameter(pfx + "ln2_gain", Matrix::Ones(1, d));
        blk.ln2_bias = Parameter(pfx + "ln2_bias", Matrix::Zero(1, d));
        blk.ffn_w1 = Parameter(pfx + "ffn_w1", randn(rng, d, d, std));
        blk.ffn_b1 = Parameter(pfx + "ffn_b1", Matrix::Zero(1, d));
        blk.ffn_w2 = Parameter(pfx + "ffn_w2", randn(rng, d, d, std));
        blk.ffn_b2 = Parameter(pfx + "ffn_b2", Matrix::Zero(1, d));
        m.blocks.push_back(std::move(blk));
    }
    m.out_ln_gain = Parameter("out_ln_gain", Matrix::Ones(1, d));
    m.out_ln_bias = Parameter("out_ln_bias", Matrix::Zero(1, d));

    if (cfg.scheme == PositionalScheme::Kernel) {
        const int k = cfg.window;
        const int n_upper = cfg.kernel.share_upper ? 1 : cfg.blocks;
        const int n_lower = cfg.kernel.share_lower ? 1 : cfg.blocks;
        for (int i = 0; i < n_upper; ++i)
            m.kernel_upper.emplace_back(
                "kernel_upper" + std::to_string(i),
                identity_factor_params(cfg.kernel.upper, k, true).transpose());
        for (int i = 0; i < n_lower; ++i)
            m.kernel_lower.emplace_back(
                "kernel_lower" + std::to_string(i),
                identity_factor_params(cfg.kernel.lower, k, false).transpose());
    }
    return m;
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    out.push_back(&embedding);
    if (cfg.scheme == PositionalScheme::ClassicAdditive) out.push_back(&pos);
    for (auto& b : blocks)
        for (Parameter* p : {&b.ln1_gain, &b.ln1_bias, &b.wq, &b.wk, &b.wv, &b.ln2_gain,
                             &b.ln2_bias, &b.ffn_w1, &b.ffn_b1, &b.ffn_w2, &b.ffn_b2})
            out.push_back(p);
    for (auto& p : kernel_upper) out.push_back(&p);
    for (auto& p : kernel_lower) out.push_back(&p);
    out.push_back(&out_ln_gain);
    out.push_back(&out_ln_bias);
    return out;
}

std::vector<const Parameter*> Model::parameters() const {
    auto mut = const_cast<Model*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::vector<Parameter*> Model::kernel_parameters() {
    std::vector<Parameter*> out;
    for (auto& p : kernel_upper) out.push_back(&p);
    for (auto& p : kernel_lower) out.push_back(&p);
    return out;
}

long Model::parameter_count() const {
    long n = 0;
    for (const Parameter* p : parameters()) n += p->size();
    return n;
}

void Model::zero_grad() {
    for (Parameter* p : parameters()) p->zero_grad();
}

Tape::Var Model::forward(Tape& t, const std::vector<int>& window,
                         std::mt19937_64* rng) const {
    if (static_cast<int>(window.size()) != cfg.window)
        throw std::invalid_argument("forward: window length must be K=" +
                                    std::to_string(cfg.window));
    for (int item : window)
        if (item < 0 || item > cfg.catalog)
            throw std::invalid_argument("forward: item index " + std::to_string(item) +
                                        " outside [0, N]");
    Model& self = const_cast<Model&>(*this);
    const double p = rng ? cfg.dropout : 0.0;
    auto drop = [&](Tape::Var v) { return rng && p > 0.0 ? t.dropout(v, p, *rng) : v; };

    Tape::Var table = t.param(self.embedding);
    Tape::Var x = t.gather_rows(table, window);
    if (cfg.scheme == PositionalScheme::ClassicAdditive)
        x = t.add(x, t.param(self.pos));
    x = drop(x);

    for (int b = 0; b < cfg.blocks; ++b) {
        Block& blk = self.blocks[b];
        Tape::Var h = t.layer_norm(x, t.param(blk.ln1_gain), t.param(blk.ln1_bias));
        Tape::Var q = t.matmul(h, t.param(blk.wq));
        Tape::Var k = t.matmul(h, t.param(blk.wk));
        Tape::Var v = t.matmul(h, t.param(blk.wv));
        if (cfg.scheme == PositionalScheme::Rotary) {
            q = t.rope(q, cfg.rope_base);
            k = t.rope(k, cfg.rope_base);
        }
        Tape::Var scores = t.matmul_bt(q, k);
        if (cfg.scheme == PositionalScheme::Kernel) {
            Parameter& up = self.kernel_upper[cfg.kernel.share_upper ? 0 : b];
            Tape::Var uvar = cfg.kernel.upper == FactorStructure::Toeplitz
                                 ? t.toeplitz_upper(t.param(up), cfg.window)
                                 : t.triangle_upper(t.param(up), cfg.window);
            scores = t.matmul(scores, uvar);
        }
        scores = t.scale(scores, 1.0 / std::sqrt(static_cast<double>(cfg.dim)));
        Tape::Var attn_map = t.masked_softmax_rows(scores);
        if (cfg.scheme == PositionalScheme::Kernel) {
            Parameter& lo = self.kernel_lower[cfg.kernel.share_lower ? 0 : b];
            Tape::Var lvar = cfg.kernel.lower == FactorStructure::Toeplitz
                                 ? t.toeplitz_lower(t.param(lo), cfg.window)
                                 : t.triangle_lower(t.param(lo), cfg.window);
            v = t.matmul(lvar, v);
        }
        x = t.add(x, drop(t.matmul(attn_map, v)));

        Tape::Var h2 = t.layer_norm(x, t.param(blk.ln2_gain), t.param(blk.ln2_bias));
        Tape::Var f = t.relu(
            t.add_row_broadcast(t.matmul(h2, t.param(blk.ffn_w1)), t.param(blk.ffn_b1)));
        f = t.add_row_broadcast(t.matmul(f, t.param(blk.ffn_w2)), t.param(blk.ffn_b2));
        x = t.add(x, drop(f));
    }
    x = t.layer_norm(x, t.param(self.out_ln_gain), t.param(self.out_ln_bias));
    // tied output projection against the first N embedding rows
    return t.matmul_bt(x, table, cfg.catalog);
}

Matrix Model::forward_logits(const std::vector<int>& window) const {
    Tape t;
    return t.val(forward(t, window));
}

Matrix Model::upper_factor(int block) const {
    if (cfg.scheme != PositionalScheme::Kernel)
        throw std::logic_error("upper_factor: model has no kernel");
    const Parameter& p = kernel_upper[cfg.kernel.share_upper ? 0 : block];
    return materialize_upper(cfg.kernel.upper, p.value.row(0).transpose(), cfg.window);
}

Matrix Model::lower_factor(int block) const {
    if (cfg.scheme != PositionalScheme::Kernel)
        throw std::logic_error("lower_factor: model has no kernel");
    const Parameter& p = kernel_lower[cfg.kernel.share_lower ? 0 : block];
    return materialize_lower(cfg.kernel.lower, p.value.row(0).transpose(), cfg.window);
}

std::vector<Matrix> Model::attention_maps(const std::vector<int>& window) const {
    // re-runs the embedding/block pipeline without a tape, capturing
    // each block's post-softmax map
    std::vector<Matrix> maps;
    Matrix x(cfg.window, cfg.dim);
    for (int i = 0; i < cfg.window; ++i) x.row(i) = embedding.value.row(window[i]);
    if (cfg.scheme == PositionalScheme::ClassicAdditive) x += pos.value;
    for (int b = 0; b < cfg.blocks; ++b) {
        const Block& blk = blocks[b];
        Matrix h = layer_norm(x, blk.ln1_gain.value.row(0).transpose(),
                              blk.ln1_bias.value.row(0).transpose());
        AttentionWeights w{blk.wq.value, blk.wk.value, blk.wv.value};
        Matrix map, attn;
        if (cfg.scheme == PositionalScheme::Kernel) {
            map = kernel_attention_map(h, w, upper_factor(b));
            attn = map * (lower_factor(b) * (h * w.wv));
        } else {
            const double base =
                cfg.scheme == PositionalScheme::Rotary ? cfg.rope_base : 0.0;
            map = causal_attention_map(h, w, base);
            attn = map * (h * w.wv);
        }
        maps.push_back(map);
        x += attn;
        Matrix h2 = layer_norm(x, blk.ln2_gain.value.row(0).transpose(),
                               blk.ln2_bias.value.row(0).transpose());
        Matrix f = ((h2 * blk.ffn_w1.value).rowwise() + blk.ffn_b1.value.row(0))
                       .cwiseMax(0.0);
        x += (f * blk.ffn_w2.value).rowwise() + blk.ffn_b2.value.row(0);
    }
    return maps;
}

std::vector<int> Model::predict_topk(const std::vector<int>& window, int k,
                                     bool exclude_seen) const {
    if (k > cfg.catalog) {
        std::cerr << "warning: predict_topk k=" << k << " clamped to catalog size "
                  << cfg.catalog << "\n";
        k = cfg.catalog;
    }
    const Matrix logits = forward_logits(window);
    const Eigen::RowVectorXd last = logits.row(cfg.window - 1);
    std::vector<int> items;
    items.reserve(cfg.catalog);
    for (int i = 0; i < cfg.catalog; ++i) items.push_back(i);
    if (exclude_seen) {
        std::vector<bool> seen(cfg.catalog, false);
        for (int it : window)
            if (it >= 0 && it < cfg.catalog) seen[it] = true;
        std::erase_if(items, [&](int i) { return seen[i]; });
    }
    std::sort(items.begin(), items.end(), [&](int a, int b) {
        if (last(a) != last(b)) return last(a) > last(b);
        return a < b;
    });
    if (static_cast<int>(items.size()) > k) items.resize(k);
    return items;
}

double ce_loss(const Matrix& logits, const std::vector<int>& targets) {
    if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
        throw std::invalid_argument("ce_loss: one target per row required");
    double loss = 0.0;
    int n = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (targets[i] < 0) continue;
        const double m = logits.row(i).maxCoeff();
        const double z = (logits.row(i).array() - m).exp().sum();
        loss += std::log(z) + m - logits(i, targets[i]);
        ++n;
    }
    return n > 0 ? loss / n : 0.0;
}

void save_checkpoint(const Model& model, const std::string& prefix) {
    std::ofstream manifest(prefix + ".manifest");
    if (!manifest) throw std::runtime_error("cannot write " + prefix + ".manifest");
    std::ofstream payload(prefix + ".bin", std::ios::binary);
    if (!payload) throw std::runtime_error("cannot write " + prefix + ".bin");

    manifest << "poskern-checkpoint 1\n";
    manifest << "config " << model.cfg.to_json() << "\n";
    long offset = 0;
    for (const Parameter* p : model.parameters()) {
        manifest << "param " << p->name << " " << p->value.rows() << " "
                 << p->value.cols() << " " << offset << "\n";
        // row-major on disk regardless of Eigen's storage order
        for (Eigen::Index i = 0; i < p->value.rows(); ++i)
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
                const double v = p->value(i, j);
                payload.write(reinterpret_cast<const char*>(&v), sizeof(double));
            }
        offset += p->value.size();
    }
    manifest << "end\n";
}

Model load_checkpoint(const std::string& prefix) {
    std::ifstream manifest(prefix + ".manifest");
    if (!manifest) throw std::runtime_error("cannot read " + prefix + ".manifest");
    std::string line;
    std::getline(manifest, line);
    if (line != "poskern-checkpoint 1")
        throw std::runtime_error("bad checkpoint magic in " + prefix + ".manifest");
    std::getline(manifest, line);
    if (line.rfind("config ", 0) != 0)
        throw std::runtime_error("missing config line in " + prefix + ".manifest");
    Model model = Model::init(ModelConfig::from_json(line.substr(7)));

    std::ifstream payload(prefix + ".bin", std::ios::binary);
    if (!payload) throw std::runtime_error("cannot read " + prefix + ".bin");
    auto params = model.parameters();
    size_t idx = 0;
    while (std::getline(manifest, line)) {
        if (line == "end") break;
        std::istringstream ss(line);
        std::string tag, name;
        long rows, cols, offset;
        ss >> tag >> name >> rows >> cols >> offset;
        if (tag != "param" || idx >= params.size() || params[idx]->name != name ||
            params[idx]->value.rows() != rows || params[idx]->value.cols() != cols)
            throw std::runtime_error("checkpoint/config mismatch at parameter '" + name +
                                     "'");
        payload.seekg(offset * static_cast<long>(sizeof(double)));
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) {
                double v;
                payload.read(reinterpret_cast<char*>(&v), sizeof(double));
                params[idx]->value(i, j) = v;
            }
        if (!payload) throw std::runtime_error("truncated payload in " + prefix + ".bin");
        ++idx;
    }
    if (idx != params.size())
        throw std::runtime_error("checkpoint is missing parameters");
    return model;
}

}  // namespace poskern
