#include "poskern/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

namespace poskern {

double ndcg_at_k(const std::vector<EvalRecord>& records, int k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    if (records.empty()) {
        std::cerr << "warning: ndcg_at_k over zero records, returning 0\n";
        return 0.0;
    }
    double sum = 0.0;
    for (const auto& r : records)
        if (r.rank >= 1 && r.rank <= k) sum += 1.0 / std::log2(r.rank + 1.0);
    return sum / static_cast<double>(records.size());
}

double hr_at_k(const std::vector<EvalRecord>& records, int k) {
    if (k < 1) throw std::invalid_argument("hr_at_k: k must be >= 1");
    if (records.empty()) {
        std::cerr << "warning: hr_at_k over zero records, returning 0\n";
        return 0.0;
    }
    long long hits = 0;
    for (const auto& r : records)
        if (r.rank >= 1 && r.rank <= k) ++hits;
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

double coverage_at_k(const std::vector<EvalRecord>& records, int k, int n_items) {
    if (n_items <= 0) throw std::invalid_argument("coverage_at_k: N must be positive");
    if (records.empty()) {
        std::cerr << "warning: coverage_at_k over zero records, returning 0\n";
        return 0.0;
    }
    std::set<int> seen;
    for (const auto& r : records)
        for (int i = 0; i < std::min<int>(k, static_cast<int>(r.top_k.size())); ++i)
            seen.insert(r.top_k[i]);
    return static_cast<double>(seen.size()) / static_cast<double>(n_items);
}

namespace {
std::vector<int> history_window(const std::vector<int>& hist, int k, int pad) {
    std::vector<int> w(k, pad);
    const int m = std::min<int>(k, static_cast<int>(hist.size()));
    for (int i = 0; i < m; ++i) w[k - m + i] = hist[hist.size() - m + i];
    return w;
}
}  // namespace

EvalResult successive_evaluate(const Model& model,
                               const std::vector<Interaction>& history_slice,
                               const std::vector<Interaction>& phase_slice,
                               int n_items, const EvalOptions& opt) {
    if (n_items != model.cfg.catalog)
        throw std::invalid_argument("successive_evaluate: catalog mismatch");
    EvalResult res;
    auto histories = user_sequences(history_slice);
    const auto phases = user_sequences(phase_slice);
    const int k = opt.k;
    const int kk = model.cfg.window;
    const int pad = model.cfg.pad_index();

    for (const auto& [user, events] : phases) {
        auto& hist = histories[user];  // empty when the user has no prior history
        int step = 0;
        for (int target : events) {
            const std::vector<int> window = history_window(hist, kk, pad);
            const Matrix logits = model.forward_logits(window);
            const Eigen::RowVectorXd last = logits.row(kk - 1);

            std::vector<bool> excluded(n_items, false);
            if (opt.exclude_seen)
                for (int it : window)
                    if (it >= 0 && it < n_items) excluded[it] = true;

            EvalRecord rec;
            rec.user = user;
            rec.step = step++;
            rec.target = target;
            if (!excluded[target]) {
                int better = 0;
                for (int i = 0; i < n_items; ++i) {
                    if (i == target || excluded[i]) continue;
                    if (last(i) > last(target) || (last(i) == last(target) && i < target))
                        ++better;
                }
                const int rank = better + 1;
                rec.rank = rank <= k ? rank : 0;
            }
            std::vector<int> ids;
            ids.reserve(n_items);
            for (int i = 0; i < n_items; ++i)
                if (!excluded[i]) ids.push_back(i);
            const int take = std::min<int>(k, static_cast<int>(ids.size()));
            std::partial_sort(ids.begin(), ids.begin() + take, ids.end(),
                              [&](int a, int b) {
                                  if (last(a) != last(b)) return last(a) > last(b);
                                  return a < b;
                              });
            ids.resize(take);
            rec.top_k = std::move(ids);
            res.records.push_back(std::move(rec));
            hist.push_back(target);
        }
    }
    res.n_records = static_cast<long long>(res.records.size());
    res.ndcg = ndcg_at_k(res.records, k);
    res.hr = hr_at_k(res.records, k);
    res.cov = coverage_at_k(res.records, k, n_items);
    return res;
}

EvalResult successive_evaluate(const Model& model, const SplitDataset& split,
                               const std::string& phase, const EvalOptions& opt) {
    if (phase == "valid")
        return successive_evaluate(model, split.train, split.valid, split.n_items, opt);
    if (phase == "test") {
        std::vector<Interaction> known = split.train;
        known.insert(known.end(), split.valid.begin(), split.valid.end());
        return successive_evaluate(model, known, split.test, split.n_items, opt);
    }
    throw std::invalid_argument("successive_evaluate: phase must be 'valid' or 'test'");
}

}  // namespace poskern
