#include "poskern/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace poskern {

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

long long parse_ll(const std::string& s, const std::string& what, size_t line_no) {
    try {
        size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line_no) + ": cannot parse " +
                                 what + " from '" + s + "'");
    }
}
}  // namespace

std::vector<Interaction> load_interactions(const std::string& path, const CsvFormat& fmt) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file, expected header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    int ui = -1, ii = -1, ti = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == fmt.user_col) ui = static_cast<int>(i);
        if (header[i] == fmt.item_col) ii = static_cast<int>(i);
        if (header[i] == fmt.time_col) ti = static_cast<int>(i);
    }
    if (ui < 0 || ii < 0 || ti < 0)
        throw std::runtime_error(path + ": header is missing one of columns '" +
                                 fmt.user_col + "', '" + fmt.item_col + "', '" +
                                 fmt.time_col + "'");
    std::vector<Interaction> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        const size_t need = static_cast<size_t>(std::max({ui, ii, ti})) + 1;
        if (fields.size() < need)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": expected at least " + std::to_string(need) +
                                     " fields, got " + std::to_string(fields.size()));
        Interaction r;
        r.user = parse_ll(fields[ui], "user", line_no);
        r.item = parse_ll(fields[ii], "item", line_no);
        r.timestamp = parse_ll(fields[ti], "timestamp", line_no);
        if (r.timestamp < 0)
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": negative timestamp");
        rows.push_back(r);
    }
    return rows;
}

void save_interactions(const std::string& path, const std::vector<Interaction>& rows,
                       const CsvFormat& fmt) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << fmt.user_col << "," << fmt.item_col << "," << fmt.time_col << "\n";
    for (const auto& r : rows)
        out << r.user << "," << r.item << "," << r.timestamp << "\n";
}

std::vector<Interaction> five_core_filter(std::vector<Interaction> rows, int min_count) {
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<long long, int> per_user;
        for (const auto& r : rows) ++per_user[r.user];
        const size_t before_users = rows.size();
        std::erase_if(rows, [&](const Interaction& r) { return per_user[r.user] < min_count; });
        if (rows.size() != before_users) changed = true;

        std::unordered_map<long long, int> per_item;
        for (const auto& r : rows) ++per_item[r.item];
        const size_t before_items = rows.size();
        std::erase_if(rows, [&](const Interaction& r) { return per_item[r.item] < min_count; });
        if (rows.size() != before_items) changed = true;
    }
    return rows;
}

SplitDataset temporal_split(const std::vector<Interaction>& rows, double p1, double p2) {
    if (rows.empty()) throw std::invalid_argument("temporal_split: empty input");
    if (!(p1 > 0.0 && p1 <= p2 && p2 <= 1.0))
        throw std::invalid_argument("temporal_split: need 0 < p1 <= p2 <= 1");

    SplitDataset out;
    for (const auto& r : rows) {
        if (out.user_map.emplace(r.user, out.n_users).second) ++out.n_users;
        if (out.item_map.emplace(r.item, out.n_items).second) ++out.n_items;
    }
    std::vector<long long> ts;
    ts.reserve(rows.size());
    for (const auto& r : rows) ts.push_back(r.timestamp);
    std::sort(ts.begin(), ts.end());
    const auto nearest_rank = [&](double p) {
        const size_t rank = static_cast<size_t>(
            std::ceil(p * static_cast<double>(ts.size())));
        return ts[std::max<size_t>(rank, 1) - 1];
    };
    out.boundary1 = nearest_rank(p1);
    out.boundary2 = nearest_rank(p2);

    for (const auto& r : rows) {
        Interaction m{out.user_map.at(r.user), out.item_map.at(r.item), r.timestamp};
        if (r.timestamp < out.boundary1)
            out.train.push_back(m);
        else if (r.timestamp < out.boundary2)
            out.valid.push_back(m);
        else
            out.test.push_back(m);
    }
    if (out.train.empty())
        std::cerr << "warning: temporal_split produced an empty train slice "
                     "(degenerate timestamp distribution)\n";
    return out;
}

std::map<int, std::vector<int>> user_sequences(const std::vector<Interaction>& rows) {
    std::map<int, std::vector<std::pair<long long, int>>> tmp;
    for (const auto& r : rows)
        tmp[static_cast<int>(r.user)].emplace_back(r.timestamp, static_cast<int>(r.item));
    std::map<int, std::vector<int>> out;
    for (auto& [u, seq] : tmp) {
        std::stable_sort(seq.begin(), seq.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& items = out[u];
        items.reserve(seq.size());
        for (const auto& [t, i] : seq) items.push_back(i);
    }
    return out;
}

namespace {
// SASRec-style window over the most recent min(len, K+1) items: the
// input holds all but the newest of them, left-padded to K, and the
// target at each input position is its successor. A length-1 sequence
// yields [PAD..PAD, item] with no supervised positions.
Window window_from_sequence(int user, const std::vector<int>& seq, int k, int pad) {
    Window w;
    w.user = user;
    w.input.assign(k, pad);
    w.targets.assign(k, -1);
    const int len = static_cast<int>(seq.size());
    if (len == 1) {
        w.input[k - 1] = seq[0];
        return w;
    }
    const int m = std::min(len, k + 1);  // items participating in the window
    const int n_in = m - 1;
    for (int i = 0; i < n_in; ++i) {
        const int seq_idx = len - m + i;
        const int pos = k - n_in + i;
        w.input[pos] = seq[seq_idx];
        w.targets[pos] = seq[seq_idx + 1];
    }
    return w;
}
}  // namespace

std::vector<Window> make_windows(const SplitDataset& split, int k, WindowMode mode) {
    if (k < 1) throw std::invalid_argument("make_windows: K must be >= 1");
    const int pad = split.n_items;
    std::vector<Window> out;
    for (const auto& [user, seq] : user_sequences(split.train)) {
        if (mode == WindowMode::Recent) {
            out.push_back(window_from_sequence(user, seq, k, pad));
        } else {
            for (size_t e = 2; e <= seq.size(); ++e) {
                std::vector<int> prefix(seq.begin(), seq.begin() + static_cast<long>(e));
                out.push_back(window_from_sequence(user, prefix, k, pad));
            }
            if (seq.size() < 2) out.push_back(window_from_sequence(user, seq, k, pad));
        }
    }
    return out;
}

std::vector<Interaction> synth_generate(const SyntheticSpec& spec) {
    if (spec.n_users < 1 || spec.n_items < 1 || spec.seq_len < 1)
        throw std::invalid_argument("synth_generate: sizes must be positive");
    if (spec.chain_len < 1 || spec.noise_prob < 0.0 || spec.noise_prob > 1.0)
        throw std::invalid_argument("synth_generate: invalid chain_len or noise_prob");

    // item layout: [chain pool][periodic pool][free tail shared with noise]
    const int n_chains = std::max(1, (spec.n_items * 6 / 10) / spec.chain_len);
    const int n_chain_items = n_chains * spec.chain_len;
    const int n_periodic = std::max(1, spec.n_items / 10);
    if (n_chain_items + n_periodic > spec.n_items)
        throw std::invalid_argument(
            "synth_generate: item pools exceed n_items (need at least " +
            std::to_string(n_chain_items + n_periodic) + " items)");

    std::vector<Interaction> rows;
    rows.reserve(static_cast<size_t>(spec.n_users) * spec.seq_len);
    for (int u = 0; u < spec.n_users; ++u) {
        std::seed_seq seq{static_cast<std::uint64_t>(spec.seed),
                          static_cast<std::uint64_t>(u) + 1};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<int> any_item(0, spec.n_items - 1);
        std::uniform_int_distribution<int> any_chain(0, n_chains - 1);
        std::uniform_int_distribution<int> jitter(0, 2);

        const int periodic_item =
            n_chain_items + std::uniform_int_distribution<int>(0, n_periodic - 1)(rng);
        // per-user phase so the recurrence is only observable as a
        // relative offset, never as a fixed absolute position
        const int phase =
            spec.period > 0
                ? std::uniform_int_distribution<int>(0, spec.period - 1)(rng)
                : 0;
        double center = any_chain(rng);
        int chain_id = -1, chain_pos = 0;

        for (int t = 0; t < spec.seq_len; ++t) {
            int item;
            if (unit(rng) < spec.noise_prob) {
                item = any_item(rng);
            } else if (spec.period > 0 && t % spec.period == phase) {
                item = periodic_item;
            } else if (chain_pos > 0 && chain_pos < spec.chain_len) {
                item = chain_id * spec.chain_len + chain_pos;
                ++chain_pos;
            } else {
                chain_id = (static_cast<int>(center) + jitter(rng)) % n_chains;
                chain_pos = 1;
                item = chain_id * spec.chain_len;
                center = std::fmod(center + spec.drift_rate, static_cast<double>(n_chains));
            }
            rows.push_back({u, item, t});
        }
    }
    return rows;
}

DatasetStats dataset_stats(const std::vector<Interaction>& rows) {
    DatasetStats s;
    std::unordered_set<long long> users, items;
    for (const auto& r : rows) {
        users.insert(r.user);
        items.insert(r.item);
    }
    s.users = static_cast<long long>(users.size());
    s.items = static_cast<long long>(items.size());
    s.events = static_cast<long long>(rows.size());
    if (s.users > 0) s.avg_seq_len = static_cast<double>(s.events) / s.users;
    if (s.users > 0 && s.items > 0)
        s.density = static_cast<double>(s.events) /
                    (static_cast<double>(s.users) * static_cast<double>(s.items));
    return s;
}

}  // namespace poskern
