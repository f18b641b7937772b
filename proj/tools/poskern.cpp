// Command-line entry point: dataset prep, synthetic generation,
// training, evaluation, algebraic verification and figure-data dumps.
//
// Exit codes: 0 ok, 1 usage, 2 data error, 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "poskern/data.hpp"
#include "poskern/eval.hpp"
#include "poskern/io.hpp"
#include "poskern/model.hpp"
#include "poskern/train.hpp"
#include "poskern/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace poskern;

namespace {

std::string run_root() {
    const char* env = std::getenv("POSKERN_RUN_ROOT");
    return env ? std::string(env) : std::string(".");
}

SplitDataset load_prepped(const std::string& dir) {
    SplitDataset split;
    split.train = load_interactions(dir + "/train.csv");
    split.valid = load_interactions(dir + "/valid.csv");
    split.test = load_interactions(dir + "/test.csv");
    const json meta = json::parse(read_text_file(dir + "/meta.json"));
    split.n_items = meta.at("n_items").get<int>();
    split.n_users = meta.at("n_users").get<int>();
    return split;
}

void parse_run_config(const std::string& text, int n_items, ModelConfig& mc,
                      TrainConfig& tc) {
    const json j = json::parse(text);
    mc.catalog = n_items;
    mc.window = j.value("window", 16);
    mc.dim = j.value("dim", 32);
    mc.blocks = j.value("blocks", 2);
    mc.scheme = parse_scheme(j.value("scheme", std::string("kernel")));
    mc.kernel = KernelMode::parse(j.value("kernel_structure", std::string("T-F")),
                                  j.value("kernel_sharing", std::string("default")));
    mc.dropout = j.value("dropout", 0.2);
    mc.seed = j.value("seed", std::uint64_t{0});
    mc.rope_base = j.value("rope_base", 10000.0);
    mc.validate();

    tc.lr = j.value("lr", 1e-3);
    tc.batch_size = j.value("batch_size", 128);
    tc.max_epochs = j.value("max_epochs", 300);
    tc.patience = j.value("patience", 10);
    tc.clip_norm = j.value("clip_norm", 5.0);
    tc.seed = j.value("seed", std::uint64_t{0});
    tc.window_mode = j.value("window_mode", std::string("recent")) == "all-suffixes"
                         ? WindowMode::AllSuffixes
                         : WindowMode::Recent;
    tc.validate();
}

int cmd_prep(const std::string& input, const std::string& out_dir, int k_core,
             double p1, double p2, const CsvFormat& fmt) {
    auto rows = load_interactions(input, fmt);
    if (rows.empty()) {
        std::cerr << "error: input has no interactions\n";
        return 2;
    }
    rows = five_core_filter(rows, k_core);
    if (rows.empty()) {
        std::cerr << "error: no interactions survive " << k_core << "-core filtering\n";
        return 2;
    }
    const SplitDataset split = temporal_split(rows, p1, p2);
    fs::create_directories(out_dir);
    save_interactions(out_dir + "/train.csv", split.train);
    save_interactions(out_dir + "/valid.csv", split.valid);
    save_interactions(out_dir + "/test.csv", split.test);

    const DatasetStats st = dataset_stats(rows);
    json stats{{"users", st.users},
               {"items", st.items},
               {"events", st.events},
               {"avg_seq_len", st.avg_seq_len},
               {"density", st.density}};
    std::ofstream(out_dir + "/stats.json") << stats.dump(2) << "\n";

    json meta{{"n_users", split.n_users},
              {"n_items", split.n_items},
              {"boundary1", split.boundary1},
              {"boundary2", split.boundary2},
              {"k_core", k_core},
              {"p1", p1},
              {"p2", p2}};
    meta["config_hash"] = fnv1a(meta.dump());
    std::ofstream(out_dir + "/meta.json") << meta.dump(2) << "\n";
    std::cout << stats.dump(2) << "\n";
    std::cout << "train/valid/test events: " << split.train.size() << "/"
              << split.valid.size() << "/" << split.test.size() << "\n";
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_csv) {
    const json j = json::parse(read_text_file(spec_path));
    SyntheticSpec spec;
    spec.n_users = j.value("n_users", spec.n_users);
    spec.n_items = j.value("n_items", spec.n_items);
    spec.seq_len = j.value("seq_len", spec.seq_len);
    spec.chain_len = j.value("chain_len", spec.chain_len);
    spec.period = j.value("period", spec.period);
    spec.drift_rate = j.value("drift_rate", spec.drift_rate);
    spec.noise_prob = j.value("noise_prob", spec.noise_prob);
    spec.seed = j.value("seed", spec.seed);
    const auto rows = synth_generate(spec);
    save_interactions(out_csv, rows);
    std::cout << "wrote " << rows.size() << " interactions to " << out_csv << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& run_dir) {
    const SplitDataset split = load_prepped(data_dir);
    const std::string cfg_text = read_text_file(config_path);
    ModelConfig mc;
    TrainConfig tc;
    parse_run_config(cfg_text, split.n_items, mc, tc);

    Model model = Model::init(mc);
    const TrainResult res = train(model, split, tc, run_dir);

    json meta{{"data_dir", data_dir},
              {"best_epoch", res.best_epoch},
              {"best_valid_ndcg10", res.best_ndcg},
              {"config_hash", fnv1a(mc.to_json() + tc.to_json())}};
    std::ofstream(run_dir + "/run.json") << meta.dump(2) << "\n";
    std::cout << "best epoch " << res.best_epoch << ", valid NDCG@10 " << res.best_ndcg
              << "\n";
    return 0;
}

int cmd_eval(const std::string& run_dir, const std::string& phase, int k,
             bool exclude_seen) {
    const json run = json::parse(read_text_file(run_dir + "/run.json"));
    const SplitDataset split = load_prepped(run.at("data_dir").get<std::string>());
    const Model model = load_checkpoint(run_dir + "/best");
    EvalOptions opt;
    opt.k = k;
    opt.exclude_seen = exclude_seen;
    const EvalResult res = successive_evaluate(model, split, phase, opt);
    json out{{"phase", phase},           {"k", k},
             {"ndcg", res.ndcg},         {"hr", res.hr},
             {"cov", res.cov},           {"n_records", res.n_records},
             {"exclude_seen", exclude_seen},
             {"config_hash", fnv1a(model.cfg.to_json())}};
    std::ofstream(run_dir + "/metrics.jsonl", std::ios::app) << out.dump() << "\n";
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_verify(std::uint64_t seed, bool as_json, const std::string& out_path) {
    const VerifyReport rep = run_all_checks(seed);
    const std::string body = as_json ? rep.json() : rep.text();
    if (!out_path.empty())
        std::ofstream(out_path) << body << "\n";
    std::cout << body << "\n";
    return rep.all_pass() ? 0 : 3;
}

int cmd_dump_kernel(const std::string& run_dir, const std::string& out_dir) {
    const Model model = load_checkpoint(run_dir + "/best");
    if (model.cfg.scheme != PositionalScheme::Kernel) {
        std::cerr << "error: run was not trained with the kernel scheme\n";
        return 2;
    }
    fs::create_directories(out_dir);
    for (int b = 0; b < model.cfg.blocks; ++b)
        write_matrix_csv(out_dir + "/U_layer" + std::to_string(b) + ".csv",
                         model.upper_factor(b));
    if (model.cfg.kernel.share_lower) {
        write_matrix_csv(out_dir + "/L.csv", model.lower_factor(0));
    } else {
        for (int b = 0; b < model.cfg.blocks; ++b)
            write_matrix_csv(out_dir + "/L_layer" + std::to_string(b) + ".csv",
                             model.lower_factor(b));
    }
    std::cout << "kernel factor CSVs written to " << out_dir << "\n";
    return 0;
}

int cmd_dump_attention(const std::string& run_dir, int user, const std::string& out_dir) {
    const json run = json::parse(read_text_file(run_dir + "/run.json"));
    const SplitDataset split = load_prepped(run.at("data_dir").get<std::string>());
    const Model model = load_checkpoint(run_dir + "/best");

    const auto seqs = user_sequences(split.train);
    const auto it = seqs.find(user);
    if (it == seqs.end()) {
        std::cerr << "error: user " << user << " has no training history\n";
        return 2;
    }
    const int k = model.cfg.window;
    std::vector<int> window(k, model.cfg.pad_index());
    const auto& seq = it->second;
    const int m = std::min<int>(k, static_cast<int>(seq.size()));
    for (int i = 0; i < m; ++i) window[k - m + i] = seq[seq.size() - m + i];

    fs::create_directories(out_dir);
    const auto maps = model.attention_maps(window);
    for (size_t b = 0; b < maps.size(); ++b)
        write_matrix_csv(out_dir + "/attention_block" + std::to_string(b) + ".csv",
                         maps[b]);
    std::cout << maps.size() << " attention maps written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"position-aware kernel attention for sequential recommendation"};
    app.require_subcommand(1);

    // prep
    auto* prep = app.add_subcommand("prep", "filter, split and remap an interaction CSV");
    std::string prep_input, prep_out;
    int k_core = 5;
    double p1 = 0.95, p2 = 0.97;
    CsvFormat fmt;
    prep->add_option("--input", prep_input, "interaction CSV")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--k-core", k_core, "minimum interactions per user/item");
    prep->add_option("--p1", p1, "train/valid timestamp quantile");
    prep->add_option("--p2", p2, "valid/test timestamp quantile");
    prep->add_option("--user-col", fmt.user_col, "user column name");
    prep->add_option("--item-col", fmt.item_col, "item column name");
    prep->add_option("--time-col", fmt.time_col, "timestamp column name");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic interaction CSV");
    std::string synth_spec, synth_out;
    synth->add_option("--spec", synth_spec, "JSON generator spec")->required();
    synth->add_option("--out", synth_out, "output CSV")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model on a prepped dataset");
    std::string train_data, train_config, train_out;
    train_cmd->add_option("--data", train_data, "prepped dataset directory")->required();
    train_cmd->add_option("--config", train_config, "JSON run config")->required();
    train_cmd->add_option("--out", train_out, "run directory")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "successive evaluation of a run");
    std::string eval_run, eval_phase = "test";
    int eval_k = 10;
    bool eval_excl = false;
    eval_cmd->add_option("--run", eval_run, "run directory")->required();
    eval_cmd->add_option("--phase", eval_phase, "valid or test");
    eval_cmd->add_option("--k", eval_k, "cutoff k");
    eval_cmd->add_flag("--exclude-seen", eval_excl, "filter items in the input window");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the algebraic oracle suite");
    std::uint64_t verify_seed = 0;
    bool verify_json = false;
    std::string verify_out;
    verify_cmd->add_option("--seed", verify_seed, "RNG seed");
    verify_cmd->add_flag("--json", verify_json, "emit JSON instead of text");
    verify_cmd->add_option("--out", verify_out, "also write the report to a file");

    // dump-kernel
    auto* dk = app.add_subcommand("dump-kernel", "write trained U/L factor CSVs");
    std::string dk_run, dk_out;
    dk->add_option("--run", dk_run, "run directory")->required();
    dk->add_option("--out", dk_out, "output directory")->required();

    // dump-attention
    auto* da = app.add_subcommand("dump-attention", "write per-block attention map CSVs");
    std::string da_run, da_out;
    int da_user = 0;
    da->add_option("--run", da_run, "run directory")->required();
    da->add_option("--user", da_user, "dense user id")->required();
    da->add_option("--out", da_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (prep->parsed()) return cmd_prep(prep_input, prep_out, k_core, p1, p2, fmt);
        if (synth->parsed()) return cmd_synth(synth_spec, synth_out);
        if (train_cmd->parsed()) {
            const std::string out = train_out.front() == '/'
                                        ? train_out
                                        : run_root() + "/" + train_out;
            return cmd_train(train_data, train_config, out);
        }
        if (eval_cmd->parsed()) return cmd_eval(eval_run, eval_phase, eval_k, eval_excl);
        if (verify_cmd->parsed()) return cmd_verify(verify_seed, verify_json, verify_out);
        if (dk->parsed()) return cmd_dump_kernel(dk_run, dk_out);
        if (da->parsed()) return cmd_dump_attention(da_run, da_user, da_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
