// Command-line front end for the vertical-slash sparse prefill pipeline:
//   gen -> aggregate -> train -> select -> attend / recall, plus the closed-form
// slash-profile check (theory) and the ablation bench.

#include <algorithm>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vsprefill/vsprefill.hpp"

namespace fs = std::filesystem;
using namespace vsp;

namespace {

// Every config-file key doubles as a flag; flags override the file, the file
// overrides defaults.
class ConfigFlags {
public:
    void attach(CLI::App* app) {
        app_ = app;
        app->add_option("--config", config_path_,
                        "key=value config file, applied before any --key flags");
        const Config defaults;
        for (const std::string& key : config_keys()) {
            auto& slot = values_[key];
            app->add_option("--" + key, slot,
                            "config key (default " + config_value(defaults, key) + ")");
        }
    }

    Config resolve() const {
        Config cfg;
        if (!config_path_.empty()) cfg = load_config_file(config_path_);
        for (const auto& [key, value] : values_) {
            if (app_->count("--" + key) > 0) apply_config_entry(cfg, key, value);
        }
        return cfg;
    }

private:
    CLI::App* app_ = nullptr;
    std::string config_path_;
    std::map<std::string, std::string> values_;
};

std::string sample_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%03zu", index);
    return buf;
}

// --- gen -------------------------------------------------------------------

void run_gen(const Config& cfg, const std::string& out_dir, std::size_t samples) {
    const PlantSpec spec = default_plant_spec(cfg.n, cfg.d, cfg.seed);
    const std::vector<GeneratedSample> batch = generate_batch(spec, samples, cfg.block);
    fs::create_directories(out_dir);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const GeneratedSample& g = batch[i];
        const fs::path dir = fs::path(out_dir) / sample_dir_name(i);
        fs::create_directories(dir);
        write_tensor((dir / "q.vstn").string(), g.q);
        write_tensor((dir / "k.vstn").string(), g.k);
        write_tensor((dir / "v.vstn").string(), g.v);
        write_tensor((dir / "target_v.vstn").string(), g.targets.vertical);
        write_tensor((dir / "target_s.vstn").string(), g.targets.slash);
        for (const std::string& w : g.warnings) {
            std::fprintf(stderr, "vsprefill gen: %s (sample %zu)\n", w.c_str(), i);
        }
    }
    std::printf("wrote %zu samples (n=%zu d=%zu seed=%" PRIu64 ") under %s\n", batch.size(),
                cfg.n, cfg.d, cfg.seed, out_dir.c_str());
}

// --- aggregate -------------------------------------------------------------

void print_top_scores(const char* label, const std::vector<double>& scores, std::size_t top) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&scores](std::size_t x, std::size_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return x < y;
    });
    std::printf("%-10s %8s %12s\n", label, "index", "mass");
    for (std::size_t r = 0; r < std::min(top, order.size()); ++r) {
        std::printf("%-10s %8zu %12.6f\n", "", order[r], scores[order[r]]);
    }
}

void run_aggregate(const Config& cfg, const std::string& q_path, const std::string& k_path,
                   const std::string& v_path, const std::string& out_v,
                   const std::string& out_s) {
    const AttentionInputs in(read_tensor(q_path), read_tensor(k_path), read_tensor(v_path));
    const VSScores scores = aggregate_streaming(in, cfg.block);
    print_top_scores("vertical", scores.vertical, 10);
    print_top_scores("slash", scores.slash, 10);
    if (!out_v.empty()) write_tensor(out_v, scores.vertical);
    if (!out_s.empty()) write_tensor(out_s, scores.slash);
}

// --- train -----------------------------------------------------------------

std::vector<TrainSample> load_dataset(const std::string& data_dir) {
    std::vector<fs::path> dirs;
    for (const fs::directory_entry& e : fs::directory_iterator(data_dir)) {
        if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<TrainSample> dataset;
    for (const fs::path& dir : dirs) {
        TrainSample s;
        s.k = read_tensor((dir / "k.vstn").string());
        s.v = read_tensor((dir / "v.vstn").string());
        s.target_v = read_vector((dir / "target_v.vstn").string());
        s.target_s = read_vector((dir / "target_s.vstn").string());
        const fs::path q_path = dir / "q.vstn";
        if (fs::exists(q_path)) s.q = read_tensor(q_path.string());
        dataset.push_back(std::move(s));
    }
    if (dataset.empty()) throw std::runtime_error("no sample directories under " + data_dir);
    return dataset;
}

void run_train(const Config& cfg, const std::string& data_dir, const std::string& out_ckpt,
               const std::string& losses_path) {
    const std::vector<TrainSample> dataset = load_dataset(data_dir);
    const TrainConfig tc = to_train_config(cfg);
    const TrainResult result = train(dataset, tc, cfg.d_h);

    std::printf("%8s %12s %12s\n", "step", "lr", "loss");
    const std::size_t stride = std::max<std::size_t>(1, cfg.steps / 10);
    for (std::size_t s = 0; s < result.losses.size(); s += stride) {
        std::printf("%8zu %12.6e %12.6f\n", s, learning_rate(s, tc), result.losses[s]);
    }
    if (!result.losses.empty()) {
        const std::size_t last = result.losses.size() - 1;
        std::printf("%8zu %12.6e %12.6f\n", last, learning_rate(last, tc), result.losses[last]);
    }
    save_checkpoint(result.params, out_ckpt);
    if (!losses_path.empty()) write_tensor(losses_path, result.losses);
    std::printf("checkpoint written to %s\n", out_ckpt.c_str());
}

// --- select ----------------------------------------------------------------

void run_select(const Config& cfg, const std::string& ckpt_path, const std::string& k_path,
                const std::string& v_path, const std::string& out_path,
                std::size_t max_budget) {
    const IndexerParams params = load_checkpoint(ckpt_path);
    const Matrix k = read_tensor(k_path);
    const Matrix v = read_tensor(v_path);
    const IndexerActivations acts =
        indexer_forward(params, k, v, parse_slash_mapping(cfg.slash_mapping));
    VSScores scores;
    scores.vertical = acts.pred_v;
    scores.slash = acts.pred_s;
    scores.normalized = true;
    BudgetConfig bc = to_budget_config(cfg);
    if (max_budget > 0) bc.max_budget = max_budget;
    const SelectedIndices sel = select_pattern(scores, bc);
    write_indices(out_path, sel);
    std::printf("selected k_v=%zu k_s=%zu (tau_v=%g tau_s=%g) -> %s\n", sel.k_v(), sel.k_s(),
                cfg.tau_v, cfg.tau_s, out_path.c_str());
}

// --- attend / recall --------------------------------------------------------

void run_attend(const Config& cfg, const std::string& q_path, const std::string& k_path,
                const std::string& v_path, const std::string& indices_path,
                const std::string& out_path) {
    const AttentionInputs in(read_tensor(q_path), read_tensor(k_path), read_tensor(v_path));
    const SelectedIndices sel = read_indices(indices_path);
    const AttentionOutput out = sparse_attention(in, sel.pattern(), cfg.block);
    write_tensor(out_path, out.o);
    std::printf("sparse attention output %zu x %zu -> %s\n", out.o.rows, out.o.cols,
                out_path.c_str());
}

void run_recall(const std::string& q_path, const std::string& k_path,
                const std::string& indices_path) {
    const Matrix a = attention_matrix(read_tensor(q_path), read_tensor(k_path));
    const SelectedIndices sel = read_indices(indices_path);
    std::printf("%.6f\n", attention_recall(a, sel.pattern()));
}

// --- theory ----------------------------------------------------------------

int run_theory(std::size_t head_dim, std::size_t offsets, std::size_t samples,
               std::uint64_t seed, double rope_base, double variance, bool independent) {
    const RopeConfig rope(head_dim, rope_base);
    GaussianQKModel model{{}, {}, Covariance::isotropic(variance, head_dim),
                          Covariance::isotropic(variance, head_dim), rope};
    Rng root(seed);
    Rng q_rng = root.derive(1);
    Rng k_rng = root.derive(2);
    model.mu_q.resize(head_dim);
    model.mu_k.resize(head_dim);
    for (std::size_t i = 0; i < head_dim; ++i) model.mu_q[i] = q_rng.next_normal();
    for (std::size_t i = 0; i < head_dim; ++i) model.mu_k[i] = k_rng.next_normal();

    const SlashSpectrum spec = slash_spectrum(model);
    Rng mc_rng = root.derive(3);
    const McProfile mc = monte_carlo_score(model, 0, static_cast<std::int64_t>(offsets), samples,
                                           mc_rng, independent);

    std::printf("%8s %14s %14s %12s %8s %6s\n", "delta", "closed", "mc_mean", "stderr", "sigmas",
                "band");
    std::size_t failures = 0;
    double max_form_gap = 0.0;
    for (std::size_t i = 0; i < mc.offsets.size(); ++i) {
        const double delta = static_cast<double>(mc.offsets[i]);
        const double closed = expected_score(spec, delta, rope);
        const double phase = expected_score_phase(spec, delta, rope);
        max_form_gap = std::max(max_form_gap, std::fabs(closed - phase));
        const double se = mc.stderr_[i];
        const double sigmas = se > 0.0 ? std::fabs(mc.mean[i] - closed) / se : 0.0;
        const bool pass = sigmas <= 4.0;
        if (!pass) ++failures;
        std::printf("%8" PRId64 " %14.6f %14.6f %12.6f %8.2f %6s\n", mc.offsets[i], closed,
                    mc.mean[i], se, sigmas, pass ? "pass" : "FAIL");
    }
    std::printf("offsets outside 4 sigma: %zu / %zu; direct vs amplitude-phase max gap: %.3e\n",
                failures, mc.offsets.size(), max_form_gap);
    if (failures > 0) {
        std::fprintf(stderr, "vsprefill theory: %zu offsets outside the 4 sigma band\n", failures);
        return 1;
    }
    if (max_form_gap > 1e-12) {
        std::fprintf(stderr, "vsprefill theory: closed forms disagree beyond 1e-12\n");
        return 1;
    }
    return 0;
}

// --- bench -----------------------------------------------------------------

int run_bench(const BenchSettings& s, const std::string& ablation) {
    if (ablation == "sparsity") {
        std::printf("sparsity\trandom\tuniform_random\tsampling\ttrained\n");
        const std::vector<SparsityBenchRow> rows = bench_sparsity(s);
        for (const SparsityBenchRow& r : rows) {
            const double uniform =
                uniform_random_recall(s.n, 1.0 - r.sparsity, 200, s.seed + 17);
            std::printf("%.2f\t%.4f\t%.4f\t%.4f\t%.4f\n", r.sparsity, r.random_recall, uniform,
                        r.sampling_recall, r.trained_recall);
        }
        return 0;
    }
    if (ablation == "loss") {
        std::printf("loss\trecall\n");
        for (const LossBenchRow& r : bench_loss(s)) {
            std::printf("%s\t%.4f\n", r.name.c_str(), r.recall);
        }
        return 0;
    }
    if (ablation == "inputs") {
        std::printf("inputs\teval_loss\n");
        for (const InputsBenchRow& r : bench_inputs(s)) {
            std::printf("%s\t%.6f\n", r.name.c_str(), r.eval_loss);
        }
        return 0;
    }
    throw std::runtime_error("unknown ablation '" + ablation + "' (want sparsity, loss, inputs)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vertical-slash sparse attention pipeline"};
    app.require_subcommand(1);
    int exit_code = 0;

    // gen
    auto* gen = app.add_subcommand("gen", "generate a planted synthetic dataset");
    ConfigFlags gen_cfg;
    gen_cfg.attach(gen);
    std::string gen_out;
    std::size_t gen_samples = 4;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--samples", gen_samples, "number of samples (default 4)");
    gen->callback([&] { run_gen(gen_cfg.resolve(), gen_out, gen_samples); });

    // aggregate
    auto* agg = app.add_subcommand("aggregate", "stream attention mass into vertical/slash profiles");
    ConfigFlags agg_cfg;
    agg_cfg.attach(agg);
    std::string agg_q, agg_k, agg_v, agg_out_v, agg_out_s;
    agg->add_option("--q", agg_q, "query tensor (.vstn)")->required();
    agg->add_option("--k", agg_k, "key tensor (.vstn)")->required();
    agg->add_option("--v", agg_v, "value tensor (.vstn)")->required();
    agg->add_option("--out-v", agg_out_v, "write vertical profile tensor here");
    agg->add_option("--out-s", agg_out_s, "write slash profile tensor here");
    agg->callback(
        [&] { run_aggregate(agg_cfg.resolve(), agg_q, agg_k, agg_v, agg_out_v, agg_out_s); });

    // train
    auto* train_cmd = app.add_subcommand("train", "distill aggregate profiles into the indexer");
    ConfigFlags train_cfg;
    train_cfg.attach(train_cmd);
    std::string train_data, train_out, train_losses;
    train_cmd->add_option("--data", train_data, "dataset directory from gen")->required();
    train_cmd->add_option("--out", train_out, "checkpoint output path (.vsck)")->required();
    train_cmd->add_option("--losses", train_losses, "write per-step loss curve tensor here");
    train_cmd->callback(
        [&] { run_train(train_cfg.resolve(), train_data, train_out, train_losses); });

    // select
    auto* select_cmd = app.add_subcommand("select", "predict scores and pick a sparse pattern");
    ConfigFlags select_cfg;
    select_cfg.attach(select_cmd);
    std::string sel_ckpt, sel_k, sel_v, sel_out;
    std::size_t sel_max_budget = 0;
    select_cmd->add_option("--checkpoint", sel_ckpt, "indexer checkpoint (.vsck)")->required();
    select_cmd->add_option("--k", sel_k, "key tensor (.vstn)")->required();
    select_cmd->add_option("--v", sel_v, "value tensor (.vstn)")->required();
    select_cmd->add_option("--out", sel_out, "selected-indices text output")->required();
    select_cmd->add_option("--max-budget", sel_max_budget, "optional per-direction budget cap");
    select_cmd->callback([&] {
        run_select(select_cfg.resolve(), sel_ckpt, sel_k, sel_v, sel_out, sel_max_budget);
    });

    // attend
    auto* attend_cmd = app.add_subcommand("attend", "run sparse attention over a selected pattern");
    ConfigFlags attend_cfg;
    attend_cfg.attach(attend_cmd);
    std::string att_q, att_k, att_v, att_idx, att_out;
    attend_cmd->add_option("--q", att_q, "query tensor (.vstn)")->required();
    attend_cmd->add_option("--k", att_k, "key tensor (.vstn)")->required();
    attend_cmd->add_option("--v", att_v, "value tensor (.vstn)")->required();
    attend_cmd->add_option("--indices", att_idx, "selected-indices text file")->required();
    attend_cmd->add_option("--out", att_out, "output tensor path (.vstn)")->required();
    attend_cmd->callback([&] {
        run_attend(attend_cfg.resolve(), att_q, att_k, att_v, att_idx, att_out);
    });

    // recall
    auto* recall_cmd = app.add_subcommand("recall", "attention mass covered by a pattern");
    std::string rec_q, rec_k, rec_idx;
    recall_cmd->add_option("--q", rec_q, "query tensor (.vstn)")->required();
    recall_cmd->add_option("--k", rec_k, "key tensor (.vstn)")->required();
    recall_cmd->add_option("--indices", rec_idx, "selected-indices text file")->required();
    recall_cmd->callback([&] { run_recall(rec_q, rec_k, rec_idx); });

    // theory
    auto* theory_cmd =
        app.add_subcommand("theory", "closed-form slash profile vs Monte Carlo check");
    std::size_t th_dim = 8, th_offsets = 64, th_samples = 200000;
    std::uint64_t th_seed = 1;
    double th_base = 10000.0, th_variance = 1.0;
    bool th_independent = false;
    theory_cmd->add_option("--D", th_dim, "head dimension (default 8)");
    theory_cmd->add_option("--offsets", th_offsets, "offset range [0, N) (default 64)");
    theory_cmd->add_option("--samples", th_samples, "Monte Carlo sample count (default 200000)");
    theory_cmd->add_option("--seed", th_seed, "rng seed (default 1)");
    theory_cmd->add_option("--base", th_base, "rotary base (default 10000)");
    theory_cmd->add_option("--variance", th_variance, "isotropic q/k variance (default 1)");
    theory_cmd->add_flag("--independent", th_independent,
                         "fresh draws per offset instead of common random numbers");
    theory_cmd->callback([&] {
        exit_code = run_theory(th_dim, th_offsets, th_samples, th_seed, th_base, th_variance,
                               th_independent);
    });

    // bench — carries its own calibrated defaults rather than the pipeline's,
    // so the tables come out at the suite's intended scale unless overridden
    auto* bench_cmd = app.add_subcommand("bench", "ablation tables on the synthetic suite");
    BenchSettings bench_settings;
    bench_cmd->add_option("--n", bench_settings.n, "sequence length (default 256)");
    bench_cmd->add_option("--d", bench_settings.d, "head dimension (default 16)");
    bench_cmd->add_option("--d_h", bench_settings.d_h, "indexer hidden width (default 64)");
    bench_cmd->add_option("--block", bench_settings.block, "streaming block size (default 32)");
    bench_cmd->add_option("--seed", bench_settings.seed, "base seed (default 1)");
    bench_cmd->add_option("--train-samples", bench_settings.train_samples,
                          "distillation instances per seed (default 48)");
    bench_cmd->add_option("--eval-samples", bench_settings.eval_samples,
                          "held-out instances per seed (default 8)");
    std::string bench_ablation;
    bench_cmd->add_option("--ablation", bench_ablation, "one of: sparsity, loss, inputs")
        ->required();
    bench_cmd->callback([&] { exit_code = run_bench(bench_settings, bench_ablation); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "vsprefill: %s\n", e.what());
        return 1;
    }
    return exit_code;
}
