#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "trajvae/checkpoint.hpp"
#include "trajvae/evaluation.hpp"
#include "trajvae/fmt_util.hpp"
#include "trajvae/svg_plot.hpp"
#include "trajvae/synthdata.hpp"
#include "trajvae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json objective_config_json(const ObjectiveConfig& cfg) {
    return {{"objective", to_string(cfg.objective)},
            {"lambda", cfg.lambda},
            {"n_mc", cfg.n_mc},
            {"mi_sampling", to_string(cfg.mi_sampling)},
            {"composite_embedding", to_string(cfg.composite_embedding)},
            {"rollout_T", cfg.rollout_T}};
}

// ----- gen-data -----

struct GenDataArgs {
    std::string manifest_path;
    std::string out_dir;
    std::string preset = "diag_wiggle";
    std::int64_t seed = -1;  // <0: keep manifest seed
};

int cmd_gen_data(const GenDataArgs& args) {
    DatasetManifest manifest = args.manifest_path.empty()
                                   ? default_manifest(args.preset)
                                   : manifest_from_json(read_text(args.manifest_path));
    if (args.seed >= 0) manifest.seed = static_cast<std::uint64_t>(args.seed);
    manifest.validate();
    Dataset ds = generate_dataset(manifest);
    write_dataset(ds, args.out_dir);

    json meta;
    meta["command"] = "gen-data";
    meta["format_version"] = 1;
    meta["seed"] = manifest.seed;
    meta["preset"] = args.manifest_path.empty() ? args.preset : "";
    meta["manifest"] = json::parse(manifest_to_json(manifest));
    meta["n_trajectories"] = ds.trajectories.size();
    write_text(fs::path(args.out_dir) / "gen_data_metadata.json", meta.dump(2) + "\n");
    std::cout << "wrote " << ds.trajectories.size() << " trajectories to " << args.out_dir << "\n";
    return kExitOk;
}

// ----- train -----

struct TrainArgs {
    std::string data_dir;
    std::string objective = "original";
    double lambda = 0.1;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    int epochs = 200;
    std::string out_dir;
    int batch_size = 16;
    double learning_rate = 1e-3;
    int eval_every = 5;
    int n_mc = 8;
    std::string mi_sampling = "as_written";
    std::string composite_embedding = "sum";
    int rollout_T = 50;
    int d_latent = 4;
    int encoder_hidden = 32;
    int attention_dim = 16;
    std::string dynamics_arch = "mlp";
    int mixture_components = 1;
};

int cmd_train(const TrainArgs& args) {
    Dataset ds = load_dataset(args.data_dir);

    ModelConfig mc;
    mc.d_state = static_cast<int>(ds.trajectories.at(0).states.cols());
    mc.d_action = static_cast<int>(ds.trajectories.at(0).actions.cols());
    mc.d_latent = args.d_latent;
    mc.encoder_hidden = args.encoder_hidden;
    mc.attention_dim = args.attention_dim;
    mc.dynamics_arch = dynamics_arch_from_string(args.dynamics_arch);
    mc.mixture_components = args.mixture_components;

    TrainConfig tc;
    tc.objective_config.objective = objective_from_string(args.objective);
    tc.objective_config.lambda = args.lambda;
    tc.objective_config.n_mc = args.n_mc;
    tc.objective_config.mi_sampling = mi_sampling_from_string(args.mi_sampling);
    tc.objective_config.composite_embedding = composite_embedding_from_string(args.composite_embedding);
    tc.objective_config.rollout_T = args.rollout_T;
    tc.epochs = args.epochs;
    tc.batch_size = args.batch_size;
    tc.learning_rate = args.learning_rate;
    tc.seeds = args.seeds;
    tc.eval_every = args.eval_every;
    tc.validate();
    mc.validate();

    fs::create_directories(args.out_dir);
    json meta;
    meta["command"] = "train";
    meta["format_version"] = 1;
    meta["data_dir"] = args.data_dir;
    meta["objective_config"] = objective_config_json(tc.objective_config);
    meta["epochs"] = tc.epochs;
    meta["batch_size"] = tc.batch_size;
    meta["learning_rate"] = tc.learning_rate;
    meta["seeds"] = tc.seeds;
    meta["eval_every"] = tc.eval_every;
    meta["model_config"] = json::parse(model_config_to_json(mc));
    write_text(fs::path(args.out_dir) / "train_metadata.json", meta.dump(2) + "\n");

    for (std::uint64_t seed : tc.seeds) {
        TrainResult result = train_single(ds, tc, mc, seed);
        const std::string tag = args.objective + "_seed" + std::to_string(seed);
        save_checkpoint((fs::path(args.out_dir) / ("checkpoint_" + tag + ".ckpt")).string(),
                        result.bundle);
        write_metrics_csv((fs::path(args.out_dir) / ("metrics_" + tag + ".csv")).string(),
                          result.metrics);
        const auto& last = result.metrics.rows.back();
        std::cout << "seed " << seed << ": final train_loss=" << format_double(last.train_loss)
                  << " eval_mse_sum=" << format_double(last.eval_mse_sum_embedding)
                  << " additivity_error=" << format_double(last.additivity_error) << "\n";
    }
    return kExitOk;
}

// ----- eval -----

struct EvalArgs {
    std::string checkpoint_path;
    std::string data_dir;
    std::string mode = "sum";
    std::string out_dir;
};

int cmd_eval(const EvalArgs& args) {
    ModelBundle bundle = load_checkpoint(args.checkpoint_path);
    Dataset ds = load_dataset(args.data_dir);
    const CompositeEmbedding mode = composite_embedding_from_string(args.mode);
    if (ds.manifest.compositions.empty())
        throw ValidationError("dataset manifest declares no compositions to evaluate");

    json per_comp = json::object();
    double mse_total = 0.0, add_total = 0.0;
    for (const auto& comp : ds.manifest.compositions) {
        std::vector<std::vector<const Trajectory*>> sub;
        for (const auto& id : comp.subskill_ids) {
            auto demos = ds.demos_of(id);
            if (demos.empty()) throw ValidationError("no demos of subskill '" + id + "'");
            sub.push_back(std::move(demos));
        }
        auto cdemos = ds.demos_of(comp.composite_id);
        if (cdemos.empty())
            throw ValidationError("no composite demos of '" + comp.composite_id + "'");
        MseStats stats = eval_composite(bundle, comp, sub, cdemos, mode);
        double add_err = 0.0;
        for (size_t j = 0; j < cdemos.size(); ++j) {
            std::vector<const Trajectory*> one_each;
            for (const auto& demos : sub) one_each.push_back(demos[j % demos.size()]);
            add_err += additivity_error(bundle, comp, one_each, *cdemos[j]);
        }
        add_err /= static_cast<double>(cdemos.size());
        per_comp[comp.composite_id] = {{"mse_mean", stats.mse_mean},
                                       {"mse_std", stats.mse_std},
                                       {"additivity_error", add_err}};
        mse_total += stats.mse_mean;
        add_total += add_err;
    }
    const double n = static_cast<double>(ds.manifest.compositions.size());
    const double eval_mse = mse_total / n;
    const double add_err = add_total / n;

    json report;
    report["format_version"] = 1;
    report["checkpoint"] = args.checkpoint_path;
    report["mode"] = args.mode;
    report["seed"] = bundle.seed;
    report[args.mode == "sum" ? "eval_mse_sum_embedding" : "eval_mse_encoded"] = eval_mse;
    report["additivity_error"] = add_err;
    report["compositions"] = per_comp;
    report["model_config"] = json::parse(model_config_to_json(bundle.config));

    const fs::path out_dir =
        args.out_dir.empty() ? fs::path(args.checkpoint_path).parent_path() : fs::path(args.out_dir);
    if (!out_dir.empty()) fs::create_directories(out_dir);
    write_text(out_dir / "eval_report.json", report.dump(2) + "\n");

    std::cout << "eval_mse=" << format_double(eval_mse)
              << " additivity_error=" << format_double(add_err) << "\n";
    return kExitOk;
}

// ----- compare -----

struct CompareArgs {
    std::vector<std::string> run_dirs;
    std::string out_dir;
    bool plot = false;
};

int cmd_compare(const CompareArgs& args) {
    std::vector<std::string> files;
    for (const auto& dir : args.run_dirs) {
        if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir);
        std::set<std::string> sorted;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.starts_with("metrics_") && name.ends_with(".csv"))
                sorted.insert(entry.path().string());
        }
        files.insert(files.end(), sorted.begin(), sorted.end());
    }
    if (files.empty()) throw ValidationError("no metrics_*.csv files found in the given run dirs");

    std::vector<RunMetrics> runs;
    runs.reserve(files.size());
    for (const auto& f : files) runs.push_back(read_metrics_csv(f));
    const std::vector<AggregateRow> agg = compare_runs(runs);

    fs::create_directories(args.out_dir);
    write_aggregate_csv((fs::path(args.out_dir) / "aggregate.csv").string(), agg);

    json meta;
    meta["command"] = "compare";
    meta["format_version"] = 1;
    meta["inputs"] = files;
    meta["plot"] = args.plot;
    write_text(fs::path(args.out_dir) / "compare_metadata.json", meta.dump(2) + "\n");

    if (args.plot) {
        for (const auto& metric : kMetricNames) {
            std::map<std::string, PlotSeries> by_objective;
            for (const auto& row : agg) {
                if (row.metric != metric) continue;
                auto& s = by_objective[row.objective];
                s.name = row.objective;
                s.x.push_back(row.epoch);
                s.y.push_back(row.mean);
            }
            std::vector<PlotSeries> series;
            for (auto& [_, s] : by_objective) series.push_back(std::move(s));
            write_line_chart((fs::path(args.out_dir) / ("plot_" + metric + ".svg")).string(),
                             metric + " (seed mean)", "epoch", metric, series);
        }
    }

    // final-epoch summary per objective
    std::map<std::string, int> final_epoch;
    for (const auto& row : agg)
        final_epoch[row.objective] = std::max(final_epoch[row.objective], row.epoch);
    for (const auto& row : agg)
        if (row.epoch == final_epoch[row.objective] &&
            (row.metric == "eval_mse_sum_embedding" || row.metric == "additivity_error"))
            std::cout << row.objective << " " << row.metric << " @epoch " << row.epoch << ": "
                      << format_double(row.mean) << " +- " << format_double(row.std) << " (n="
                      << row.n_seeds << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"conditional trajectory VAE with compositional latent-space regularizers"};
    app.require_subcommand(1);

    GenDataArgs gen_args;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic point-mass dataset");
    gen->add_option("--manifest", gen_args.manifest_path, "manifest JSON (default: built-in preset)");
    gen->add_option("--out", gen_args.out_dir, "output directory")->required();
    gen->add_option("--seed", gen_args.seed, "override the manifest seed");
    gen->add_option("--preset", gen_args.preset, "built-in manifest: diag_wiggle or diag");

    TrainArgs train_args;
    auto* tr = app.add_subcommand("train", "train one objective across seeds");
    tr->add_option("--data", train_args.data_dir, "dataset directory")->required();
    tr->add_option("--objective", train_args.objective,
                   "original | reg_variational | reg_nonvariational")->required();
    tr->add_option("--lambda", train_args.lambda, "regularizer weight (default 0.1)");
    tr->add_option("--seeds", train_args.seeds, "comma-separated seeds")->delimiter(',');
    tr->add_option("--epochs", train_args.epochs, "training epochs")->required();
    tr->add_option("--out", train_args.out_dir, "output directory")->required();
    tr->add_option("--batch-size", train_args.batch_size);
    tr->add_option("--lr", train_args.learning_rate);
    tr->add_option("--eval-every", train_args.eval_every);
    tr->add_option("--n-mc", train_args.n_mc, "samples N for the non-variational bound");
    tr->add_option("--mi-sampling", train_args.mi_sampling, "as_written | cross");
    tr->add_option("--composite-embedding", train_args.composite_embedding, "sum | encode");
    tr->add_option("--rollout-T", train_args.rollout_T);
    tr->add_option("--d-latent", train_args.d_latent);
    tr->add_option("--encoder-hidden", train_args.encoder_hidden);
    tr->add_option("--attention-dim", train_args.attention_dim);
    tr->add_option("--dynamics-arch", train_args.dynamics_arch, "mlp | causal_conv");
    tr->add_option("--mixture-components", train_args.mixture_components);

    EvalArgs eval_args;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on composite demonstrations");
    ev->add_option("--checkpoint", eval_args.checkpoint_path)->required();
    ev->add_option("--data", eval_args.data_dir)->required();
    ev->add_option("--mode", eval_args.mode, "sum | encode");
    ev->add_option("--out", eval_args.out_dir, "report directory (default: checkpoint dir)");

    CompareArgs cmp_args;
    auto* cmp = app.add_subcommand("compare", "aggregate metrics across runs");
    cmp->add_option("--runs", cmp_args.run_dirs, "run directories")->required();
    cmp->add_option("--out", cmp_args.out_dir, "output directory")->required();
    cmp->add_flag("--plot", cmp_args.plot, "also write SVG charts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_args);
        if (tr->parsed()) return cmd_train(train_args);
        if (ev->parsed()) return cmd_eval(eval_args);
        if (cmp->parsed()) return cmd_compare(cmp_args);
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const RolloutDivergence& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
