// Command-line front end: train / eval / synth / sweep.
//
// Exit codes: 0 success, 2 configuration error, 3 data error (schema,
// validation, sampling, I/O), 4 training divergence, 1 anything else.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "feast/checkpoint.hpp"
#include "feast/config.hpp"
#include "feast/dataset.hpp"
#include "feast/engine.hpp"
#include "feast/errors.hpp"
#include "feast/fairness.hpp"
#include "feast/sha256.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace feast;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("failed while writing '" + path + "'");
}

// Creates dir if needed; refuses to reuse a non-empty directory unless forced.
void ensure_out_dir(const std::string& dir, bool force) {
    fs::path p(dir);
    if (fs::exists(p)) {
        if (!fs::is_directory(p)) {
            throw ConfigError("output path '" + dir + "' exists and is not a directory");
        }
        if (!fs::is_empty(p) && !force) {
            throw ConfigError("output directory '" + dir +
                              "' is not empty; pass --force to write into it anyway");
        }
    } else {
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    }
}

struct PreparedData {
    DatasetTable table;  // normalized, not yet variant-adjusted
    SplitSpec split;
    std::string data_hash;
    LoadReport load_report;
};

PreparedData load_data(const RunConfig& cfg) {
    if (cfg.data.empty()) throw ConfigError("a data CSV is required ('data' key or --data)");
    PreparedData out;
    out.data_hash = sha256_file(cfg.data);
    out.table = load_csv(cfg.data, schema_of(cfg), &out.load_report);
    out.split = resolve_split(cfg, out.table.n_subsets());
    zscore_normalize(out.table, out.split.train);
    return out;
}

void write_config_echo(const RunConfig& rc, const PreparedData& pd, const std::string& dir) {
    RunConfig resolved = rc;
    resolved.train_subsets = pd.split.train;
    resolved.val_subsets = pd.split.val;
    resolved.test_subsets = pd.split.test;
    resolved.out_dir = dir;
    json echo = json::parse(run_config_json(resolved));
    echo["data_sha256"] = pd.data_hash;
    echo["n_features"] = pd.table.n_features;
    echo["n_rows"] = pd.table.n_rows();
    echo["n_subsets"] = pd.table.n_subsets();
    echo["rows_dropped_missing"] = pd.load_report.rows_dropped_missing;
    write_text(dir + "/config.json", echo.dump(2) + "\n");
}

void write_eval_outputs(const MetricsReport& report, const EngineConfig& ecfg,
                        const TrainState& state, const std::string& dir) {
    write_text(dir + "/tasks.jsonl", report.to_jsonl());
    json summary = json::parse(report.summary_json());
    summary["variant"] = to_string(ecfg.variant);
    summary["seed"] = ecfg.seed;
    summary["trained_steps"] = state.step;
    summary["skipped_generator_updates"] = state.skipped_generator_updates;
    write_text(dir + "/summary.json", summary.dump(2) + "\n");
}

// Trains one configuration into out_dir (config echo, checkpoint, and - when a
// test split exists - tasks.jsonl / summary.json), returning the test report.
MetricsReport train_and_eval(RunConfig rc, const PreparedData& pd, const std::string& out_dir) {
    rc.engine.validate();
    ensure_out_dir(out_dir, rc.force);
    write_config_echo(rc, pd, out_dir);

    DatasetTable table = prepare_table(pd.table, rc.engine.variant);
    EngineConfig ecfg = rc.engine;

    TrainState state = [&]() -> TrainState {
        if (!rc.resume.empty()) {
            LoadedCheckpoint loaded = load_checkpoint(rc.resume, table, pd.data_hash);
            int target_steps = ecfg.steps;
            int test_tasks = ecfg.test_tasks;
            uint64_t eval_seed = ecfg.seed;
            ecfg = loaded.cfg;  // the trajectory belongs to the saved config
            ecfg.steps = target_steps;
            ecfg.test_tasks = test_tasks;
            ecfg.seed = eval_seed;
            return std::move(loaded.state);
        }
        return make_initial_state(ecfg, table, pd.split);
    }();

    try {
        train(state, ecfg, table, pd.split);
    } catch (const DivergenceError&) {
        save_checkpoint(out_dir + "/checkpoint", state, ecfg, pd.data_hash);
        throw;
    }
    save_checkpoint(out_dir + "/checkpoint", state, ecfg, pd.data_hash);

    MetricsReport report;
    if (!pd.split.test.empty()) {
        report = evaluate(state, ecfg, table, pd.split.test);
        write_eval_outputs(report, ecfg, state, out_dir);
    }
    return report;
}

void require_train_inputs(const RunConfig& rc) {
    if (!rc.seed_provided) throw ConfigError("a seed is required ('seed' key or --seed)");
    if (rc.out_dir.empty()) throw ConfigError("an output directory is required ('out_dir' or --out)");
}

void print_report_line(const MetricsReport& r) {
    std::printf("tasks=%zu dp_mean=%.6f eo_mean=%s acc_mean=%.6f partial=%d\n", r.tasks.size(),
                r.dp_mean, r.eo_task_count > 0 ? (std::to_string(r.eo_mean).c_str()) : "n/a",
                r.acc_mean, r.partial_task_count);
}

int cmd_train(const RunConfig& rc) {
    require_train_inputs(rc);
    PreparedData pd = load_data(rc);
    MetricsReport report = train_and_eval(rc, pd, rc.out_dir);
    if (!pd.split.test.empty()) {
        print_report_line(report);
    } else {
        std::printf("training complete (no test subsets configured)\n");
    }
    return 0;
}

int cmd_eval(const RunConfig& rc, const json& overrides, const std::string& ck_dir,
             const std::string& eval_on) {
    if (ck_dir.empty()) throw ConfigError("--checkpoint is required");
    PreparedData pd = load_data(rc);
    LoadedCheckpoint loaded = load_checkpoint(ck_dir, pd.table, pd.data_hash);
    EngineConfig ecfg = loaded.cfg;
    if (overrides.contains("test_tasks")) ecfg.test_tasks = rc.engine.test_tasks;
    if (overrides.contains("seed")) ecfg.seed = rc.engine.seed;

    const std::vector<int>* subsets = &pd.split.test;
    if (eval_on == "train") subsets = &pd.split.train;
    else if (eval_on == "val") subsets = &pd.split.val;
    else if (eval_on != "test") throw ConfigError("--on must be train, val, or test");
    if (subsets->empty()) throw ConfigError("the '" + eval_on + "' split has no subsets");

    DatasetTable table = prepare_table(pd.table, ecfg.variant);
    MetricsReport report = evaluate(loaded.state, ecfg, table, *subsets);

    if (!rc.out_dir.empty()) {
        ensure_out_dir(rc.out_dir, rc.force);
        write_config_echo(rc, pd, rc.out_dir);
        write_eval_outputs(report, ecfg, loaded.state, rc.out_dir);
    }
    std::puts(report.summary_json().c_str());
    return 0;
}

struct SweepCell {
    Variant variant;
    double gamma;
    int aux_size;
    int k_shot;
    std::string name;
};

std::string format_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

int cmd_sweep(const RunConfig& rc) {
    require_train_inputs(rc);
    PreparedData pd = load_data(rc);
    ensure_out_dir(rc.out_dir, rc.force);
    write_config_echo(rc, pd, rc.out_dir);

    std::vector<Variant> variants;
    if (rc.sweep_variants.empty()) variants.push_back(rc.engine.variant);
    else for (const auto& s : rc.sweep_variants) variants.push_back(variant_from_string(s));
    std::vector<double> gammas = rc.sweep_gammas.empty() ? std::vector<double>{rc.engine.gamma}
                                                         : rc.sweep_gammas;
    std::vector<int> aux_sizes = rc.sweep_aux_sizes.empty() ? std::vector<int>{rc.engine.aux_size}
                                                            : rc.sweep_aux_sizes;
    std::vector<int> k_shots = rc.sweep_k_shots.empty() ? std::vector<int>{rc.engine.k_shot}
                                                        : rc.sweep_k_shots;

    std::vector<SweepCell> cells;
    for (Variant v : variants)
        for (double g : gammas)
            for (int a : aux_sizes)
                for (int k : k_shots) {
                    SweepCell c{v, g, a, k, ""};
                    c.name = to_string(v) + "_g" + format_num(g) + "_a" + std::to_string(a) +
                             "_k" + std::to_string(k);
                    cells.push_back(c);
                }

    const int jobs = std::max(1, rc.jobs);
    std::vector<MetricsReport> results(cells.size());
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error) return;
            }
            try {
                const SweepCell& c = cells[i];
                RunConfig cell_cfg = rc;
                cell_cfg.engine.variant = c.variant;
                cell_cfg.engine.gamma = c.gamma;
                cell_cfg.engine.aux_size = c.aux_size;
                cell_cfg.engine.k_shot = c.k_shot;
                cell_cfg.resume.clear();
                results[i] = train_and_eval(cell_cfg, pd, rc.out_dir + "/" + c.name);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::string csv = "variant,gamma,aux_size,k_shot,dp_mean,eo_mean,acc_mean\n";
    char line[256];
    for (size_t i = 0; i < cells.size(); ++i) {
        const SweepCell& c = cells[i];
        const MetricsReport& r = results[i];
        double eo = r.eo_task_count > 0 ? r.eo_mean : std::numeric_limits<double>::quiet_NaN();
        std::snprintf(line, sizeof(line), "%s,%.17g,%d,%d,%.17g,%.17g,%.17g\n",
                      to_string(c.variant).c_str(), c.gamma, c.aux_size, c.k_shot, r.dp_mean, eo,
                      r.acc_mean);
        csv += line;
    }
    write_text(rc.out_dir + "/sweep.csv", csv);
    std::printf("sweep complete: %zu cells -> %s/sweep.csv\n", cells.size(), rc.out_dir.c_str());
    return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_path) {
    DatasetTable table = make_synthetic(spec);
    fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_csv(table, out_path);
    write_synth_sidecar(spec, out_path);
    std::printf("wrote %d rows x %d features, %d subsets -> %s\n", table.n_rows(),
                table.n_features, table.n_subsets(), out_path.c_str());
    return 0;
}

// Attaches every run-configuration flag to a subcommand. Flag values land in
// `overrides` keyed by config-file key, so precedence (defaults < file < flag)
// falls out of applying them in order.
void add_run_options(CLI::App* cmd, json& overrides, std::string& config_path) {
    cmd->add_option("--config", config_path, "JSON config file; flags override its keys");
    auto opt_d = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<double>(flag, [&overrides, key](const double& v) { overrides[key] = v; }, desc);
    };
    auto opt_i = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<int>(flag, [&overrides, key](const int& v) { overrides[key] = v; }, desc);
    };
    auto opt_u = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<uint64_t>(flag, [&overrides, key](const uint64_t& v) { overrides[key] = v; }, desc);
    };
    auto opt_s = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<std::string>(flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, desc);
    };
    auto opt_vi = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<std::vector<int>>(
            flag, [&overrides, key](const std::vector<int>& v) { overrides[key] = v; }, desc)->delimiter(',');
    };
    auto opt_vd = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<std::vector<double>>(
            flag, [&overrides, key](const std::vector<double>& v) { overrides[key] = v; }, desc)->delimiter(',');
    };
    auto opt_vs = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_option_function<std::vector<std::string>>(
            flag, [&overrides, key](const std::vector<std::string>& v) { overrides[key] = v; }, desc)->delimiter(',');
    };
    auto opt_b = [&overrides, cmd](const std::string& flag, const char* key, const char* desc) {
        cmd->add_flag_callback(flag, [&overrides, key]() { overrides[key] = true; }, desc);
    };

    opt_d("--alpha", "alpha", "Inner-loop step size");
    opt_d("--beta1", "beta1", "Classifier meta learning rate");
    opt_d("--beta2", "beta2", "Generator meta learning rate");
    opt_d("--weight-decay", "weight_decay", "Adam weight decay");
    opt_i("--tau", "tau", "Inner adaptation steps");
    opt_d("--lambda", "lambda", "Fairness penalty weight");
    opt_d("--gamma", "gamma", "Auxiliary term weight");
    opt_s("--regularizer", "regularizer", "Fairness penalty kind: dp or eo");
    opt_i("--k-shot", "k_shot", "Support samples per class");
    opt_i("--query-size", "query_size", "Query set size");
    opt_i("--aux-size", "aux_size", "Candidate auxiliary set size");
    opt_i("--steps", "steps", "Meta-training steps");
    opt_i("--test-tasks", "test_tasks", "Evaluation task count");
    opt_i("--dict-capacity", "dict_capacity", "Candidate dictionary capacity");
    opt_s("--variant", "variant",
          "feast | feast_no_mi | feast_no_select | feast_no_both | maml | m_maml");
    opt_b("--keys-at-adapted", "keys_at_adapted", "Key dictionary entries at adapted parameters");
    opt_b("--sgd-meta", "sgd_meta", "Plain SGD meta updates (test hook)");
    opt_d("--divergence-threshold", "divergence_threshold", "Loss/gradient magnitude limit");
    opt_u("--seed", "seed", "Run seed (required for train/eval/sweep)");
    opt_s("--data", "data", "Input CSV path");
    opt_s("--label-col", "label_col", "Label column name");
    opt_s("--sensitive-col", "sensitive_col", "Sensitive attribute column name");
    opt_s("--subset-col", "subset_col", "Subset id column name");
    opt_vs("--categorical-cols", "categorical_cols", "Columns to one-hot encode");
    opt_b("--sensitive-as-feature", "sensitive_as_feature",
          "Mirror the sensitive attribute as a feature column");
    opt_vi("--train-subsets", "train_subsets", "Explicit training subset ids");
    opt_vi("--val-subsets", "val_subsets", "Explicit validation subset ids");
    opt_vi("--test-subsets", "test_subsets", "Explicit test subset ids");
    opt_i("--n-train-subsets", "n_train_subsets", "Training subset count (seeded draw)");
    opt_i("--n-val-subsets", "n_val_subsets", "Validation subset count");
    opt_i("--n-test-subsets", "n_test_subsets", "Test subset count");
    opt_u("--split-seed", "split_seed", "Seed for the subset split draw");
    opt_s("--out", "out_dir", "Output directory");
    opt_b("--force", "force", "Write into an existing non-empty output directory");
    opt_s("--resume", "resume", "Checkpoint directory to resume training from");
    opt_vs("--sweep-variants", "sweep_variants", "Sweep grid: variants");
    opt_vd("--sweep-gammas", "sweep_gammas", "Sweep grid: gamma values");
    opt_vi("--sweep-aux-sizes", "sweep_aux_sizes", "Sweep grid: auxiliary set sizes");
    opt_vi("--sweep-k-shots", "sweep_k_shots", "Sweep grid: k-shot values");
    opt_i("--jobs", "jobs", "Parallel sweep workers (default 1)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fair few-shot learning with auxiliary candidate sets"};
    app.require_subcommand(1);

    json overrides = json::object();
    std::string config_path;

    CLI::App* train_cmd = app.add_subcommand("train", "Meta-train a model and evaluate it");
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a saved checkpoint");
    CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset CSV");
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Train and evaluate over a parameter grid");

    add_run_options(train_cmd, overrides, config_path);
    add_run_options(eval_cmd, overrides, config_path);
    add_run_options(sweep_cmd, overrides, config_path);

    std::string ck_dir;
    std::string eval_on = "test";
    eval_cmd->add_option("--checkpoint", ck_dir, "Checkpoint directory to evaluate")->required();
    eval_cmd->add_option("--on", eval_on, "Split to evaluate on: train, val, or test");

    SynthSpec spec;
    std::string synth_out;
    synth_cmd->add_option("--out", synth_out, "Output CSV path")->required();
    synth_cmd->add_option("--n-samples", spec.n_samples, "Total sample count");
    synth_cmd->add_option("--n-features", spec.n_features, "Feature count");
    synth_cmd->add_option("--n-subsets", spec.n_subsets, "Subset count");
    synth_cmd->add_option("--delta", spec.delta, "Sensitive-group mean gap on the biased block");
    synth_cmd->add_option("--class-sep", spec.class_sep, "Class mean offset on the signal block");
    synth_cmd->add_option("--label-bias-gain", spec.label_bias_gain,
                          "Strength of the label's lean toward the up-shifted group");
    synth_cmd->add_option("--p-sensitive", spec.p_sensitive, "Marginal probability of group 1");
    synth_cmd->add_option("--bias-flip-fraction", spec.bias_flip_fraction,
                          "Fraction of subsets with inverted bias direction");
    synth_cmd->add_option("--subset-jitter", spec.subset_jitter, "Per-subset center jitter sd");
    synth_cmd->add_option("--label-noise", spec.label_noise, "Label flip probability");
    synth_cmd->add_option("--signal-width", spec.signal_width, "Width of the class signal block");
    synth_cmd->add_option("--bias-offset", spec.bias_offset, "First column of the biased block");
    synth_cmd->add_option("--bias-width", spec.bias_width, "Width of the biased block");
    bool no_mirror = false;
    synth_cmd->add_flag("--no-sensitive-feature", no_mirror,
                        "Do not mirror the sensitive attribute as a feature column");
    synth_cmd->add_option("--seed", spec.seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(synth_cmd)) {
            spec.sensitive_as_feature = !no_mirror;
            return cmd_synth(spec, synth_out);
        }
        RunConfig rc;
        if (!config_path.empty()) apply_config_file(rc, config_path);
        apply_config_json(rc, overrides.dump());
        if (app.got_subcommand(train_cmd)) return cmd_train(rc);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(rc, overrides, ck_dir, eval_on);
        if (app.got_subcommand(sweep_cmd)) return cmd_sweep(rc);
        throw ConfigError("no subcommand selected");
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const SchemaError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const SamplingError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
