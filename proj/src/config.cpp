#include "feast/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "feast/errors.hpp"

namespace feast {

namespace {

using nlohmann::json;

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type (got " +
                          std::string(j.type_name()) + ")");
    }
}

std::vector<int> get_int_list(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array of integers");
    std::vector<int> out;
    for (const auto& e : j) out.push_back(get_as<int>(e, key));
    return out;
}

std::vector<double> get_double_list(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : j) out.push_back(get_as<double>(e, key));
    return out;
}

std::vector<std::string> get_string_list(const json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& e : j) out.push_back(get_as<std::string>(e, key));
    return out;
}

}  // namespace

void apply_config_json(RunConfig& cfg, const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");

    for (auto it = root.begin(); it != root.end(); ++it) {
        const std::string& key = it.key();
        const json& v = it.value();
        EngineConfig& e = cfg.engine;
        if (key == "alpha") e.alpha = get_as<double>(v, key);
        else if (key == "beta1") e.beta1 = get_as<double>(v, key);
        else if (key == "beta2") e.beta2 = get_as<double>(v, key);
        else if (key == "weight_decay") e.weight_decay = get_as<double>(v, key);
        else if (key == "tau") e.tau = get_as<int>(v, key);
        else if (key == "lambda") e.lambda = get_as<double>(v, key);
        else if (key == "gamma") e.gamma = get_as<double>(v, key);
        else if (key == "regularizer") e.reg = reg_kind_from_string(get_as<std::string>(v, key));
        else if (key == "k_shot") e.k_shot = get_as<int>(v, key);
        else if (key == "query_size") e.query_size = get_as<int>(v, key);
        else if (key == "aux_size") e.aux_size = get_as<int>(v, key);
        else if (key == "steps") e.steps = get_as<int>(v, key);
        else if (key == "test_tasks") e.test_tasks = get_as<int>(v, key);
        else if (key == "dict_capacity") e.dict_capacity = get_as<int>(v, key);
        else if (key == "variant") e.variant = variant_from_string(get_as<std::string>(v, key));
        else if (key == "keys_at_adapted") e.keys_at_adapted = get_as<bool>(v, key);
        else if (key == "sgd_meta") e.sgd_meta = get_as<bool>(v, key);
        else if (key == "divergence_threshold") e.divergence_threshold = get_as<double>(v, key);
        else if (key == "seed") { e.seed = get_as<uint64_t>(v, key); cfg.seed_provided = true; }
        else if (key == "data") cfg.data = get_as<std::string>(v, key);
        else if (key == "label_col") cfg.label_col = get_as<std::string>(v, key);
        else if (key == "sensitive_col") cfg.sensitive_col = get_as<std::string>(v, key);
        else if (key == "subset_col") cfg.subset_col = get_as<std::string>(v, key);
        else if (key == "categorical_cols") cfg.categorical_cols = get_string_list(v, key);
        else if (key == "sensitive_as_feature") cfg.sensitive_as_feature = get_as<bool>(v, key);
        else if (key == "train_subsets") cfg.train_subsets = get_int_list(v, key);
        else if (key == "val_subsets") cfg.val_subsets = get_int_list(v, key);
        else if (key == "test_subsets") cfg.test_subsets = get_int_list(v, key);
        else if (key == "n_train_subsets") cfg.n_train_subsets = get_as<int>(v, key);
        else if (key == "n_val_subsets") cfg.n_val_subsets = get_as<int>(v, key);
        else if (key == "n_test_subsets") cfg.n_test_subsets = get_as<int>(v, key);
        else if (key == "split_seed") cfg.split_seed = get_as<uint64_t>(v, key);
        else if (key == "out_dir") cfg.out_dir = get_as<std::string>(v, key);
        else if (key == "force") cfg.force = get_as<bool>(v, key);
        else if (key == "resume") cfg.resume = get_as<std::string>(v, key);
        else if (key == "sweep_variants") cfg.sweep_variants = get_string_list(v, key);
        else if (key == "sweep_gammas") cfg.sweep_gammas = get_double_list(v, key);
        else if (key == "sweep_aux_sizes") cfg.sweep_aux_sizes = get_int_list(v, key);
        else if (key == "sweep_k_shots") cfg.sweep_k_shots = get_int_list(v, key);
        else if (key == "jobs") cfg.jobs = get_as<int>(v, key);
        else throw ConfigError("unknown config key '" + key + "'");
    }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    apply_config_json(cfg, ss.str());
}

std::string run_config_json(const RunConfig& cfg) {
    const EngineConfig& e = cfg.engine;
    json j;
    j["alpha"] = e.alpha;
    j["beta1"] = e.beta1;
    j["beta2"] = e.beta2;
    j["weight_decay"] = e.weight_decay;
    j["tau"] = e.tau;
    j["lambda"] = e.lambda;
    j["gamma"] = e.gamma;
    j["regularizer"] = to_string(e.reg);
    j["k_shot"] = e.k_shot;
    j["query_size"] = e.query_size;
    j["aux_size"] = e.aux_size;
    j["steps"] = e.steps;
    j["test_tasks"] = e.test_tasks;
    j["dict_capacity"] = e.dict_capacity;
    j["variant"] = to_string(e.variant);
    j["keys_at_adapted"] = e.keys_at_adapted;
    j["sgd_meta"] = e.sgd_meta;
    j["divergence_threshold"] = e.divergence_threshold;
    j["seed"] = e.seed;
    j["data"] = cfg.data;
    j["label_col"] = cfg.label_col;
    j["sensitive_col"] = cfg.sensitive_col;
    j["subset_col"] = cfg.subset_col;
    j["categorical_cols"] = cfg.categorical_cols;
    j["sensitive_as_feature"] = cfg.sensitive_as_feature;
    j["train_subsets"] = cfg.train_subsets;
    j["val_subsets"] = cfg.val_subsets;
    j["test_subsets"] = cfg.test_subsets;
    j["n_train_subsets"] = cfg.n_train_subsets;
    j["n_val_subsets"] = cfg.n_val_subsets;
    j["n_test_subsets"] = cfg.n_test_subsets;
    j["split_seed"] = cfg.split_seed;
    j["out_dir"] = cfg.out_dir;
    j["force"] = cfg.force;
    j["resume"] = cfg.resume;
    j["sweep_variants"] = cfg.sweep_variants;
    j["sweep_gammas"] = cfg.sweep_gammas;
    j["sweep_aux_sizes"] = cfg.sweep_aux_sizes;
    j["sweep_k_shots"] = cfg.sweep_k_shots;
    j["jobs"] = cfg.jobs;
    return j.dump(2) + "\n";
}

SplitSpec resolve_split(const RunConfig& cfg, int n_subsets) {
    SplitSpec split;
    const bool explicit_lists =
        !cfg.train_subsets.empty() || !cfg.val_subsets.empty() || !cfg.test_subsets.empty();
    if (explicit_lists) {
        split.train = cfg.train_subsets;
        split.val = cfg.val_subsets;
        split.test = cfg.test_subsets;
    } else {
        int n_train = cfg.n_train_subsets;
        int n_val = cfg.n_val_subsets;
        int n_test = cfg.n_test_subsets;
        if (n_train <= 0 && n_val <= 0 && n_test <= 0) {
            // Default split: ~60/20/20 over whatever the data provides, with at
            // least one train and one test subset.
            n_test = std::max(1, n_subsets / 5);
            n_val = n_subsets >= 3 ? std::max(0, n_subsets / 5) : 0;
            n_train = n_subsets - n_val - n_test;
        }
        if (n_train <= 0) throw ConfigError("split must contain at least one training subset");
        if (n_test <= 0) throw ConfigError("split must contain at least one test subset");
        if (n_train + n_val + n_test > n_subsets) {
            throw ConfigError("split asks for " + std::to_string(n_train + n_val + n_test) +
                              " subsets but the data has only " + std::to_string(n_subsets));
        }
        split = make_split(n_subsets, n_train, n_val, n_test, cfg.split_seed);
    }
    validate_split(split, n_subsets);
    return split;
}

CsvSchema schema_of(const RunConfig& cfg) {
    CsvSchema s;
    s.label_col = cfg.label_col;
    s.sensitive_col = cfg.sensitive_col;
    s.subset_col = cfg.subset_col;
    s.categorical_cols = cfg.categorical_cols;
    s.sensitive_as_feature = cfg.sensitive_as_feature;
    return s;
}

}  // namespace feast
