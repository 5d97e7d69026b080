#include "feast/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "feast/errors.hpp"

namespace feast {

namespace {

using nlohmann::json;

json config_to_json(const EngineConfig& c) {
    return json{{"alpha", c.alpha},
                {"beta1", c.beta1},
                {"beta2", c.beta2},
                {"weight_decay", c.weight_decay},
                {"tau", c.tau},
                {"lambda", c.lambda},
                {"gamma", c.gamma},
                {"regularizer", to_string(c.reg)},
                {"k_shot", c.k_shot},
                {"query_size", c.query_size},
                {"aux_size", c.aux_size},
                {"steps", c.steps},
                {"test_tasks", c.test_tasks},
                {"dict_capacity", c.dict_capacity},
                {"variant", to_string(c.variant)},
                {"keys_at_adapted", c.keys_at_adapted},
                {"sgd_meta", c.sgd_meta},
                {"divergence_threshold", c.divergence_threshold},
                {"seed", c.seed}};
}

EngineConfig config_from_json(const json& j) {
    EngineConfig c;
    c.alpha = j.at("alpha").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.tau = j.at("tau").get<int>();
    c.lambda = j.at("lambda").get<double>();
    c.gamma = j.at("gamma").get<double>();
    c.reg = reg_kind_from_string(j.at("regularizer").get<std::string>());
    c.k_shot = j.at("k_shot").get<int>();
    c.query_size = j.at("query_size").get<int>();
    c.aux_size = j.at("aux_size").get<int>();
    c.steps = j.at("steps").get<int>();
    c.test_tasks = j.at("test_tasks").get<int>();
    c.dict_capacity = j.at("dict_capacity").get<int>();
    c.variant = variant_from_string(j.at("variant").get<std::string>());
    c.keys_at_adapted = j.at("keys_at_adapted").get<bool>();
    c.sgd_meta = j.at("sgd_meta").get<bool>();
    c.divergence_threshold = j.at("divergence_threshold").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

void put_u64_le(std::ofstream& out, uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

uint64_t get_u64_le(std::ifstream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    return v;
}

std::vector<double> adam_moments_flat(const AdamState& a) {
    std::vector<double> flat;
    for (const auto& m : a.m) flat.insert(flat.end(), m.begin(), m.end());
    for (const auto& v : a.v) flat.insert(flat.end(), v.begin(), v.end());
    return flat;
}

// Restores m/v shaped like params from the concatenated blob.
void adam_moments_restore(AdamState& a, const std::vector<TensorPtr>& params,
                          const std::vector<double>& flat) {
    if (flat.empty()) {
        a.m.clear();
        a.v.clear();
        return;
    }
    size_t total = 0;
    for (const auto& p : params) total += p->values.size();
    if (flat.size() != 2 * total)
        throw StateError("checkpoint: Adam moment blob has " + std::to_string(flat.size()) +
                         " values, expected " + std::to_string(2 * total));
    a.m.resize(params.size());
    a.v.resize(params.size());
    size_t k = 0;
    for (size_t i = 0; i < params.size(); ++i) {
        a.m[i].assign(flat.begin() + k, flat.begin() + k + params[i]->values.size());
        k += params[i]->values.size();
    }
    for (size_t i = 0; i < params.size(); ++i) {
        a.v[i].assign(flat.begin() + k, flat.begin() + k + params[i]->values.size());
        k += params[i]->values.size();
    }
}

}  // namespace

void write_doubles(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_doubles: cannot open '" + path + "'");
    put_u64_le(out, values.size());
    for (double v : values) put_u64_le(out, std::bit_cast<uint64_t>(v));
    if (!out) throw IoError("write_doubles: write to '" + path + "' failed");
}

std::vector<double> read_doubles(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_doubles: cannot open '" + path + "'");
    const uint64_t n = get_u64_le(in);
    std::vector<double> values(n);
    for (uint64_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_u64_le(in));
    if (!in) throw IoError("read_doubles: '" + path + "' truncated");
    return values;
}

void save_checkpoint(const std::string& dir, const TrainState& state, const EngineConfig& cfg,
                     const std::string& data_fingerprint) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    write_doubles(dir + "/theta.bin", flatten_params(state.theta));
    write_doubles(dir + "/phi.bin", flatten_values(state.phi.all()));
    write_doubles(dir + "/adam_f.bin", adam_moments_flat(state.adam_f));
    write_doubles(dir + "/adam_g.bin", adam_moments_flat(state.adam_g));

    std::vector<double> keys;
    json dict_index = json::array();
    for (int i = 0; i < state.dict.size(); ++i) {
        const auto& set = state.dict.at(i);
        keys.insert(keys.end(), set.key.begin(), set.key.end());
        dict_index.push_back({{"step", set.enqueue_step}, {"rows", set.rows}});
    }
    write_doubles(dir + "/dict_keys.bin", keys);

    json manifest{{"format_version", 1},
                  {"step", state.step},
                  {"n_features", state.theta.n_features},
                  {"d_theta", d_theta(state.theta.n_features)},
                  {"config", config_to_json(cfg)},
                  {"rng_state", state.rng.serialize()},
                  {"adam_f_t", state.adam_f.t},
                  {"adam_g_t", state.adam_g.t},
                  {"dict", dict_index},
                  {"query_loss_history", state.query_loss_history},
                  {"gen_loss_history", state.gen_loss_history},
                  {"skipped_generator_updates", state.skipped_generator_updates},
                  {"data_fingerprint", data_fingerprint}};
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw IoError("save_checkpoint: cannot open '" + dir + "/manifest.json'");
    out << manifest.dump(2) << "\n";
    if (!out) throw IoError("save_checkpoint: write failed in '" + dir + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& dir, const DatasetTable& table,
                                 const std::string& data_fingerprint) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw IoError("load_checkpoint: cannot open '" + dir + "/manifest.json'");
    json manifest = json::parse(in, nullptr, /*allow_exceptions=*/true);

    const auto cfg = config_from_json(manifest.at("config"));
    const int n_features = manifest.at("n_features").get<int>();
    if (n_features != table.n_features)
        throw StateError("load_checkpoint: checkpoint expects " + std::to_string(n_features) +
                         " features, table has " + std::to_string(table.n_features));
    const std::string saved_fp = manifest.value("data_fingerprint", std::string());
    if (!saved_fp.empty() && !data_fingerprint.empty() && saved_fp != data_fingerprint)
        throw ValidationError("load_checkpoint: data fingerprint mismatch (checkpoint " + saved_fp +
                              ", current " + data_fingerprint + ")");

    LoadedCheckpoint loaded(cfg);
    loaded.data_fingerprint = saved_fp;
    TrainState& state = loaded.state;

    state.theta = unflatten_params(read_doubles(dir + "/theta.bin"), n_features);
    state.phi = GeneratorParams::init(d_theta(n_features), state.rng);  // shapes only
    unflatten_values(read_doubles(dir + "/phi.bin"), state.phi.all());
    state.rng.deserialize(manifest.at("rng_state").get<std::string>());

    state.adam_f = AdamState(cfg.beta1, cfg.weight_decay);
    state.adam_g = AdamState(cfg.beta2, cfg.weight_decay);
    adam_moments_restore(state.adam_f, state.theta.all(), read_doubles(dir + "/adam_f.bin"));
    adam_moments_restore(state.adam_g, state.phi.all(), read_doubles(dir + "/adam_g.bin"));
    state.adam_f.t = manifest.at("adam_f_t").get<long long>();
    state.adam_g.t = manifest.at("adam_g_t").get<long long>();

    const auto keys = read_doubles(dir + "/dict_keys.bin");
    const auto& dict_index = manifest.at("dict");
    const size_t width = static_cast<size_t>(d_theta(n_features));
    if (keys.size() != dict_index.size() * width)
        throw StateError("load_checkpoint: dictionary key blob does not match the index");
    size_t k = 0;
    for (const auto& entry : dict_index) {
        AuxiliarySet set;
        set.enqueue_step = entry.at("step").get<long long>();
        set.rows = entry.at("rows").get<std::vector<int>>();
        for (int r : set.rows)
            if (r < 0 || r >= table.n_rows())
                throw ValidationError("load_checkpoint: dictionary row " + std::to_string(r) +
                                      " outside the table");
        set.key.assign(keys.begin() + k, keys.begin() + k + width);
        k += width;
        state.dict.enqueue(std::move(set));
    }

    state.step = manifest.at("step").get<long long>();
    state.query_loss_history = manifest.at("query_loss_history").get<std::vector<double>>();
    state.gen_loss_history = manifest.at("gen_loss_history").get<std::vector<double>>();
    state.skipped_generator_updates = manifest.at("skipped_generator_updates").get<int>();
    return loaded;
}

}  // namespace feast
