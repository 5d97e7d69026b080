#include "feast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "feast/errors.hpp"

namespace feast {

void DatasetTable::build_index() {
    index.assign(n_subsets(), SubsetIndex{});
    for (int r = 0; r < n_rows(); ++r) {
        SubsetIndex& si = index[subset_ids[r]];
        si.rows.push_back(r);
        si.rows_by_class[labels[r]].push_back(r);
        si.attr_count[sensitive[r]] += 1;
    }
}

// ---- CSV loading ------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

double parse_number(const std::string& cell, const std::string& col, int line_no) {
    char* end = nullptr;
    double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0')
        throw ValidationError("column '" + col + "' line " + std::to_string(line_no) +
                              ": '" + cell + "' is not numeric");
    return v;
}

int parse_binary(const std::string& cell, const std::string& col, int line_no) {
    double v = parse_number(cell, col, line_no);
    if (v != 0.0 && v != 1.0)
        throw ValidationError("column '" + col + "' line " + std::to_string(line_no) +
                              ": value " + cell + " is not in {0,1}");
    return static_cast<int>(v);
}

}  // namespace

DatasetTable load_csv(const std::string& path, const CsvSchema& schema, LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("load_csv: '" + path + "' is empty");
    const std::vector<std::string> header = split_line(line);

    auto col_of = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw SchemaError("load_csv: column '" + name + "' not found in '" + path + "'");
        return static_cast<int>(it - header.begin());
    };
    const int label_col = col_of(schema.label_col);
    const int sensitive_col = col_of(schema.sensitive_col);
    const int subset_col = col_of(schema.subset_col);

    std::vector<bool> categorical(header.size(), false);
    for (const auto& name : schema.categorical_cols) {
        int c = col_of(name);
        if (c == label_col || c == sensitive_col || c == subset_col)
            throw SchemaError("load_csv: categorical column '" + name + "' already has a role");
        categorical[c] = true;
    }

    std::vector<int> feature_cols;
    for (int c = 0; c < static_cast<int>(header.size()); ++c)
        if (c != label_col && c != sensitive_col && c != subset_col) feature_cols.push_back(c);

    // First pass: collect complete rows and the categorical vocabularies.
    std::vector<std::vector<std::string>> rows;
    std::vector<std::map<std::string, int>> vocab(header.size());
    LoadReport rep;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != header.size())
            throw SchemaError("load_csv: line " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " cells, header has " +
                              std::to_string(header.size()));
        ++rep.rows_read;
        bool missing = false;
        for (const auto& c : cells) missing = missing || c.empty();
        if (missing) {
            ++rep.rows_dropped_missing;
            continue;
        }
        for (int c : feature_cols)
            if (categorical[c]) vocab[c].emplace(cells[c], 0);
        rows.push_back(std::move(cells));
    }
    for (auto& v : vocab) {
        int k = 0;
        for (auto& [_, id] : v) id = k++;  // std::map: ids follow sorted value order
    }

    int width = 0;
    for (int c : feature_cols) width += categorical[c] ? static_cast<int>(vocab[c].size()) : 1;
    if (schema.sensitive_as_feature) width += 1;

    DatasetTable table;
    table.n_features = width;
    table.features.reserve(rows.size() * static_cast<size_t>(width));
    std::map<std::string, int> subset_map;

    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        const int ln = static_cast<int>(r) + 2;  // approximate; blank/dropped lines shift it
        for (int c : feature_cols) {
            if (categorical[c]) {
                std::vector<double> onehot(vocab[c].size(), 0.0);
                onehot[vocab[c].at(cells[c])] = 1.0;
                table.features.insert(table.features.end(), onehot.begin(), onehot.end());
            } else {
                table.features.push_back(parse_number(cells[c], header[c], ln));
            }
        }
        const int a = parse_binary(cells[sensitive_col], header[sensitive_col], ln);
        if (schema.sensitive_as_feature) table.features.push_back(static_cast<double>(a));
        table.labels.push_back(parse_binary(cells[label_col], header[label_col], ln));
        table.sensitive.push_back(a);
        auto [it, inserted] = subset_map.emplace(cells[subset_col], static_cast<int>(subset_map.size()));
        if (inserted) table.subset_names.push_back(cells[subset_col]);
        table.subset_ids.push_back(it->second);
    }
    if (schema.sensitive_as_feature) table.sensitive_feature_col = width - 1;
    if (table.n_rows() == 0) throw ValidationError("load_csv: no usable rows in '" + path + "'");
    table.build_index();
    if (report) *report = rep;
    return table;
}

void zscore_normalize(DatasetTable& table, const std::vector<int>& stat_subsets) {
    std::vector<bool> in_stats(table.n_subsets(), false);
    for (int s : stat_subsets) {
        if (s < 0 || s >= table.n_subsets())
            throw IndexError("zscore_normalize: subset " + std::to_string(s) + " out of range");
        in_stats[s] = true;
    }
    std::vector<int> stat_rows;
    for (int r = 0; r < table.n_rows(); ++r)
        if (in_stats[table.subset_ids[r]]) stat_rows.push_back(r);
    if (stat_rows.empty()) throw ValidationError("zscore_normalize: no rows in the statistics subsets");

    const int d = table.n_features;
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (int r : stat_rows)
        for (int j = 0; j < d; ++j) mean[j] += table.feature(r, j);
    for (int j = 0; j < d; ++j) mean[j] /= stat_rows.size();
    for (int r : stat_rows)
        for (int j = 0; j < d; ++j) {
            const double dv = table.feature(r, j) - mean[j];
            sd[j] += dv * dv;
        }
    for (int j = 0; j < d; ++j) sd[j] = std::sqrt(sd[j] / stat_rows.size());

    for (int r = 0; r < table.n_rows(); ++r)
        for (int j = 0; j < d; ++j) {
            double& v = table.features[static_cast<size_t>(r) * d + j];
            v = (v - mean[j]) / (sd[j] > 1e-12 ? sd[j] : 1.0);
        }
}

// ---- splits -----------------------------------------------------------------

SplitSpec make_split(int n_subsets, int n_train, int n_val, int n_test, uint64_t seed) {
    if (n_train < 1 || n_val < 0 || n_test < 1)
        throw ConfigError("make_split: need at least one train and one test subset");
    if (n_train + n_val + n_test > n_subsets)
        throw ConfigError("make_split: " + std::to_string(n_train + n_val + n_test) +
                          " subsets requested, only " + std::to_string(n_subsets) + " exist");
    std::vector<int> ids(n_subsets);
    for (int i = 0; i < n_subsets; ++i) ids[i] = i;
    Rng rng(Rng::mix(seed, 0x5917ULL));
    rng.shuffle(ids);
    SplitSpec split;
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test.assign(ids.begin() + n_train + n_val, ids.begin() + n_train + n_val + n_test);
    return split;
}

void validate_split(const SplitSpec& split, int n_subsets) {
    std::vector<int> seen(n_subsets, 0);
    auto check = [&](const std::vector<int>& part, const char* name) {
        for (int s : part) {
            if (s < 0 || s >= n_subsets)
                throw ConfigError(std::string("split: ") + name + " subset " + std::to_string(s) +
                                  " out of range [0," + std::to_string(n_subsets) + ")");
            if (seen[s]++)
                throw ConfigError(std::string("split: subset ") + std::to_string(s) +
                                  " appears in more than one part");
        }
    };
    check(split.train, "train");
    check(split.val, "val");
    check(split.test, "test");
    if (split.train.empty() || split.test.empty())
        throw ConfigError("split: train and test must be non-empty");
}

// ---- episode sampling ---------------------------------------------------------

SampleSet gather_rows(const DatasetTable& table, const std::vector<int>& rows) {
    SampleSet set;
    set.rows = rows;
    set.labels.reserve(rows.size());
    set.attrs.reserve(rows.size());
    std::vector<double> x;
    x.reserve(rows.size() * static_cast<size_t>(table.n_features));
    for (int r : rows) {
        if (r < 0 || r >= table.n_rows())
            throw IndexError("gather_rows: row " + std::to_string(r) + " out of range");
        set.labels.push_back(table.labels[r]);
        set.attrs.push_back(table.sensitive[r]);
        for (int j = 0; j < table.n_features; ++j) x.push_back(table.feature(r, j));
    }
    set.x = Tensor::make(static_cast<int>(rows.size()), table.n_features, std::move(x));
    return set;
}

namespace {

struct Eligibility {
    std::vector<int> ok;
    int lacking_class = 0, lacking_groups = 0, lacking_capacity = 0;
};

Eligibility eligible_subsets(const DatasetTable& table, const std::vector<int>& subsets, int k_shot,
                             int query_size) {
    Eligibility e;
    for (int s : subsets) {
        if (s < 0 || s >= table.n_subsets())
            throw IndexError("sample_episode: subset " + std::to_string(s) + " out of range");
        const auto& si = table.index[s];
        const bool classes = static_cast<int>(si.rows_by_class[0].size()) >= k_shot &&
                             static_cast<int>(si.rows_by_class[1].size()) >= k_shot;
        const bool groups = si.attr_count[0] > 0 && si.attr_count[1] > 0;
        const bool capacity = static_cast<int>(si.rows.size()) >= 2 * k_shot + query_size;
        if (!classes) ++e.lacking_class;
        if (!groups) ++e.lacking_groups;
        if (!capacity) ++e.lacking_capacity;
        if (classes && groups && capacity) e.ok.push_back(s);
    }
    return e;
}

std::vector<int> pick_from(const std::vector<int>& pool, int k, Rng& rng) {
    auto idx = rng.sample_without_replacement(static_cast<int>(pool.size()), k);
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = pool[idx[i]];
    return out;
}

}  // namespace

Episode sample_episode(const DatasetTable& table, const std::vector<int>& subsets, int k_shot,
                       int query_size, Rng& rng) {
    if (table.index.empty()) throw StateError("sample_episode: table index not built");
    if (k_shot < 1 || query_size < 1) throw ConfigError("sample_episode: k_shot and query_size must be >= 1");
    auto e = eligible_subsets(table, subsets, k_shot, query_size);
    if (e.ok.empty())
        throw SamplingError(
            "sample_episode: no eligible subset among " + std::to_string(subsets.size()) + " (" +
            std::to_string(e.lacking_class) + " lack " + std::to_string(k_shot) + " rows per class, " +
            std::to_string(e.lacking_groups) + " lack both sensitive groups, " +
            std::to_string(e.lacking_capacity) + " lack room for a " + std::to_string(query_size) +
            "-row query)");

    const int s = e.ok[rng.uniform_int(static_cast<int>(e.ok.size()))];
    const auto& si = table.index[s];

    std::vector<int> support_rows;
    std::vector<bool> taken(table.n_rows(), false);
    for (int c = 0; c < 2; ++c)
        for (int r : pick_from(si.rows_by_class[c], k_shot, rng)) {
            support_rows.push_back(r);
            taken[r] = true;
        }

    std::vector<int> pool;
    for (int r : si.rows)
        if (!taken[r]) pool.push_back(r);

    std::vector<int> query_rows;
    constexpr int kMaxAttempts = 1000;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        auto candidate = pick_from(pool, query_size, rng);
        bool has[2] = {false, false};
        for (int r : candidate) has[table.sensitive[r]] = true;
        if (has[0] && has[1]) {
            query_rows = std::move(candidate);
            break;
        }
    }
    if (query_rows.empty())
        throw SamplingError("sample_episode: query covering both sensitive groups not found in " +
                            std::to_string(kMaxAttempts) + " attempts (subset " +
                            table.subset_names[s] + ")");

    Episode ep;
    ep.subset_id = s;
    ep.support = gather_rows(table, support_rows);
    ep.query = gather_rows(table, query_rows);
    return ep;
}

std::vector<int> sample_support_rows(const DatasetTable& table, const std::vector<int>& subsets,
                                     int k_shot, Rng& rng) {
    if (table.index.empty()) throw StateError("sample_support_rows: table index not built");
    std::vector<int> ok;
    for (int s : subsets) {
        const auto& si = table.index[s];
        if (static_cast<int>(si.rows_by_class[0].size()) >= k_shot &&
            static_cast<int>(si.rows_by_class[1].size()) >= k_shot)
            ok.push_back(s);
    }
    if (ok.empty())
        throw SamplingError("sample_support_rows: no subset has " + std::to_string(k_shot) +
                            " rows per class");
    const int s = ok[rng.uniform_int(static_cast<int>(ok.size()))];
    std::vector<int> rows;
    for (int c = 0; c < 2; ++c)
        for (int r : pick_from(table.index[s].rows_by_class[c], k_shot, rng)) rows.push_back(r);
    return rows;
}

// ---- synthetic data -----------------------------------------------------------

DatasetTable make_synthetic(const SynthSpec& spec) {
    if (spec.delta < 0.0) throw ValidationError("make_synthetic: delta must be >= 0");
    if (spec.p_sensitive <= 0.0 || spec.p_sensitive >= 1.0)
        throw ValidationError("make_synthetic: p_sensitive must lie strictly inside (0,1)");
    if (spec.label_noise < 0.0 || spec.label_noise >= 1.0)
        throw ValidationError("make_synthetic: label_noise must lie in [0,1)");
    if (spec.n_samples < 1 || spec.n_subsets < 1 || spec.n_features < 1)
        throw ValidationError("make_synthetic: sample, subset and feature counts must be positive");
    if (spec.signal_width > spec.n_features || spec.bias_offset + spec.bias_width > spec.n_features)
        throw ValidationError("make_synthetic: signal/bias blocks exceed n_features");
    if (spec.class_sep < 0.0) throw ValidationError("make_synthetic: class_sep must be >= 0");
    if (spec.label_bias_gain < 0.0)
        throw ValidationError("make_synthetic: label_bias_gain must be >= 0");

    Rng rng(spec.seed);

    const int n_flip =
        static_cast<int>(std::lround(spec.bias_flip_fraction * spec.n_subsets));
    std::vector<int> signs(spec.n_subsets, 1);
    for (int s = 0; s < n_flip && s < spec.n_subsets; ++s) signs[s] = -1;
    {
        std::vector<int> order(spec.n_subsets);
        for (int s = 0; s < spec.n_subsets; ++s) order[s] = s;
        rng.shuffle(order);
        std::vector<int> shuffled(spec.n_subsets);
        for (int s = 0; s < spec.n_subsets; ++s) shuffled[order[s]] = signs[s];
        signs = std::move(shuffled);
    }

    std::vector<std::vector<double>> centers(spec.n_subsets, std::vector<double>(spec.n_features));
    for (auto& c : centers)
        for (double& v : c) v = rng.normal(0.0, spec.subset_jitter);

    const int width = spec.n_features + (spec.sensitive_as_feature ? 1 : 0);
    DatasetTable table;
    table.n_features = width;
    table.features.reserve(static_cast<size_t>(spec.n_samples) * width);
    for (int s = 0; s < spec.n_subsets; ++s) table.subset_names.push_back("s" + std::to_string(s));

    for (int i = 0; i < spec.n_samples; ++i) {
        const int s = i % spec.n_subsets;
        const int a = rng.bernoulli(spec.p_sensitive) ? 1 : 0;
        const double shift = signs[s] * (2 * a - 1) * spec.delta / 2.0;
        // The label leans toward the group whose biased block is shifted up,
        // so A and Y are correlated within a subset whenever delta > 0.
        const double p_pos = 0.5 * std::erfc(-spec.label_bias_gain * shift / std::sqrt(2.0));
        const int y_true = rng.bernoulli(p_pos) ? 1 : 0;
        int y = y_true;
        if (spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise)) y = 1 - y;
        for (int j = 0; j < spec.n_features; ++j) {
            double mu = centers[s][j];
            if (j < spec.signal_width) mu += (2 * y_true - 1) * spec.class_sep;
            if (j >= spec.bias_offset && j < spec.bias_offset + spec.bias_width) mu += shift;
            table.features.push_back(rng.normal(mu, 1.0));
        }
        if (spec.sensitive_as_feature) table.features.push_back(static_cast<double>(a));
        table.labels.push_back(y);
        table.sensitive.push_back(a);
        table.subset_ids.push_back(s);
    }
    if (spec.sensitive_as_feature) table.sensitive_feature_col = width - 1;
    table.build_index();
    return table;
}

// ---- output -------------------------------------------------------------------

void write_csv(const DatasetTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("write_csv: cannot open '" + path + "' for writing");
    // The mirror column is reconstructed at load time, so it is not written.
    std::vector<int> cols;
    for (int j = 0; j < table.n_features; ++j)
        if (!table.sensitive_feature_col || j != *table.sensitive_feature_col) cols.push_back(j);
    for (size_t j = 0; j < cols.size(); ++j) out << "f" << j << ",";
    out << "label,sensitive,subset\n";
    char buf[64];
    for (int r = 0; r < table.n_rows(); ++r) {
        for (int j : cols) {
            std::snprintf(buf, sizeof buf, "%.17g", table.feature(r, j));
            out << buf << ",";
        }
        out << table.labels[r] << "," << table.sensitive[r] << ","
            << table.subset_names[table.subset_ids[r]] << "\n";
    }
    if (!out) throw IoError("write_csv: write to '" + path + "' failed");
}

void write_synth_sidecar(const SynthSpec& spec, const std::string& csv_path) {
    nlohmann::json j{{"n_samples", spec.n_samples},
                     {"n_features", spec.n_features},
                     {"n_subsets", spec.n_subsets},
                     {"delta", spec.delta},
                     {"class_sep", spec.class_sep},
                     {"label_bias_gain", spec.label_bias_gain},
                     {"p_sensitive", spec.p_sensitive},
                     {"bias_flip_fraction", spec.bias_flip_fraction},
                     {"subset_jitter", spec.subset_jitter},
                     {"label_noise", spec.label_noise},
                     {"signal_width", spec.signal_width},
                     {"bias_offset", spec.bias_offset},
                     {"bias_width", spec.bias_width},
                     {"sensitive_as_feature", spec.sensitive_as_feature},
                     {"seed", spec.seed}};
    std::ofstream out(csv_path + ".json");
    if (!out) throw IoError("write_synth_sidecar: cannot open '" + csv_path + ".json'");
    out << j.dump(2) << "\n";
}

}  // namespace feast
