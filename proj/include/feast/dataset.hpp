#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "feast/rng.hpp"
#include "feast/tensor.hpp"

namespace feast {

// Column-aligned sample store. Labels and sensitive attributes are binary;
// subset_id partitions rows into the units that episodes are drawn from.
struct DatasetTable {
    int n_features = 0;
    std::vector<double> features;        // row-major, n_rows x n_features
    std::vector<int> labels;             // 0/1
    std::vector<int> sensitive;          // 0/1
    std::vector<int> subset_ids;         // dense ids, 0..n_subsets-1
    std::vector<std::string> subset_names;
    // Index of the feature column mirroring the sensitive attribute, if the
    // schema asked for one. Used by the variant that blinds the model to it.
    std::optional<int> sensitive_feature_col;

    int n_rows() const { return static_cast<int>(labels.size()); }
    int n_subsets() const { return static_cast<int>(subset_names.size()); }
    double feature(int row, int col) const { return features[static_cast<size_t>(row) * n_features + col]; }

    // Per-subset row lists, rebuilt by build_index() after any mutation.
    struct SubsetIndex {
        std::vector<int> rows;
        std::vector<int> rows_by_class[2];
        int attr_count[2] = {0, 0};
    };
    std::vector<SubsetIndex> index;
    void build_index();
};

// User-declared roles for the CSV columns. Everything not named here is a
// numeric feature. Columns in categorical_cols are one-hot expanded.
struct CsvSchema {
    std::string label_col;
    std::string sensitive_col;
    std::string subset_col;
    std::vector<std::string> categorical_cols;
    // Mirror the sensitive attribute as an extra feature column (it then gets
    // z-scored like any feature).
    bool sensitive_as_feature = false;
};

struct LoadReport {
    int rows_read = 0;
    int rows_dropped_missing = 0;
};

// Reads a comma-separated file with a header row. Rows containing empty cells
// are dropped (counted in the report); non-numeric values in numeric columns,
// or label/sensitive values outside {0,1}, raise ValidationError. Features are
// NOT normalized here; call zscore_normalize once the split is known.
DatasetTable load_csv(const std::string& path, const CsvSchema& schema, LoadReport* report = nullptr);

// Z-scores every feature column using statistics from rows whose subset is in
// stat_subsets. Near-constant columns (sd <= 1e-12) are centered only.
void zscore_normalize(DatasetTable& table, const std::vector<int>& stat_subsets);

// Subset id partition. Train/val/test must be disjoint.
struct SplitSpec {
    std::vector<int> train, val, test;
};

SplitSpec make_split(int n_subsets, int n_train, int n_val, int n_test, uint64_t seed);
void validate_split(const SplitSpec& split, int n_subsets);

// A set of samples materialized from table rows. x carries no grad.
struct SampleSet {
    TensorPtr x;
    std::vector<int> labels;
    std::vector<int> attrs;
    std::vector<int> rows;  // source rows in the table
};

SampleSet gather_rows(const DatasetTable& table, const std::vector<int>& rows);

struct Episode {
    SampleSet support;
    SampleSet query;
    int subset_id = -1;
};

// Draws one episode from a single uniformly chosen eligible subset: k_shot
// samples per class into the support, then query_size of the remaining rows,
// all without replacement. The query must contain both sensitive groups; it
// is redrawn up to 1000 times to satisfy that. No eligible subset, or an
// exhausted redraw budget, raises SamplingError naming the constraint.
Episode sample_episode(const DatasetTable& table, const std::vector<int>& subsets, int k_shot,
                       int query_size, Rng& rng);

// Support-only draw used to seed the candidate dictionary.
std::vector<int> sample_support_rows(const DatasetTable& table, const std::vector<int>& subsets,
                                     int k_shot, Rng& rng);

// Synthetic binary-classification generator. Class identity shifts the
// feature block [0, signal_width); the sensitive attribute shifts the block
// [bias_offset, bias_offset + bias_width) by +/- delta/2, with a per-subset
// sign so subsets disagree about the direction of the bias. Subset centers
// get small Gaussian jitter so subsets are distinguishable.
//
// Labels lean toward the group whose biased block is shifted upward:
// P(y=1 | a, subset) = Phi(label_bias_gain * sign * (2a-1) * delta / 2), so
// the sensitive attribute and the label are correlated within each subset
// exactly when delta > 0 and label_bias_gain > 0, and independent when
// either is zero. A classifier fit on such data inherits a group-dependent
// positive rate unless something counteracts it.
struct SynthSpec {
    int n_samples = 8000;
    int n_features = 12;
    int n_subsets = 12;
    double delta = 2.0;               // group gap on the biased block, in sd units
    double class_sep = 1.0;           // class mean offset on the signal block
    double label_bias_gain = 0.75;    // how strongly the label leans toward the shifted side
    double p_sensitive = 0.5;         // marginal P(A = 1)
    double bias_flip_fraction = 0.5;  // fraction of subsets with inverted bias sign
    double subset_jitter = 0.3;       // sd of per-subset center offsets
    double label_noise = 0.0;         // probability of flipping a label
    int signal_width = 4;
    int bias_offset = 2;
    int bias_width = 4;
    bool sensitive_as_feature = true;
    uint64_t seed = 0;
};

DatasetTable make_synthetic(const SynthSpec& spec);

// Writes a table back out as CSV (f0..fN, label, sensitive, subset), plus the
// generating parameters as a .json sidecar when spec is provided.
void write_csv(const DatasetTable& table, const std::string& path);
void write_synth_sidecar(const SynthSpec& spec, const std::string& csv_path);

}  // namespace feast
