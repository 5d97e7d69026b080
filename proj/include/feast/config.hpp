#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feast/engine.hpp"

namespace feast {

// Full configuration of a run: training/adaptation hyperparameters (engine),
// the data source and its column schema, the subset split, and output control.
//
// Sources, in increasing precedence: built-in defaults, a JSON config file,
// command-line flags. Unknown JSON keys are rejected by name.
struct RunConfig {
    EngineConfig engine;

    // Data source.
    std::string data;                           // CSV path (required for train/eval)
    std::string label_col = "label";
    std::string sensitive_col = "sensitive";
    std::string subset_col = "subset";
    std::vector<std::string> categorical_cols;  // one-hot encoded feature columns
    bool sensitive_as_feature = false;          // mirror sensitive attr as a feature column

    // Subset split: explicit id lists win; otherwise counts are drawn with
    // split_seed from the subsets present in the data (train first, then val,
    // then test, in shuffled order).
    std::vector<int> train_subsets;
    std::vector<int> val_subsets;
    std::vector<int> test_subsets;
    int n_train_subsets = 0;
    int n_val_subsets = 0;
    int n_test_subsets = 0;
    uint64_t split_seed = 0;

    // Output / run control.
    std::string out_dir;
    bool force = false;     // allow writing into an existing non-empty out_dir
    std::string resume;     // checkpoint directory to resume training from

    // Sweep grids (empty list = use the single base value).
    std::vector<std::string> sweep_variants;
    std::vector<double> sweep_gammas;
    std::vector<int> sweep_aux_sizes;
    std::vector<int> sweep_k_shots;
    int jobs = 1;

    bool seed_provided = false;  // train/eval require an explicit seed
};

// Applies the JSON object in `text` onto `cfg`. Throws ConfigError on malformed
// JSON, unknown keys (named in the message), or wrongly-typed values.
void apply_config_json(RunConfig& cfg, const std::string& text);

// Reads the file and applies it via apply_config_json.
void apply_config_file(RunConfig& cfg, const std::string& path);

// Serializes the fully-resolved configuration (every key, resolved values) as
// pretty-printed JSON; written into the run directory for reproducibility.
std::string run_config_json(const RunConfig& cfg);

// Resolves the subset split against a table with n_subsets subsets: explicit
// lists if given, otherwise counts + split_seed; validates ranges/disjointness.
SplitSpec resolve_split(const RunConfig& cfg, int n_subsets);

// Schema view of the data columns in `cfg`.
CsvSchema schema_of(const RunConfig& cfg);

}  // namespace feast
