#pragma once

#include <string>

#include "feast/engine.hpp"

namespace feast {

// Checkpoint directory layout:
//   manifest.json   step, config echo, rng state, dictionary index (enqueue
//                   steps + table row ids), Adam step counters, loss history
//   theta.bin       classifier parameters, flat order, little-endian float64
//   phi.bin         generator parameters, same encoding
//   adam_f.bin      classifier Adam moments (all m, then all v)
//   adam_g.bin      generator Adam moments
//   dict_keys.bin   dictionary key matrix, row per candidate
// Everything train() advances is included, so loading reproduces the exact
// trajectory the saved run would have continued with.
void save_checkpoint(const std::string& dir, const TrainState& state, const EngineConfig& cfg,
                     const std::string& data_fingerprint = "");

struct LoadedCheckpoint {
    TrainState state;
    EngineConfig cfg;
    std::string data_fingerprint;
    explicit LoadedCheckpoint(const EngineConfig& c) : state(c), cfg(c) {}
};

// Restores a checkpoint against the table it was trained on. Table shape (and
// fingerprint, when both sides have one) must match, since dictionary entries
// reference table rows.
LoadedCheckpoint load_checkpoint(const std::string& dir, const DatasetTable& table,
                                 const std::string& data_fingerprint = "");

// Little-endian float64 blob helpers, shared with the CLI.
void write_doubles(const std::string& path, const std::vector<double>& values);
std::vector<double> read_doubles(const std::string& path);

}  // namespace feast
