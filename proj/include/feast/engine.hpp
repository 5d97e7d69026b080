#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "feast/core.hpp"
#include "feast/dataset.hpp"
#include "feast/fairness.hpp"
#include "feast/model.hpp"
#include "feast/optim.hpp"
#include "feast/rng.hpp"

namespace feast {

// Method variants. The *_no_* forms ablate the alignment term, the learned
// candidate selection, or both; maml drops every fairness component; m_maml
// additionally blinds the model to the mirrored sensitive feature column.
enum class Variant { feast, feast_no_mi, feast_no_select, feast_no_both, maml, m_maml };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct EngineConfig {
    double alpha = 0.01;        // inner-loop step size
    double beta1 = 1e-3;        // classifier meta learning rate
    double beta2 = 1e-3;        // generator meta learning rate
    double weight_decay = 1e-4;
    int tau = 10;               // inner adaptation steps

    double lambda = 1.0;        // fairness penalty weight inside L_R
    double gamma = 0.5;         // auxiliary term weight
    RegKind reg = RegKind::dp;

    int k_shot = 5;
    int query_size = 10;
    int aux_size = 10;

    int steps = 500;            // meta-training steps
    int test_tasks = 500;
    int dict_capacity = 64;

    Variant variant = Variant::feast;
    bool keys_at_adapted = false;   // key candidates at adapted instead of meta parameters
    bool sgd_meta = false;          // test hook: plain SGD instead of Adam for meta updates
    double divergence_threshold = 1e6;
    uint64_t seed = 0;

    void validate() const;
    bool uses_dictionary() const {
        return variant != Variant::maml && variant != Variant::m_maml;
    }
    bool uses_selection() const {
        return variant == Variant::feast || variant == Variant::feast_no_mi;
    }
    bool uses_mi() const {
        return variant == Variant::feast || variant == Variant::feast_no_select;
    }
    double effective_lambda() const { return uses_dictionary() ? lambda : 0.0; }
    double effective_gamma() const { return uses_dictionary() ? gamma : 0.0; }
    AdaptLossConfig adapt_loss_config() const {
        return {effective_lambda(), effective_gamma(), reg, uses_mi()};
    }
};

// Everything train() advances; checkpoints serialize all of it so a resumed
// run continues the exact trajectory.
struct TrainState {
    ClassifierParams theta;
    GeneratorParams phi;
    AdamState adam_f, adam_g;
    CandidateDictionary dict;
    Rng rng;
    long long step = 0;
    std::vector<double> query_loss_history;  // meta objective per step
    std::vector<double> gen_loss_history;    // direction-matching loss per step (selection variants)
    int skipped_generator_updates = 0;

    explicit TrainState(const EngineConfig& cfg) : dict(cfg.dict_capacity), rng(cfg.seed) {}
};

// Returns a copy of the table adjusted for the variant: m_maml zeroes the
// mirrored sensitive feature column. Call once before training/evaluation.
DatasetTable prepare_table(const DatasetTable& table, Variant variant);

// Initializes parameters and, for dictionary variants, fills the dictionary
// with random candidates from the training subsets, all from cfg.seed.
TrainState make_initial_state(const EngineConfig& cfg, const DatasetTable& table,
                              const SplitSpec& split);

// tau plain gradient steps on the adaptation objective, starting from a copy;
// the input parameters are never touched. Non-finite losses or gradients, or
// magnitudes beyond cfg.divergence_threshold, raise DivergenceError carrying
// the failing inner step.
ClassifierParams adapt(const ClassifierParams& theta, const SampleSet& support,
                       const SampleSet* aux, const EngineConfig& cfg);

// First-order meta update: the adaptation objective's gradient on the query
// set, taken at the adapted parameters, is applied to theta through Adam
// (or plain SGD under the test hook). Returns the query loss value.
double meta_update_classifier(ClassifierParams& theta, const ClassifierParams& theta_tau,
                              const SampleSet& query, const SampleSet* aux, const EngineConfig& cfg,
                              AdamState& adam);

// Fits the generator output toward the flat gradient of the regularized loss
// of the support set at the adapted parameters. `direction` must be the live
// generator output for this support set (its graph is walked here). Returns
// the loss value, or a negative value if the update was skipped because the
// target gradient was not finite.
double meta_update_generator(GeneratorParams& phi, const TensorPtr& direction,
                             const ClassifierParams& theta_tau, const SampleSet& support,
                             const EngineConfig& cfg, AdamState& adam);

// Runs meta-training from state.step to cfg.steps. On divergence the state is
// left at the last completed step and DivergenceError propagates, so the
// caller can checkpoint and exit.
void train(TrainState& state, const EngineConfig& cfg, const DatasetTable& table,
           const SplitSpec& split);

// Evaluates cfg.test_tasks few-shot tasks drawn from the given subsets. Task
// t's episode depends only on (cfg.seed, t, table, subsets), never on the
// variant, so runs with different variants see identical tasks. The state is
// not mutated.
MetricsReport evaluate(const TrainState& state, const EngineConfig& cfg, const DatasetTable& table,
                       const std::vector<int>& subsets);

}  // namespace feast
