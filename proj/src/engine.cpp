#include "feast/engine.hpp"

#include <cmath>
#include <string>

#include "feast/errors.hpp"

namespace feast {

Variant variant_from_string(const std::string& s) {
    if (s == "feast") return Variant::feast;
    if (s == "feast_no_mi") return Variant::feast_no_mi;
    if (s == "feast_no_select") return Variant::feast_no_select;
    if (s == "feast_no_both") return Variant::feast_no_both;
    if (s == "maml") return Variant::maml;
    if (s == "m_maml") return Variant::m_maml;
    throw ConfigError("unknown variant '" + s +
                      "' (expected feast, feast_no_mi, feast_no_select, feast_no_both, maml, m_maml)");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::feast: return "feast";
        case Variant::feast_no_mi: return "feast_no_mi";
        case Variant::feast_no_select: return "feast_no_select";
        case Variant::feast_no_both: return "feast_no_both";
        case Variant::maml: return "maml";
        case Variant::m_maml: return "m_maml";
    }
    throw ConfigError("unknown variant value");
}

void EngineConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
    };
    positive(alpha, "alpha");
    positive(beta1, "beta1");
    positive(beta2, "beta2");
    positive(divergence_threshold, "divergence_threshold");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (gamma < 0.0) throw ConfigError("gamma must be >= 0");
    if (tau < 1) throw ConfigError("tau must be >= 1");
    if (k_shot < 1) throw ConfigError("k_shot must be >= 1");
    if (query_size < 2) throw ConfigError("query_size must be >= 2 to cover both sensitive groups");
    if (aux_size < 1) throw ConfigError("aux_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (test_tasks < 1) throw ConfigError("test_tasks must be >= 1");
    if (dict_capacity < 1) throw ConfigError("dict_capacity must be >= 1");
}

DatasetTable prepare_table(const DatasetTable& table, Variant variant) {
    DatasetTable out = table;
    if (variant == Variant::m_maml && out.sensitive_feature_col) {
        const int col = *out.sensitive_feature_col;
        for (int r = 0; r < out.n_rows(); ++r)
            out.features[static_cast<size_t>(r) * out.n_features + col] = 0.0;
    }
    return out;
}

namespace {

double grad_sq_norm(const std::vector<TensorPtr>& params) {
    double s = 0.0;
    for (const auto& p : params)
        for (double g : p->grad) s += g * g;
    return s;
}

void check_divergence(double loss, const std::vector<TensorPtr>& params, double threshold,
                      const char* where, int step) {
    if (!std::isfinite(loss) || std::fabs(loss) > threshold)
        throw DivergenceError(std::string(where) + ": loss " + std::to_string(loss) +
                                  " beyond threshold at step " + std::to_string(step),
                              step);
    const double gn = std::sqrt(grad_sq_norm(params));
    if (!std::isfinite(gn) || gn > threshold)
        throw DivergenceError(std::string(where) + ": gradient norm " + std::to_string(gn) +
                                  " beyond threshold at step " + std::to_string(step),
                              step);
}

std::vector<TensorPtr> grad_tensors(const std::vector<TensorPtr>& params) {
    std::vector<TensorPtr> g;
    g.reserve(params.size());
    for (const auto& p : params) g.push_back(Tensor::make(p->rows, p->cols, p->grad));
    return g;
}

ClassifierParams gd_step(const ClassifierParams& p, double alpha) {
    auto next = p.clone();
    auto src = p.all();
    auto dst = next.all();
    for (size_t i = 0; i < src.size(); ++i) {
        for (int k = 0; k < src[i]->size(); ++k)
            dst[i]->values[k] = src[i]->values[k] - alpha * src[i]->grad[k];
        dst[i]->check_finite("adapt");
    }
    return next;
}

}  // namespace

ClassifierParams adapt(const ClassifierParams& theta, const SampleSet& support,
                       const SampleSet* aux, const EngineConfig& cfg) {
    auto cur = theta.clone();
    const auto lcfg = cfg.adapt_loss_config();
    for (int t = 1; t <= cfg.tau; ++t) {
        zero_grad(cur.all());
        TensorPtr loss;
        try {
            loss = fairness_adaptation_loss(support, aux, cur, lcfg);
            backward(loss);
        } catch (const NumericsError& e) {
            throw DivergenceError("adapt: " + std::string(e.what()) + " at inner step " +
                                      std::to_string(t),
                                  t);
        }
        check_divergence(loss->item(), cur.all(), cfg.divergence_threshold, "adapt", t);
        cur = gd_step(cur, cfg.alpha);
    }
    return cur;
}

double meta_update_classifier(ClassifierParams& theta, const ClassifierParams& theta_tau,
                              const SampleSet& query, const SampleSet* aux, const EngineConfig& cfg,
                              AdamState& adam) {
    auto probe = theta_tau.clone();
    const auto lcfg = cfg.adapt_loss_config();
    TensorPtr loss;
    try {
        loss = fairness_adaptation_loss(query, aux, probe, lcfg);
        backward(loss);
    } catch (const NumericsError& e) {
        throw DivergenceError("meta_update_classifier: " + std::string(e.what()), 0);
    }
    check_divergence(loss->item(), probe.all(), cfg.divergence_threshold, "meta_update_classifier", 0);

    auto grads = grad_tensors(probe.all());
    if (cfg.sgd_meta)
        sgd_step(cfg.beta1, cfg.weight_decay, theta.all(), grads);
    else
        adam_step(adam, theta.all(), grads);
    return loss->item();
}

double meta_update_generator(GeneratorParams& phi, const TensorPtr& direction,
                             const ClassifierParams& theta_tau, const SampleSet& support,
                             const EngineConfig& cfg, AdamState& adam) {
    std::vector<double> target_flat;
    try {
        auto probe = theta_tau.clone();
        auto loss_r = regularized_loss(support, probe, cfg.effective_lambda(), cfg.reg);
        backward(loss_r);
        target_flat = flatten_grads(probe);
    } catch (const NumericsError&) {
        return -1.0;  // degenerate episode, caller records the skip
    }
    for (double v : target_flat)
        if (!std::isfinite(v)) return -1.0;

    const int target_width = static_cast<int>(target_flat.size());
    auto target = Tensor::make(1, target_width, std::move(target_flat));
    zero_grad(phi.all());
    TensorPtr loss;
    try {
        loss = sum_squares(sub(direction, target));
        backward(loss);
    } catch (const NumericsError& e) {
        throw DivergenceError("meta_update_generator: " + std::string(e.what()), 0);
    }
    check_divergence(loss->item(), phi.all(), cfg.divergence_threshold, "meta_update_generator", 0);
    if (cfg.sgd_meta)
        sgd_step(cfg.beta2, cfg.weight_decay, phi.all(), grad_tensors(phi.all()));
    else
        adam_step(adam, phi.all());
    return loss->item();
}

TrainState make_initial_state(const EngineConfig& cfg, const DatasetTable& table,
                              const SplitSpec& split) {
    cfg.validate();
    validate_split(split, table.n_subsets());
    TrainState state(cfg);
    state.theta = ClassifierParams::init(table.n_features, state.rng);
    state.phi = GeneratorParams::init(d_theta(table.n_features), state.rng);
    state.adam_f = AdamState(cfg.beta1, cfg.weight_decay);
    state.adam_g = AdamState(cfg.beta2, cfg.weight_decay);
    if (cfg.uses_dictionary())
        init_dictionary(state.dict, table, split.train, state.theta, cfg.effective_lambda(), cfg.reg,
                        cfg.k_shot, cfg.aux_size, state.rng);
    return state;
}

void train(TrainState& state, const EngineConfig& cfg, const DatasetTable& table,
           const SplitSpec& split) {
    cfg.validate();
    validate_split(split, table.n_subsets());
    while (state.step < cfg.steps) {
        const long long step = state.step + 1;
        Episode ep = sample_episode(table, split.train, cfg.k_shot, cfg.query_size, state.rng);

        SampleSet aux_set;
        const SampleSet* aux = nullptr;
        TensorPtr direction;
        if (cfg.uses_dictionary() && state.dict.size() > 0) {
            if (cfg.uses_selection()) {
                auto emb = detach(classifier_forward(state.theta, ep.support.x).embeddings);
                direction = generator_forward(state.phi, emb);
                aux_set = gather_rows(table, state.dict.select(direction->values).rows);
            } else {
                aux_set = gather_rows(table, state.dict.at(state.rng.uniform_int(state.dict.size())).rows);
            }
            aux = &aux_set;
        }

        try {
            auto theta_tau = adapt(state.theta, ep.support, aux, cfg);
            const double qloss =
                meta_update_classifier(state.theta, theta_tau, ep.query, aux, cfg, state.adam_f);
            state.query_loss_history.push_back(qloss);

            if (cfg.uses_selection()) {
                const double gloss =
                    meta_update_generator(state.phi, direction, theta_tau, ep.support, cfg, state.adam_g);
                if (gloss < 0.0)
                    ++state.skipped_generator_updates;
                state.gen_loss_history.push_back(gloss);
            }

            if (cfg.uses_dictionary()) {
                const ClassifierParams& key_params = cfg.keys_at_adapted ? theta_tau : state.theta;
                enqueue_candidate(state.dict, table, ep.support.rows, key_params,
                                  cfg.effective_lambda(), cfg.reg, cfg.aux_size, state.rng, step);
            }
        } catch (const DivergenceError& e) {
            throw DivergenceError("train step " + std::to_string(step) + ": " + e.what(),
                                  static_cast<int>(step));
        }
        state.step = step;
    }
}

MetricsReport evaluate(const TrainState& state, const EngineConfig& cfg, const DatasetTable& table,
                       const std::vector<int>& subsets) {
    cfg.validate();
    MetricsReport report;
    for (int t = 0; t < cfg.test_tasks; ++t) {
        // Episodes depend only on (seed, task index); candidate choice for the
        // random-selection variants draws from a separate stream so the task
        // sequence stays identical across variants.
        Rng rng_task(Rng::mix(cfg.seed, 0xE9A1ULL, static_cast<uint64_t>(t)));
        Episode ep = sample_episode(table, subsets, cfg.k_shot, cfg.query_size, rng_task);

        SampleSet aux_set;
        const SampleSet* aux = nullptr;
        if (cfg.uses_dictionary() && state.dict.size() > 0) {
            if (cfg.uses_selection()) {
                auto emb = detach(classifier_forward(state.theta, ep.support.x).embeddings);
                auto direction = generator_forward(state.phi, emb);
                aux_set = gather_rows(table, state.dict.select(direction->values).rows);
            } else {
                Rng rng_sel(Rng::mix(cfg.seed, 0x5E1EC7ULL, static_cast<uint64_t>(t)));
                aux_set = gather_rows(table, state.dict.at(rng_sel.uniform_int(state.dict.size())).rows);
            }
            aux = &aux_set;
        }

        auto theta_tau = adapt(state.theta, ep.support, aux, cfg);
        auto out = classifier_forward(theta_tau, ep.query.x);

        const int m = out.probs->rows;
        std::vector<double> scores(m);
        int correct = 0;
        for (int i = 0; i < m; ++i) {
            scores[i] = out.probs->at(i, 1);
            const int pred = scores[i] > 0.5 ? 1 : 0;
            if (pred == ep.query.labels[i]) ++correct;
        }

        TaskMetrics row;
        row.task_id = t;
        row.subset_id = ep.subset_id;
        row.acc = static_cast<double>(correct) / m;
        auto grouped = GroupedScores::from(scores, ep.query.labels, ep.query.attrs);
        row.dp = delta_dp(grouped);
        try {
            auto eo = delta_eo(grouped);
            row.eo = eo.value;
            row.partial = eo.partial;
        } catch (const MetricError&) {
            row.eo_valid = false;
            row.partial = true;
        }
        report.tasks.push_back(row);
    }
    report.finalize();
    return report;
}

}  // namespace feast
