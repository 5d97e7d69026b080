#include "feast/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "feast/errors.hpp"

namespace feast {

std::vector<double> cond_prob_support_given_aux(const std::vector<std::vector<double>>& support_probs,
                                                const std::vector<int>& support_attrs, int aux_label,
                                                int aux_attr, bool* degenerate) {
    if (support_probs.size() != support_attrs.size())
        throw ShapeError("cond_prob_support_given_aux: probs/attrs lengths differ");
    std::vector<double> w(support_probs.size(), 0.0);
    double denom = 0.0;
    for (size_t i = 0; i < support_probs.size(); ++i) {
        if (aux_label < 0 || aux_label >= static_cast<int>(support_probs[i].size()))
            throw IndexError("cond_prob_support_given_aux: label outside probability row");
        if (support_attrs[i] == aux_attr) denom += support_probs[i][aux_label];
    }
    if (degenerate) *degenerate = denom == 0.0;
    if (denom == 0.0) return w;  // no support sample shares the group
    for (size_t i = 0; i < support_probs.size(); ++i)
        if (support_attrs[i] == aux_attr) w[i] = support_probs[i][aux_label] / denom;
    return w;
}

std::vector<double> cond_prob_aux_given_support(const std::vector<double>& support_embedding,
                                                const std::vector<std::vector<double>>& aux_embeddings,
                                                const std::vector<int>& aux_attrs, int aux_attr) {
    if (aux_embeddings.size() != aux_attrs.size())
        throw ShapeError("cond_prob_aux_given_support: embeddings/attrs lengths differ");
    std::vector<double> logits;
    std::vector<size_t> members;
    for (size_t k = 0; k < aux_embeddings.size(); ++k) {
        if (aux_attrs[k] != aux_attr) continue;
        if (aux_embeddings[k].size() != support_embedding.size())
            throw ShapeError("cond_prob_aux_given_support: embedding widths differ");
        double dot = 0.0;
        for (size_t d = 0; d < support_embedding.size(); ++d)
            dot += support_embedding[d] * aux_embeddings[k][d];
        logits.push_back(2.0 * dot);
        members.push_back(k);
    }
    std::vector<double> out(aux_embeddings.size(), 0.0);
    if (members.empty()) return out;
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        sum += l;
    }
    for (size_t j = 0; j < members.size(); ++j) out[members[j]] = logits[j] / sum;
    return out;
}

TensorPtr mi_loss(const TensorPtr& support_probs, const TensorPtr& support_emb,
                  const std::vector<int>& support_attrs, const TensorPtr& aux_emb,
                  const std::vector<int>& aux_labels, const std::vector<int>& aux_attrs,
                  bool* degenerate) {
    if (!support_probs || !support_emb || !aux_emb) throw StateError("mi_loss: null operand");
    const int s = support_probs->rows, a = aux_emb->rows;
    if (support_emb->rows != s || static_cast<int>(support_attrs.size()) != s)
        throw ShapeError("mi_loss: support probs/embeddings/attrs do not align");
    if (static_cast<int>(aux_labels.size()) != a || static_cast<int>(aux_attrs.size()) != a)
        throw ShapeError("mi_loss: aux embeddings/labels/attrs do not align");
    if (support_emb->cols != aux_emb->cols)
        throw ShapeError("mi_loss: embedding widths differ");
    if (a == 0) throw DegenerateError("mi_loss: empty auxiliary set");

    if (degenerate) *degenerate = false;
    TensorPtr total;
    for (int g = 0; g < 2; ++g) {
        std::vector<int> sg, ag;
        for (int i = 0; i < s; ++i)
            if (support_attrs[i] == g) sg.push_back(i);
        for (int j = 0; j < a; ++j)
            if (aux_attrs[j] == g) ag.push_back(j);
        if (sg.empty() || ag.empty()) continue;

        auto semb = select_rows(support_emb, sg);
        auto aemb = select_rows(aux_emb, ag);
        auto sim = scale(matmul(semb, transpose(aemb)), 2.0);  // 2 <x_i, x_j>
        auto lse = logsumexp_row(sim);                         // normalizer over the group
        auto probs = select_rows(support_probs, sg);

        for (size_t jp = 0; jp < ag.size(); ++jp) {
            const int label = aux_labels[ag[jp]];
            if (label < 0 || label >= support_probs->cols)
                throw IndexError("mi_loss: aux label outside probability row");
            auto pcol = select_col(probs, label);
            auto denom = sum_all(pcol);
            auto loglik = sub(select_col(sim, static_cast<int>(jp)), lse);
            // weights w_i = p_i / denom enter as sum(p .* loglik) / denom
            auto contrib = div(sum_all(mul(pcol, loglik)), denom);
            total = total ? add(total, contrib) : contrib;
        }
    }
    if (!total) {
        if (degenerate) *degenerate = true;
        return Tensor::scalar(0.0);
    }
    return scale(total, -1.0 / a);
}

TensorPtr fairness_adaptation_loss(const SampleSet& set, const SampleSet* aux,
                                   const ClassifierParams& params, const AdaptLossConfig& cfg) {
    if (aux == nullptr || cfg.gamma == 0.0)
        return regularized_loss(set, params, cfg.lambda, cfg.reg);

    auto set_out = classifier_forward(params, set.x);
    auto set_loss = cross_entropy(set_out.probs, set.labels);
    if (cfg.lambda != 0.0) {
        auto scores = select_col(set_out.probs, 1);
        auto penalty = cfg.reg == RegKind::dp ? reg_dp(scores, set.attrs)
                                              : reg_eo(scores, set.labels, set.attrs);
        set_loss = add(set_loss, scale(penalty, cfg.lambda));
    }

    auto aux_out = classifier_forward(params, aux->x);
    auto aux_loss = cross_entropy(aux_out.probs, aux->labels);
    if (cfg.lambda != 0.0) {
        auto scores = select_col(aux_out.probs, 1);
        auto penalty = cfg.reg == RegKind::dp ? reg_dp(scores, aux->attrs)
                                              : reg_eo(scores, aux->labels, aux->attrs);
        aux_loss = add(aux_loss, scale(penalty, cfg.lambda));
    }

    auto extra = aux_loss;
    if (cfg.use_mi) {
        auto align = mi_loss(set_out.probs, set_out.embeddings, set.attrs, aux_out.embeddings,
                             aux->labels, aux->attrs);
        extra = add(extra, align);
    }
    return add(set_loss, scale(extra, cfg.gamma));
}

// ---- candidate dictionary ------------------------------------------------------

CandidateDictionary::CandidateDictionary(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw ConfigError("CandidateDictionary: capacity must be >= 1");
}

void CandidateDictionary::enqueue(AuxiliarySet set) {
    if (set.rows.empty()) throw ValidationError("CandidateDictionary::enqueue: empty candidate");
    if (!sets_.empty() && set.key.size() != sets_.front().key.size())
        throw ShapeError("CandidateDictionary::enqueue: key width differs from stored candidates");
    sets_.push_back(std::move(set));
    if (static_cast<int>(sets_.size()) > capacity_) {
        auto oldest = std::min_element(sets_.begin(), sets_.end(),
                                       [](const AuxiliarySet& x, const AuxiliarySet& y) {
                                           return x.enqueue_step < y.enqueue_step;
                                       });
        sets_.erase(oldest);
    }
}

int CandidateDictionary::select_index(const std::vector<double>& direction) const {
    if (sets_.empty()) throw SelectionError("CandidateDictionary::select: dictionary is empty");
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(sets_.size()); ++i) {
        const auto& key = sets_[i].key;
        if (key.size() != direction.size())
            throw ShapeError("CandidateDictionary::select: direction width " +
                             std::to_string(direction.size()) + " vs key width " +
                             std::to_string(key.size()));
        double d = 0.0;
        for (size_t k = 0; k < key.size(); ++k) {
            const double diff = key[k] - direction[k];
            d += diff * diff;
        }
        if (d < best_d || (d == best_d && best >= 0 && sets_[i].enqueue_step < sets_[best].enqueue_step))
            best = static_cast<int>(i), best_d = d;
    }
    return best;
}

const AuxiliarySet& CandidateDictionary::select(const std::vector<double>& direction) const {
    return sets_[select_index(direction)];
}

const AuxiliarySet& CandidateDictionary::at(int i) const {
    if (i < 0 || i >= size()) throw IndexError("CandidateDictionary::at: index out of range");
    return sets_[i];
}

std::vector<int> resize_candidate_rows(const DatasetTable& table, std::vector<int> rows,
                                       int target_size, Rng& rng) {
    if (target_size < 1) throw ConfigError("resize_candidate_rows: target_size must be >= 1");
    if (rows.empty()) throw ValidationError("resize_candidate_rows: no rows to resize");
    const int n = static_cast<int>(rows.size());
    if (n == target_size) return rows;

    if (n > target_size) {
        // Keep one random representative of each (label, attr) cell that fits,
        // then fill the remainder uniformly.
        std::vector<std::vector<int>> cells(4);
        for (int i = 0; i < n; ++i)
            cells[table.labels[rows[i]] * 2 + table.sensitive[rows[i]]].push_back(i);
        std::vector<bool> keep(n, false);
        int kept = 0;
        for (auto& cell : cells) {
            if (cell.empty() || kept >= target_size) continue;
            keep[cell[rng.uniform_int(static_cast<int>(cell.size()))]] = true;
            ++kept;
        }
        std::vector<int> rest;
        for (int i = 0; i < n; ++i)
            if (!keep[i]) rest.push_back(i);
        for (int k : rng.sample_without_replacement(static_cast<int>(rest.size()), target_size - kept))
            keep[rest[k]] = true;
        std::vector<int> out;
        for (int i = 0; i < n; ++i)
            if (keep[i]) out.push_back(rows[i]);
        return out;
    }

    // Too short: top up with unused rows of the same subset.
    const int subset = table.subset_ids[rows[0]];
    std::vector<bool> used(table.n_rows(), false);
    for (int r : rows) used[r] = true;
    std::vector<int> pool;
    for (int r : table.index[subset].rows)
        if (!used[r]) pool.push_back(r);
    while (static_cast<int>(rows.size()) < target_size) {
        if (!pool.empty()) {
            int k = rng.uniform_int(static_cast<int>(pool.size()));
            rows.push_back(pool[k]);
            pool.erase(pool.begin() + k);
        } else {
            rows.push_back(rows[rng.uniform_int(static_cast<int>(rows.size()))]);
        }
    }
    return rows;
}

void enqueue_candidate(CandidateDictionary& dict, const DatasetTable& table,
                       const std::vector<int>& support_rows, const ClassifierParams& params,
                       double lambda, RegKind reg, int aux_size, Rng& rng, long long step) {
    AuxiliarySet set;
    set.rows = resize_candidate_rows(table, support_rows, aux_size, rng);
    set.enqueue_step = step;

    auto probe = params.clone();
    auto sample_set = gather_rows(table, set.rows);
    auto loss = regularized_loss(sample_set, probe, lambda, reg);
    backward(loss);
    set.key = flatten_grads(probe);
    dict.enqueue(std::move(set));
}

const AuxiliarySet& select_auxiliary(const CandidateDictionary& dict,
                                     const std::vector<double>& direction) {
    return dict.select(direction);
}

void init_dictionary(CandidateDictionary& dict, const DatasetTable& table,
                     const std::vector<int>& subsets, const ClassifierParams& params, double lambda,
                     RegKind reg, int k_shot, int aux_size, Rng& rng) {
    for (int i = dict.size(); i < dict.capacity(); ++i) {
        auto rows = sample_support_rows(table, subsets, k_shot, rng);
        enqueue_candidate(dict, table, rows, params, lambda, reg, aux_size, rng,
                          -(dict.capacity() - i));
    }
}

}  // namespace feast
