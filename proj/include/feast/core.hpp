#pragma once

#include <cstdint>
#include <vector>

#include "feast/dataset.hpp"
#include "feast/fairness.hpp"
#include "feast/model.hpp"
#include "feast/rng.hpp"
#include "feast/tensor.hpp"

namespace feast {

// Weights of support samples given one auxiliary sample: within the matching
// sensitive group, each support sample gets its predicted probability of the
// auxiliary label, normalized over the group; across groups the weight is
// exactly zero. Empty matching group: all-zero weights, *degenerate set.
std::vector<double> cond_prob_support_given_aux(const std::vector<std::vector<double>>& support_probs,
                                                const std::vector<int>& support_attrs, int aux_label,
                                                int aux_attr, bool* degenerate = nullptr);

// Distribution over the auxiliary samples of group aux_attr as seen from one
// support embedding: softmax of 2 * <emb_i, emb_k> (equivalently of the
// negated squared distances, for unit rows). Returned in auxiliary order,
// zeros for samples outside the group.
std::vector<double> cond_prob_aux_given_support(const std::vector<double>& support_embedding,
                                                const std::vector<std::vector<double>>& aux_embeddings,
                                                const std::vector<int>& aux_attrs, int aux_attr);

// Group-conditional alignment loss between a sample set and an auxiliary set,
// differentiable through both the probabilities and the embeddings. For each
// auxiliary sample, the weighted (by cond_prob_support_given_aux) negative
// log-likelihood of reaching it from the matching support group is averaged
// over the full auxiliary set. Auxiliary samples with no matching support
// group contribute zero; if none match, the result is zero and *degenerate.
TensorPtr mi_loss(const TensorPtr& support_probs, const TensorPtr& support_emb,
                  const std::vector<int>& support_attrs, const TensorPtr& aux_emb,
                  const std::vector<int>& aux_labels, const std::vector<int>& aux_attrs,
                  bool* degenerate = nullptr);

struct AdaptLossConfig {
    double lambda = 1.0;
    double gamma = 0.5;
    RegKind reg = RegKind::dp;
    bool use_mi = true;
};

// Full adaptation objective: L_R(set) + gamma * (L_R(aux) + alignment term).
// aux == nullptr (or gamma == 0) reduces it to L_R(set) with no auxiliary
// graph at all.
TensorPtr fairness_adaptation_loss(const SampleSet& set, const SampleSet* aux,
                                   const ClassifierParams& params, const AdaptLossConfig& cfg);

// One stored candidate: table rows plus the flat gradient key describing the
// adaptation direction its regularized loss induces.
struct AuxiliarySet {
    std::vector<int> rows;
    std::vector<double> key;
    long long enqueue_step = 0;
};

// Bounded FIFO of candidates keyed by gradient vectors. Eviction removes the
// minimum enqueue_step; selection is a linear nearest-neighbor scan with ties
// broken toward the oldest candidate.
class CandidateDictionary {
public:
    explicit CandidateDictionary(int capacity);

    void enqueue(AuxiliarySet set);
    const AuxiliarySet& select(const std::vector<double>& direction) const;
    int select_index(const std::vector<double>& direction) const;

    int size() const { return static_cast<int>(sets_.size()); }
    int capacity() const { return capacity_; }
    const AuxiliarySet& at(int i) const;

private:
    int capacity_;
    std::vector<AuxiliarySet> sets_;
};

// Resizes rows to target_size: overlong sets drop random rows but keep one
// representative of every (label, attr) cell that fits; short sets top up
// with unused rows of the same subset (with replacement across draws only if
// the subset runs dry, in which case duplicates are allowed).
std::vector<int> resize_candidate_rows(const DatasetTable& table, std::vector<int> rows,
                                       int target_size, Rng& rng);

// Resize-to-aux-size, key at the given parameters, enqueue. Operates on a
// clone of params so caller gradient buffers stay untouched.
void enqueue_candidate(CandidateDictionary& dict, const DatasetTable& table,
                       const std::vector<int>& support_rows, const ClassifierParams& params,
                       double lambda, RegKind reg, int aux_size, Rng& rng, long long step);

const AuxiliarySet& select_auxiliary(const CandidateDictionary& dict,
                                     const std::vector<double>& direction);

// Fills the dictionary to capacity with random support draws from the given
// subsets, keyed at the supplied (initial) parameters.
void init_dictionary(CandidateDictionary& dict, const DatasetTable& table,
                     const std::vector<int>& subsets, const ClassifierParams& params, double lambda,
                     RegKind reg, int k_shot, int aux_size, Rng& rng);

}  // namespace feast
