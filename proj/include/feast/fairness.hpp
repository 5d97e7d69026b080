#pragma once

#include <string>
#include <vector>

#include "feast/dataset.hpp"
#include "feast/model.hpp"
#include "feast/tensor.hpp"

namespace feast {

// Prediction scores (probability of class 1) split by sensitive group and label.
struct GroupedScores {
    std::vector<double> cell[2][2];  // [attr][label]

    static GroupedScores from(const std::vector<double>& scores, const std::vector<int>& labels,
                              const std::vector<int>& attrs);
    std::vector<double> group(int a) const;  // both labels pooled
    bool group_empty(int a) const { return cell[a][0].empty() && cell[a][1].empty(); }
};

// Demographic parity gap |E[f|a=0] - E[f|a=1]| over raw scores.
// Either group empty: MetricError.
double delta_dp(const GroupedScores& g);

struct EoResult {
    double value = 0.0;
    bool partial = false;  // at least one label term was skipped for empty cells
};

// Equal-opportunity-style gap: sum over labels y of |E[f|a=0,y] - E[f|a=1,y]|.
// A label term with an empty (attr,label) cell is skipped and the result is
// flagged partial; both terms skipped raises MetricError.
EoResult delta_eo(const GroupedScores& g);

enum class RegKind { dp, eo };

RegKind reg_kind_from_string(const std::string& s);
std::string to_string(RegKind k);

// Differentiable surrogate penalties over a score column (m x 1). reg_dp is
// the squared gap of group mean scores; reg_eo sums squared per-label gaps
// over the labels where both groups are present. A set with one group (or, for
// eo, no complete label cell) contributes an exact zero and sets *degenerate.
TensorPtr reg_dp(const TensorPtr& scores, const std::vector<int>& attrs, bool* degenerate = nullptr);
TensorPtr reg_eo(const TensorPtr& scores, const std::vector<int>& labels,
                 const std::vector<int>& attrs, bool* degenerate = nullptr);

// Mean cross-entropy plus lambda times the selected penalty, one forward pass.
TensorPtr regularized_loss(const SampleSet& set, const ClassifierParams& params, double lambda,
                           RegKind kind, bool* degenerate = nullptr);

// Per-task evaluation rows plus aggregates. eo aggregates cover only tasks
// whose eo was complete.
struct TaskMetrics {
    int task_id = 0;
    double dp = 0.0;
    double eo = 0.0;
    bool eo_valid = true;   // false when delta_eo was undefined for the task
    bool partial = false;   // eo missing one label term (or undefined)
    double acc = 0.0;
    int subset_id = -1;
};

struct MetricsReport {
    std::vector<TaskMetrics> tasks;
    double dp_mean = 0.0, dp_std = 0.0;
    double eo_mean = 0.0, eo_std = 0.0;
    double acc_mean = 0.0, acc_std = 0.0;
    int eo_task_count = 0;      // tasks with a complete eo
    int partial_task_count = 0;

    void finalize();            // recomputes the aggregate fields
    std::string to_jsonl() const;                 // one task per line
    std::string summary_json(int indent = 2) const;
};

}  // namespace feast
