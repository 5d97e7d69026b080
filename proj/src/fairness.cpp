#include "feast/fairness.hpp"

#include <cmath>

#include <json.hpp>

#include "feast/errors.hpp"

namespace feast {

GroupedScores GroupedScores::from(const std::vector<double>& scores, const std::vector<int>& labels,
                                  const std::vector<int>& attrs) {
    if (scores.size() != labels.size() || scores.size() != attrs.size())
        throw ShapeError("GroupedScores: scores/labels/attrs lengths differ");
    GroupedScores g;
    for (size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] < 0 || labels[i] > 1 || attrs[i] < 0 || attrs[i] > 1)
            throw ValidationError("GroupedScores: labels and attrs must be binary");
        g.cell[attrs[i]][labels[i]].push_back(scores[i]);
    }
    return g;
}

std::vector<double> GroupedScores::group(int a) const {
    std::vector<double> out = cell[a][0];
    out.insert(out.end(), cell[a][1].begin(), cell[a][1].end());
    return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / v.size();
}

}  // namespace

double delta_dp(const GroupedScores& g) {
    if (g.group_empty(0) || g.group_empty(1))
        throw MetricError("delta_dp: a sensitive group has no samples");
    return std::fabs(mean_of(g.group(0)) - mean_of(g.group(1)));
}

EoResult delta_eo(const GroupedScores& g) {
    EoResult r;
    int terms = 0;
    for (int y = 0; y < 2; ++y) {
        if (g.cell[0][y].empty() || g.cell[1][y].empty()) {
            r.partial = true;
            continue;
        }
        r.value += std::fabs(mean_of(g.cell[0][y]) - mean_of(g.cell[1][y]));
        ++terms;
    }
    if (terms == 0) throw MetricError("delta_eo: no label has samples from both sensitive groups");
    return r;
}

RegKind reg_kind_from_string(const std::string& s) {
    if (s == "dp") return RegKind::dp;
    if (s == "eo") return RegKind::eo;
    throw ConfigError("regularizer must be 'dp' or 'eo', got '" + s + "'");
}

std::string to_string(RegKind k) { return k == RegKind::dp ? "dp" : "eo"; }

namespace {

// Differentiable mean over the rows listed in idx; distinct graphs per call.
TensorPtr mean_of_rows(const TensorPtr& scores, const std::vector<int>& idx) {
    return mean_all(select_rows(scores, idx));
}

std::vector<int> rows_with(const std::vector<int>& attrs, int a) {
    std::vector<int> out;
    for (size_t i = 0; i < attrs.size(); ++i)
        if (attrs[i] == a) out.push_back(static_cast<int>(i));
    return out;
}

}  // namespace

TensorPtr reg_dp(const TensorPtr& scores, const std::vector<int>& attrs, bool* degenerate) {
    if (!scores) throw StateError("reg_dp: null scores");
    if (scores->cols != 1 || scores->rows != static_cast<int>(attrs.size()))
        throw ShapeError("reg_dp: scores must be " + std::to_string(attrs.size()) + "x1");
    auto g0 = rows_with(attrs, 0);
    auto g1 = rows_with(attrs, 1);
    if (degenerate) *degenerate = false;
    if (g0.empty() || g1.empty()) {
        if (degenerate) *degenerate = true;
        return Tensor::scalar(0.0);
    }
    auto gap = sub(mean_of_rows(scores, g0), mean_of_rows(scores, g1));
    return mul(gap, gap);
}

TensorPtr reg_eo(const TensorPtr& scores, const std::vector<int>& labels,
                 const std::vector<int>& attrs, bool* degenerate) {
    if (!scores) throw StateError("reg_eo: null scores");
    if (scores->cols != 1 || scores->rows != static_cast<int>(attrs.size()) ||
        labels.size() != attrs.size())
        throw ShapeError("reg_eo: scores/labels/attrs must align");
    if (degenerate) *degenerate = false;
    TensorPtr total;
    for (int y = 0; y < 2; ++y) {
        std::vector<int> g0, g1;
        for (size_t i = 0; i < attrs.size(); ++i) {
            if (labels[i] != y) continue;
            (attrs[i] == 0 ? g0 : g1).push_back(static_cast<int>(i));
        }
        if (g0.empty() || g1.empty()) continue;  // incomplete label: skip the term
        auto gap = sub(mean_of_rows(scores, g0), mean_of_rows(scores, g1));
        auto term = mul(gap, gap);
        total = total ? add(total, term) : term;
    }
    if (!total) {
        if (degenerate) *degenerate = true;
        return Tensor::scalar(0.0);
    }
    return total;
}

TensorPtr regularized_loss(const SampleSet& set, const ClassifierParams& params, double lambda,
                           RegKind kind, bool* degenerate) {
    auto out = classifier_forward(params, set.x);
    auto ce = cross_entropy(out.probs, set.labels);
    if (lambda == 0.0) {
        if (degenerate) *degenerate = false;
        return ce;
    }
    auto scores = select_col(out.probs, 1);
    auto penalty = kind == RegKind::dp ? reg_dp(scores, set.attrs, degenerate)
                                       : reg_eo(scores, set.labels, set.attrs, degenerate);
    return add(ce, scale(penalty, lambda));
}

// ---- report -------------------------------------------------------------------

void MetricsReport::finalize() {
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) {
            mean = sd = 0.0;
            return;
        }
        double s = 0.0;
        for (double x : v) s += x;
        mean = s / v.size();
        double q = 0.0;
        for (double x : v) q += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(q / (v.size() - 1)) : 0.0;
    };
    std::vector<double> dps, eos, accs;
    eo_task_count = 0;
    partial_task_count = 0;
    for (const auto& t : tasks) {
        dps.push_back(t.dp);
        accs.push_back(t.acc);
        if (t.eo_valid && !t.partial) {
            eos.push_back(t.eo);
            ++eo_task_count;
        }
        if (t.partial) ++partial_task_count;
    }
    stats(dps, dp_mean, dp_std);
    stats(eos, eo_mean, eo_std);
    stats(accs, acc_mean, acc_std);
}

std::string MetricsReport::to_jsonl() const {
    std::string out;
    for (const auto& t : tasks) {
        nlohmann::json j;
        j["task_id"] = t.task_id;
        j["dp"] = t.dp;
        if (t.eo_valid)
            j["eo"] = t.eo;
        else
            j["eo"] = nullptr;
        j["acc"] = t.acc;
        j["partial"] = t.partial;
        j["subset"] = t.subset_id;
        out += j.dump();
        out += "\n";
    }
    return out;
}

std::string MetricsReport::summary_json(int indent) const {
    nlohmann::json j{{"tasks", static_cast<int>(tasks.size())},
                     {"dp_mean", dp_mean},
                     {"dp_std", dp_std},
                     {"eo_mean", eo_mean},
                     {"eo_std", eo_std},
                     {"eo_task_count", eo_task_count},
                     {"partial_task_count", partial_task_count},
                     {"acc_mean", acc_mean},
                     {"acc_std", acc_std}};
    return j.dump(indent);
}

}  // namespace feast
