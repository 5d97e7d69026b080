#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "feast/dataset.hpp"
#include "feast/fairness.hpp"
#include "feast/errors.hpp"
#include "feast/rng.hpp"

using namespace feast;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p.string();
}

CsvSchema basic_schema() {
    CsvSchema s;
    s.label_col = "label";
    s.sensitive_col = "sensitive";
    s.subset_col = "subset";
    return s;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV loading
// ---------------------------------------------------------------------------

TEST_CASE("load_csv reads values, roles, and subset names") {
    auto path = write_temp("ds_basic.csv",
                           "f0,f1,label,sensitive,subset\n"
                           "1.5,2.0,0,1,a\n"
                           "-1.0,0.25,1,0,b\n"
                           "3.0,4.0,1,1,a\n");
    LoadReport rep;
    auto t = load_csv(path, basic_schema(), &rep);
    CHECK(t.n_rows() == 3);
    CHECK(t.n_features == 2);
    CHECK(t.n_subsets() == 2);
    CHECK(rep.rows_read == 3);
    CHECK(rep.rows_dropped_missing == 0);
    CHECK(t.feature(0, 0) == 1.5);
    CHECK(t.feature(1, 1) == 0.25);
    CHECK(t.labels == std::vector<int>{0, 1, 1});
    CHECK(t.sensitive == std::vector<int>{1, 0, 1});
    CHECK(t.subset_names[t.subset_ids[0]] == "a");
    CHECK(t.subset_names[t.subset_ids[1]] == "b");
    CHECK(t.subset_ids[0] == t.subset_ids[2]);
    CHECK_FALSE(t.sensitive_feature_col.has_value());
    REQUIRE(t.index.size() == 2);
    CHECK(t.index[t.subset_ids[0]].rows.size() == 2);
}

TEST_CASE("rows with missing cells are dropped and counted") {
    auto path = write_temp("ds_missing.csv",
                           "f0,label,sensitive,subset\n"
                           "1.0,0,0,a\n"
                           ",1,0,a\n"
                           "2.0,1,,a\n"
                           "3.0,1,1,a\n");
    LoadReport rep;
    auto t = load_csv(path, basic_schema(), &rep);
    CHECK(t.n_rows() == 2);
    CHECK(rep.rows_read == 4);
    CHECK(rep.rows_dropped_missing == 2);
}

TEST_CASE("non-binary labels or sensitive values are rejected") {
    auto bad_label = write_temp("ds_badlabel.csv",
                                "f0,label,sensitive,subset\n1.0,2,0,a\n");
    CHECK_THROWS_AS(load_csv(bad_label, basic_schema()), ValidationError);
    auto bad_attr = write_temp("ds_badattr.csv",
                               "f0,label,sensitive,subset\n1.0,1,0.5,a\n");
    CHECK_THROWS_AS(load_csv(bad_attr, basic_schema()), ValidationError);
    auto bad_num = write_temp("ds_badnum.csv",
                              "f0,label,sensitive,subset\noops,1,0,a\n");
    CHECK_THROWS_AS(load_csv(bad_num, basic_schema()), ValidationError);
}

TEST_CASE("schema columns that do not exist are named in the error") {
    auto path = write_temp("ds_nocol.csv", "f0,label,sensitive,subset\n1.0,0,0,a\n");
    CsvSchema s = basic_schema();
    s.label_col = "target";
    try {
        load_csv(path, s);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("target") != std::string::npos);
    }
}

TEST_CASE("ragged rows are a schema error") {
    auto path = write_temp("ds_ragged.csv",
                           "f0,f1,label,sensitive,subset\n1.0,0,0,a\n");
    CHECK_THROWS_AS(load_csv(path, basic_schema()), SchemaError);
}

TEST_CASE("categorical columns expand to sorted one-hot blocks") {
    auto path = write_temp("ds_cat.csv",
                           "f0,color,label,sensitive,subset\n"
                           "1.0,red,0,0,a\n"
                           "2.0,blue,1,1,a\n"
                           "3.0,green,0,1,a\n"
                           "4.0,red,1,0,a\n");
    CsvSchema s = basic_schema();
    s.categorical_cols = {"color"};
    auto t = load_csv(path, s);
    // vocabulary blue < green < red -> 3 one-hot columns after f0
    CHECK(t.n_features == 4);
    CHECK(t.feature(0, 0) == 1.0);
    CHECK(t.feature(0, 1) == 0.0);  // blue
    CHECK(t.feature(0, 2) == 0.0);  // green
    CHECK(t.feature(0, 3) == 1.0);  // red
    CHECK(t.feature(1, 1) == 1.0);
    CHECK(t.feature(2, 2) == 1.0);
}

TEST_CASE("the sensitive attribute can be mirrored as a feature column") {
    auto path = write_temp("ds_mirror.csv",
                           "f0,label,sensitive,subset\n"
                           "1.0,0,1,a\n"
                           "2.0,1,0,a\n");
    CsvSchema s = basic_schema();
    s.sensitive_as_feature = true;
    auto t = load_csv(path, s);
    REQUIRE(t.n_features == 2);
    REQUIRE(t.sensitive_feature_col.has_value());
    CHECK(*t.sensitive_feature_col == 1);
    CHECK(t.feature(0, 1) == 1.0);
    CHECK(t.feature(1, 1) == 0.0);
}

// ---------------------------------------------------------------------------
// Normalization and splits
// ---------------------------------------------------------------------------

TEST_CASE("zscore uses statistics from the chosen subsets only") {
    auto path = write_temp("ds_norm.csv",
                           "f0,label,sensitive,subset\n"
                           "1.0,0,0,a\n"
                           "3.0,1,1,a\n"
                           "100.0,0,0,b\n");
    auto t = load_csv(path, basic_schema());
    const int sub_a = t.subset_ids[0];
    zscore_normalize(t, {sub_a});
    // stats from subset a: mean 2, population sd 1
    CHECK(t.feature(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(t.feature(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(t.feature(2, 0) == doctest::Approx(98.0).epsilon(1e-12));
}

TEST_CASE("near-constant columns are centered, not scaled") {
    auto path = write_temp("ds_const.csv",
                           "f0,label,sensitive,subset\n"
                           "5.0,0,0,a\n"
                           "5.0,1,1,a\n");
    auto t = load_csv(path, basic_schema());
    zscore_normalize(t, {0});
    CHECK(t.feature(0, 0) == 0.0);
    CHECK(t.feature(1, 0) == 0.0);
}

TEST_CASE("make_split partitions disjointly and deterministically") {
    auto s1 = make_split(10, 6, 2, 2, 99);
    auto s2 = make_split(10, 6, 2, 2, 99);
    CHECK(s1.train == s2.train);
    CHECK(s1.val == s2.val);
    CHECK(s1.test == s2.test);
    CHECK(s1.train.size() == 6);
    CHECK(s1.val.size() == 2);
    CHECK(s1.test.size() == 2);
    std::set<int> all;
    for (int x : s1.train) all.insert(x);
    for (int x : s1.val) all.insert(x);
    for (int x : s1.test) all.insert(x);
    CHECK(all.size() == 10);
    for (int x : all) CHECK((x >= 0 && x < 10));
    auto s3 = make_split(10, 6, 2, 2, 100);
    CHECK(s1.train != s3.train);  // different seed, different draw
}

TEST_CASE("validate_split rejects overlap, bad ids, and empty required parts") {
    SplitSpec ok{{0, 1}, {2}, {3}};
    CHECK_NOTHROW(validate_split(ok, 4));
    SplitSpec overlap{{0, 1}, {1}, {3}};
    CHECK_THROWS_AS(validate_split(overlap, 4), ConfigError);
    SplitSpec out_of_range{{0, 7}, {}, {3}};
    CHECK_THROWS_AS(validate_split(out_of_range, 4), ConfigError);
    SplitSpec no_train{{}, {1}, {2}};
    CHECK_THROWS_AS(validate_split(no_train, 4), ConfigError);
    SplitSpec no_test{{0}, {1}, {}};
    CHECK_THROWS_AS(validate_split(no_test, 4), ConfigError);
}

// ---------------------------------------------------------------------------
// Episode sampling
// ---------------------------------------------------------------------------

namespace {

// 2 subsets x 40 rows, balanced labels and groups.
DatasetTable toy_table() {
    SynthSpec spec;
    spec.n_samples = 80;
    spec.n_features = 4;
    spec.signal_width = 2;
    spec.bias_offset = 2;
    spec.bias_width = 2;
    spec.n_subsets = 2;
    spec.delta = 0.0;
    spec.sensitive_as_feature = false;
    spec.seed = 5;
    return make_synthetic(spec);
}

}  // namespace

TEST_CASE("episodes have the right sizes, balance, and disjointness") {
    auto t = toy_table();
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        auto ep = sample_episode(t, {0, 1}, 3, 8, rng);
        REQUIRE(ep.support.labels.size() == 6);
        REQUIRE(ep.query.labels.size() == 8);
        CHECK(ep.support.x->rows == 6);
        CHECK(ep.support.x->cols == 4);

        int support_ones = 0;
        for (int y : ep.support.labels) support_ones += y;
        CHECK(support_ones == 3);  // exactly k per class

        std::set<int> sup(ep.support.rows.begin(), ep.support.rows.end());
        std::set<int> qry(ep.query.rows.begin(), ep.query.rows.end());
        CHECK(sup.size() == 6);
        CHECK(qry.size() == 8);
        for (int r : qry) CHECK(sup.count(r) == 0);

        bool has[2] = {false, false};
        for (int a : ep.query.attrs) has[a] = true;
        CHECK(has[0]);
        CHECK(has[1]);

        for (int r : sup) CHECK(t.subset_ids[r] == ep.subset_id);
        for (int r : qry) CHECK(t.subset_ids[r] == ep.subset_id);
    }
}

TEST_CASE("episode sampling is deterministic in the rng state") {
    auto t = toy_table();
    Rng a(42), b(42);
    for (int i = 0; i < 5; ++i) {
        auto ea = sample_episode(t, {0, 1}, 2, 6, a);
        auto eb = sample_episode(t, {0, 1}, 2, 6, b);
        CHECK(ea.subset_id == eb.subset_id);
        CHECK(ea.support.rows == eb.support.rows);
        CHECK(ea.query.rows == eb.query.rows);
    }
}

TEST_CASE("gathered episode tensors mirror the table rows") {
    auto t = toy_table();
    Rng rng(3);
    auto ep = sample_episode(t, {0, 1}, 2, 6, rng);
    for (size_t i = 0; i < ep.support.rows.size(); ++i) {
        const int r = ep.support.rows[i];
        CHECK(ep.support.labels[i] == t.labels[r]);
        CHECK(ep.support.attrs[i] == t.sensitive[r]);
        for (int j = 0; j < t.n_features; ++j)
            CHECK(ep.support.x->at(static_cast<int>(i), j) == t.feature(r, j));
    }
    CHECK_FALSE(ep.support.x->requires_grad);
}

TEST_CASE("sampling fails with a diagnostic when no subset qualifies") {
    // Single-group subset: a query covering both groups is impossible.
    DatasetTable t;
    t.n_features = 1;
    for (int i = 0; i < 30; ++i) {
        t.features.push_back(i);
        t.labels.push_back(i % 2);
        t.sensitive.push_back(0);  // one group only
        t.subset_ids.push_back(0);
    }
    t.subset_names = {"solo"};
    t.build_index();
    try {
        Rng rng(1);
        sample_episode(t, {0}, 2, 5, rng);
        FAIL("expected SamplingError");
    } catch (const SamplingError& e) {
        CHECK(std::string(e.what()).find("sensitive groups") != std::string::npos);
    }
}

TEST_CASE("sampling fails when subsets are too small for support plus query") {
    auto t = toy_table();  // 40 rows per subset
    Rng rng(1);
    CHECK_THROWS_AS(sample_episode(t, {0, 1}, 15, 20, rng), SamplingError);  // 30 + 20 > 40
}

TEST_CASE("support-only draws take k rows per class from one subset") {
    auto t = toy_table();
    Rng rng(9);
    auto rows = sample_support_rows(t, {0, 1}, 4, rng);
    REQUIRE(rows.size() == 8);
    int ones = 0;
    std::set<int> uniq(rows.begin(), rows.end());
    CHECK(uniq.size() == 8);
    for (int r : rows) ones += t.labels[r];
    CHECK(ones == 4);
    for (int r : rows) CHECK(t.subset_ids[r] == t.subset_ids[rows[0]]);
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

TEST_CASE("synthetic generation is deterministic and shaped as asked") {
    SynthSpec spec;
    spec.n_samples = 400;
    spec.n_features = 8;
    spec.n_subsets = 5;
    spec.seed = 11;
    auto a = make_synthetic(spec);
    auto b = make_synthetic(spec);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK(a.sensitive == b.sensitive);
    CHECK(a.subset_ids == b.subset_ids);
    CHECK(a.n_rows() == 400);
    CHECK(a.n_features == 9);  // mirror column appended by default
    REQUIRE(a.sensitive_feature_col.has_value());
    CHECK(*a.sensitive_feature_col == 8);
    CHECK(a.n_subsets() == 5);
    for (int i = 0; i < a.n_rows(); ++i) {
        CHECK((a.labels[i] == 0 || a.labels[i] == 1));
        CHECK((a.sensitive[i] == 0 || a.sensitive[i] == 1));
        CHECK(a.feature(i, 8) == a.sensitive[i]);
    }
    // round-robin assignment balances subsets exactly
    for (int s = 0; s < 5; ++s) CHECK(a.index[s].rows.size() == 80);
}

TEST_CASE("different seeds give different synthetic draws") {
    SynthSpec spec;
    spec.n_samples = 100;
    spec.seed = 1;
    auto a = make_synthetic(spec);
    spec.seed = 2;
    auto b = make_synthetic(spec);
    CHECK(a.features != b.features);
}

TEST_CASE("zero group gap leaves features uncorrelated with the attribute") {
    SynthSpec spec;
    spec.n_samples = 6000;
    spec.n_features = 8;
    spec.n_subsets = 4;
    spec.delta = 0.0;
    spec.sensitive_as_feature = false;
    spec.seed = 21;
    auto t = make_synthetic(spec);
    for (int j = 0; j < t.n_features; ++j) {
        std::vector<double> by_attr[2];
        for (int i = 0; i < t.n_rows(); ++i) by_attr[t.sensitive[i]].push_back(t.feature(i, j));
        CHECK(std::abs(mean_of(by_attr[0]) - mean_of(by_attr[1])) < 0.12);
    }
}

TEST_CASE("the group gap appears per subset with the configured magnitude and sign flips") {
    SynthSpec spec;
    spec.n_samples = 12000;
    spec.n_features = 8;
    spec.n_subsets = 4;
    spec.delta = 3.0;
    // Leave only the attribute shift on the biased block: any class signal on
    // an overlapping column would add a label-mediated group gap on top.
    spec.class_sep = 0.0;
    spec.bias_flip_fraction = 0.5;
    spec.subset_jitter = 0.0;
    spec.sensitive_as_feature = false;
    spec.seed = 31;
    auto t = make_synthetic(spec);
    const int col = spec.bias_offset;  // first biased column
    int plus = 0, minus = 0;
    for (int s = 0; s < spec.n_subsets; ++s) {
        std::vector<double> by_attr[2];
        for (int r : t.index[s].rows) by_attr[t.sensitive[r]].push_back(t.feature(r, col));
        const double gap = mean_of(by_attr[1]) - mean_of(by_attr[0]);
        CHECK(std::abs(std::abs(gap) - spec.delta) < 0.35);  // |gap| == delta up to noise
        (gap > 0 ? plus : minus) += 1;
    }
    CHECK(plus == 2);  // exactly half the subsets flip the direction
    CHECK(minus == 2);
}

TEST_CASE("class separation shifts the signal block") {
    SynthSpec spec;
    spec.n_samples = 8000;
    spec.n_features = 8;
    spec.n_subsets = 4;
    spec.delta = 0.0;
    spec.class_sep = 2.0;
    spec.sensitive_as_feature = false;
    spec.seed = 41;
    auto t = make_synthetic(spec);
    std::vector<double> by_label[2];
    for (int i = 0; i < t.n_rows(); ++i) by_label[t.labels[i]].push_back(t.feature(i, 0));
    CHECK(mean_of(by_label[1]) - mean_of(by_label[0]) ==
          doctest::Approx(2.0 * spec.class_sep).epsilon(0.1));
    // columns outside the signal block carry no class signal
    std::vector<double> out_block[2];
    for (int i = 0; i < t.n_rows(); ++i)
        out_block[t.labels[i]].push_back(t.feature(i, spec.signal_width));
    CHECK(std::abs(mean_of(out_block[1]) - mean_of(out_block[0])) < 0.15);
}

TEST_CASE("label noise flips roughly the requested fraction") {
    // With a huge class separation and no group gap, the sign of the signal
    // block recovers the pre-noise label almost surely, so the disagreement
    // rate between that sign and the stored label estimates the noise rate.
    SynthSpec spec;
    spec.n_samples = 20000;
    spec.n_features = 4;
    spec.signal_width = 2;
    spec.bias_offset = 2;
    spec.bias_width = 2;
    spec.n_subsets = 2;
    spec.delta = 0.0;
    spec.class_sep = 4.0;
    spec.subset_jitter = 0.0;
    spec.label_noise = 0.25;
    spec.sensitive_as_feature = false;
    spec.seed = 51;
    auto t = make_synthetic(spec);
    int disagreements = 0;
    for (int i = 0; i < t.n_rows(); ++i) {
        const double block_mean = 0.5 * (t.feature(i, 0) + t.feature(i, 1));
        const int inferred = block_mean > 0.0 ? 1 : 0;
        disagreements += inferred != t.labels[i];
    }
    CHECK(disagreements / 20000.0 == doctest::Approx(0.25).epsilon(0.06));
}

TEST_CASE("labels lean toward the up-shifted group with the predicted strength") {
    SynthSpec spec;
    spec.n_samples = 24000;
    spec.n_features = 8;
    spec.n_subsets = 4;
    spec.delta = 2.0;
    spec.label_bias_gain = 0.75;
    spec.bias_flip_fraction = 0.5;
    spec.sensitive_as_feature = false;
    spec.seed = 61;
    auto t = make_synthetic(spec);
    // Expected P(y=1 | a, subset) = Phi(gain * sign * (2a-1) * delta/2).
    const double p_hi = 0.5 * std::erfc(-spec.label_bias_gain * spec.delta / 2.0 / std::sqrt(2.0));
    int plus = 0, minus = 0;
    for (int s = 0; s < spec.n_subsets; ++s) {
        double pos[2] = {0, 0};
        int cnt[2] = {0, 0};
        for (int r : t.index[s].rows) {
            pos[t.sensitive[r]] += t.labels[r];
            cnt[t.sensitive[r]] += 1;
        }
        REQUIRE(cnt[0] > 0);
        REQUIRE(cnt[1] > 0);
        const double r0 = pos[0] / cnt[0], r1 = pos[1] / cnt[1];
        // One group's base rate sits at p_hi, the other's at 1 - p_hi; which is
        // which depends on the subset's bias sign.
        const double hi = std::max(r0, r1), lo = std::min(r0, r1);
        CHECK(hi == doctest::Approx(p_hi).epsilon(0.08));
        CHECK(lo == doctest::Approx(1.0 - p_hi).epsilon(0.35));  // small denominator, loose rel tol
        (r1 > r0 ? plus : minus) += 1;
    }
    // bias_flip_fraction 0.5 flips the lean direction in half the subsets.
    CHECK(plus == 2);
    CHECK(minus == 2);
}

TEST_CASE("zero gap or zero gain leaves the label independent of the attribute") {
    for (int variant = 0; variant < 2; ++variant) {
        SynthSpec spec;
        spec.n_samples = 10000;
        spec.n_features = 8;
        spec.n_subsets = 4;
        if (variant == 0)
            spec.delta = 0.0;
        else
            spec.label_bias_gain = 0.0;
        spec.sensitive_as_feature = false;
        spec.seed = 71 + variant;
        auto t = make_synthetic(spec);
        // Empirical corr(A, Y) stays near zero.
        double ma = mean_of(std::vector<double>(t.sensitive.begin(), t.sensitive.end()));
        double my = mean_of(std::vector<double>(t.labels.begin(), t.labels.end()));
        double cov = 0, va = 0, vy = 0;
        for (int i = 0; i < t.n_rows(); ++i) {
            cov += (t.sensitive[i] - ma) * (t.labels[i] - my);
            va += (t.sensitive[i] - ma) * (t.sensitive[i] - ma);
            vy += (t.labels[i] - my) * (t.labels[i] - my);
        }
        CHECK(std::abs(cov / std::sqrt(va * vy)) < 0.05);
    }
}

TEST_CASE("a plainly fitted linear model inherits a group-dependent mean score") {
    // Fit logistic regression with plain gradient descent (no library autodiff)
    // on biased data with a consistent bias direction, then measure the mean
    // score gap between groups with the fairness metric.
    auto fit_and_measure = [](double delta, uint64_t seed) {
        SynthSpec spec;
        spec.n_samples = 6000;
        spec.n_features = 8;
        spec.n_subsets = 4;
        spec.delta = delta;
        spec.bias_flip_fraction = 0.0;  // consistent direction so pooling is meaningful
        spec.sensitive_as_feature = false;
        spec.seed = seed;
        auto t = make_synthetic(spec);
        const int n = t.n_rows(), d = t.n_features;
        std::vector<double> w(d, 0.0);
        double b = 0.0;
        for (int epoch = 0; epoch < 300; ++epoch) {
            std::vector<double> gw(d, 0.0);
            double gb = 0.0;
            for (int i = 0; i < n; ++i) {
                double z = b;
                for (int j = 0; j < d; ++j) z += w[j] * t.feature(i, j);
                const double p = 1.0 / (1.0 + std::exp(-z));
                const double err = p - t.labels[i];
                for (int j = 0; j < d; ++j) gw[j] += err * t.feature(i, j) / n;
                gb += err / n;
            }
            for (int j = 0; j < d; ++j) w[j] -= 0.5 * gw[j];
            b -= 0.5 * gb;
        }
        std::vector<double> scores(n);
        for (int i = 0; i < n; ++i) {
            double z = b;
            for (int j = 0; j < d; ++j) z += w[j] * t.feature(i, j);
            scores[i] = 1.0 / (1.0 + std::exp(-z));
        }
        return delta_dp(GroupedScores::from(scores, t.labels, t.sensitive));
    };
    CHECK(fit_and_measure(3.0, 81) > 0.15);   // strong gap -> measurable disparity
    CHECK(fit_and_measure(0.0, 82) < 0.05);   // no gap -> no systematic disparity
}

TEST_CASE("bad synthetic parameters are rejected") {
    SynthSpec s;
    s.delta = -1.0;
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
    s = SynthSpec{};
    s.p_sensitive = 0.0;
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
    s = SynthSpec{};
    s.p_sensitive = 1.0;
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
    s = SynthSpec{};
    s.label_noise = 1.0;
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
    s = SynthSpec{};
    s.n_features = 4;  // bias block [2, 6) does not fit
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
    s = SynthSpec{};
    s.n_samples = 0;
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
    s = SynthSpec{};
    s.label_bias_gain = -0.5;
    CHECK_THROWS_AS(make_synthetic(s), ValidationError);
}

TEST_CASE("write_csv round-trips exactly through load_csv") {
    SynthSpec spec;
    spec.n_samples = 200;
    spec.n_features = 6;
    spec.n_subsets = 3;
    spec.seed = 61;
    auto t = make_synthetic(spec);
    fs::path p = fs::temp_directory_path() / "ds_roundtrip.csv";
    write_csv(t, p.string());
    write_synth_sidecar(spec, p.string());

    CsvSchema s = basic_schema();
    s.sensitive_as_feature = true;  // regenerate the mirror column
    auto r = load_csv(p.string(), s);
    REQUIRE(r.n_rows() == t.n_rows());
    REQUIRE(r.n_features == t.n_features);
    CHECK(r.features == t.features);  // %.17g is an exact double round-trip
    CHECK(r.labels == t.labels);
    CHECK(r.sensitive == t.sensitive);
    CHECK(r.subset_ids == t.subset_ids);

    std::ifstream side(p.string() + ".json");
    REQUIRE(side.good());
    std::string body((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
    CHECK(body.find("\"delta\"") != std::string::npos);
    CHECK(body.find("\"seed\"") != std::string::npos);
}

TEST_CASE("write_csv emits one header plus one line per row") {
    SynthSpec spec;
    spec.n_samples = 50;
    spec.n_features = 6;
    spec.n_subsets = 2;
    spec.seed = 71;
    auto t = make_synthetic(spec);
    fs::path p = fs::temp_directory_path() / "ds_lines.csv";
    write_csv(t, p.string());
    std::ifstream in(p);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 51);
}
