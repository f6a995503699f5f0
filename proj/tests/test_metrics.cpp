#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hyperimage/metrics.hpp"
#include "hyperimage/rng.hpp"

using namespace hyperimage;

namespace {

// counting-based mid-ranks, the slow definitional route
std::vector<double> rank_oracle(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t less = 0, eq = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++less;
            if (v[j] == v[i]) ++eq;
        }
        r[i] = static_cast<double>(less) + (static_cast<double>(eq) + 1.0) / 2.0;
    }
    return r;
}

// product-moment formula, a different route than the implementation's
// two-pass covariance
double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        sab += a[i] * b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
    }
    return (n * sab - sa * sb) / std::sqrt((n * saa - sa * sa) * (n * sbb - sb * sb));
}

double srocc_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson_oracle(rank_oracle(a), rank_oracle(b));
}

// direct O(n^2) concordant/discordant counting with tau-b tie correction
double kendall_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double concordant = 0, discordant = 0, tx = 0, ty = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0 && dy == 0) continue;
            else if (dx == 0) ++tx;
            else if (dy == 0) ++ty;
            else if (dx * dy > 0) ++concordant;
            else ++discordant;
        }
    return (concordant - discordant) /
           std::sqrt((concordant + discordant + tx) * (concordant + discordant + ty));
}

}  // namespace

TEST_CASE("trivial correlation fixtures") {
    std::vector<double> t = {0.5, 1.5, 2.0, 7.0, 9.5};
    std::vector<double> neg = t;
    for (double& v : neg) v = -v;
    CHECK(srocc(t, t) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(srocc(neg, t) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(kendall(neg, t) == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<double> affine = t;
    for (double& v : affine) v = 2.0 * v + 3.0;
    CHECK(plcc(affine, t) == doctest::Approx(1.0).epsilon(1e-12));

    // mid-rank fixture pinned from the counting oracle: sqrt(0.9)
    std::vector<double> p = {1, 2, 2, 4}, q = {1, 3, 2, 4};
    const double pinned = 0.9486832980505138;
    CHECK(srocc_oracle(p, q) == doctest::Approx(pinned).epsilon(1e-12));
    CHECK(srocc(p, q) == doctest::Approx(pinned).epsilon(1e-12));

    // one adjacent swap among five distinct values: 1 - 2*1/C(5,2)
    std::vector<double> a = {1, 2, 3, 4, 5}, b = {1, 2, 4, 3, 5};
    CHECK(kendall(a, b) == doctest::Approx(0.8).epsilon(1e-12));

    CHECK_THROWS(srocc({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}));
    CHECK_THROWS(plcc({1.0}, {2.0}));
    CHECK_THROWS(kendall({1.0, 1.0}, {1.0, 2.0}));
    CHECK_THROWS(srocc({1.0, 2.0}, {1.0, 2.0, 3.0}));
}

TEST_CASE("exhaustive permutations up to n=6 match the definitional oracles") {
    for (std::size_t n = 2; n <= 6; ++n) {
        std::vector<double> truth(n);
        std::iota(truth.begin(), truth.end(), 1.0);
        std::vector<double> perm = truth;
        do {
            CHECK(srocc(perm, truth) == doctest::Approx(srocc_oracle(perm, truth)).epsilon(1e-12));
            CHECK(kendall(perm, truth) == doctest::Approx(kendall_oracle(perm, truth)).epsilon(1e-12));
        } while (std::next_permutation(perm.begin(), perm.end()));
    }
}

TEST_CASE("random tied cases match the mid-rank and tau-b oracles") {
    Rng rng(404);
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 3 + rng.uniform_int(0, 40);
        std::vector<double> a(n), b(n);
        // coarse quantization forces plenty of ties
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<double>(rng.uniform_int(0, 5));
            b[i] = static_cast<double>(rng.uniform_int(0, 5));
        }
        const bool const_a = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
        const bool const_b = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
        if (const_a || const_b) continue;
        CHECK(srocc(a, b) == doctest::Approx(srocc_oracle(a, b)).epsilon(1e-10));
        CHECK(kendall(a, b) == doctest::Approx(kendall_oracle(a, b)).epsilon(1e-10));
    }
}

TEST_CASE("rank metrics are invariant under strictly monotone maps and symmetric") {
    Rng rng(505);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng.uniform_int(0, 30);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.uniform(-3.0, 3.0);
            b[i] = rng.uniform(-3.0, 3.0);
        }
        std::vector<double> am = a;
        for (double& v : am) v = std::exp(0.7 * v);  // strictly increasing
        std::vector<double> bm = b;
        for (double& v : bm) v = v * v * v + 2.0 * v;  // strictly increasing

        CHECK(srocc(am, b) == doctest::Approx(srocc(a, b)).epsilon(1e-10));
        CHECK(srocc(a, bm) == doctest::Approx(srocc(a, b)).epsilon(1e-10));
        CHECK(kendall(am, bm) == doctest::Approx(kendall(a, b)).epsilon(1e-10));

        CHECK(srocc(a, b) == doctest::Approx(srocc(b, a)).epsilon(1e-12));
        CHECK(plcc(a, b) == doctest::Approx(plcc(b, a)).epsilon(1e-12));
        CHECK(kendall(a, b) == doctest::Approx(kendall(b, a)).epsilon(1e-12));

        // positive affine maps leave plcc unchanged to near machine precision
        std::vector<double> aff = a;
        for (double& v : aff) v = 1.7 * v + 0.3;
        CHECK(std::abs(plcc(aff, b) - plcc(a, b)) < 1e-12);
    }
}

TEST_CASE("accuracy") {
    CHECK(accuracy({1, 0, 1}, {1, 0, 1}) == 1.0);
    CHECK(accuracy({0, 1, 0}, {1, 0, 1}) == 0.0);
    // the 83.11% fixture: 8311 of 10000 correct
    std::vector<int> truth(10000, 1), pred(10000, 1);
    for (int i = 0; i < 1689; ++i) pred[static_cast<std::size_t>(i)] = 0;
    CHECK(accuracy(pred, truth) == doctest::Approx(0.8311).epsilon(1e-12));
    CHECK_THROWS(accuracy({}, {}));
    CHECK_THROWS(accuracy({2}, {1}));
}

TEST_CASE("aggregate_splits") {
    MetricReport a;
    a.srocc = 0.9;
    a.plcc = 0.8;
    a.n = 10;
    a.split_index = 0;

    SUBCASE("single report summarizes to itself") {
        auto s = aggregate_splits({a}, AggStatistic::mean);
        CHECK(s.at("srocc").value == 0.9);
        CHECK(s.at("srocc").std_dev == 0.0);
        CHECK(s.at("srocc").min == 0.9);
        CHECK(s.at("srocc").n_splits == 1);
    }

    SUBCASE("mean of two values") {
        MetricReport b = a;
        b.srocc = 1.0;
        b.split_index = 1;
        auto s = aggregate_splits({a, b}, AggStatistic::mean);
        CHECK(s.at("srocc").value == doctest::Approx(0.95).epsilon(1e-12));
        CHECK(s.at("srocc").max == 1.0);
    }

    SUBCASE("median shrugs off a single outlier") {
        std::vector<MetricReport> reports;
        for (int i = 0; i < 9; ++i) {
            MetricReport r;
            r.srocc = 0.90 + 0.005 * i;
            r.split_index = i;
            reports.push_back(r);
        }
        const double clean = aggregate_splits(reports, AggStatistic::median).at("srocc").value;
        reports[0].srocc = -0.5;  // one catastrophic split
        const double dirty = aggregate_splits(reports, AggStatistic::median).at("srocc").value;
        CHECK(std::abs(clean - dirty) <= 0.005 + 1e-12);
    }

    SUBCASE("csv emission carries both statistics") {
        auto mean_s = aggregate_splits({a}, AggStatistic::mean);
        auto med_s = aggregate_splits({a}, AggStatistic::median);
        const std::string csv = summary_csv(mean_s, med_s);
        CHECK(csv.find("metric,statistic,value,std,min,max,n_splits") == 0);
        CHECK(csv.find("srocc,mean,") != std::string::npos);
        CHECK(csv.find("srocc,median,") != std::string::npos);
    }
}
