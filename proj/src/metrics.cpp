#include "hyperimage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hyperimage {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

void check_pair(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail("correlation: length mismatch");
    if (a.size() < 2) fail("correlation: need at least two samples");
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) fail("correlation: constant input is undefined");
    return cov / std::sqrt(va * vb);
}

// 1-based mid-ranks; ties share the average of their rank range
std::vector<double> mid_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

// merge sort counting strict inversions
std::size_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo,
                             std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::size_t inv = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[i] <= v[j]) scratch[k++] = v[i++];
        else {
            inv += mid - i;
            scratch[k++] = v[j++];
        }
    }
    while (i < mid) scratch[k++] = v[i++];
    while (j < hi) scratch[k++] = v[j++];
    std::copy(scratch.begin() + static_cast<long>(lo), scratch.begin() + static_cast<long>(hi),
              v.begin() + static_cast<long>(lo));
    return inv;
}

// sum over tie groups of t*(t-1)/2 under the given key equality
template <class Key>
double tie_pairs(std::vector<Key> keys) {
    std::sort(keys.begin(), keys.end());
    double total = 0.0;
    std::size_t i = 0;
    while (i < keys.size()) {
        std::size_t j = i;
        while (j + 1 < keys.size() && keys[j + 1] == keys[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        total += t * (t - 1.0) / 2.0;
        i = j + 1;
    }
    return total;
}

}  // namespace

double srocc(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    return pearson(mid_ranks(pred), mid_ranks(truth));
}

double plcc(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    return pearson(pred, truth);
}

double kendall(const std::vector<double>& pred, const std::vector<double>& truth) {
    check_pair(pred, truth);
    const std::size_t n = pred.size();

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        if (pred[i] != pred[j]) return pred[i] < pred[j];
        return truth[i] < truth[j];
    });

    const double n0 = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
    const double n1 = tie_pairs(pred);
    const double n2 = tie_pairs(truth);
    std::vector<std::pair<double, double>> joint(n);
    for (std::size_t i = 0; i < n; ++i) joint[i] = {pred[i], truth[i]};
    const double n3 = tie_pairs(joint);

    if (n0 == n1 || n0 == n2) fail("correlation: constant input is undefined");

    std::vector<double> y(n), scratch(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = truth[order[i]];
    const double discordant = static_cast<double>(count_inversions(y, scratch, 0, n));

    const double concordant_plus_discordant = n0 - n1 - n2 + n3;
    const double numer = concordant_plus_discordant - 2.0 * discordant;
    return numer / std::sqrt((n0 - n1) * (n0 - n2));
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) fail("accuracy: length mismatch");
    if (pred.empty()) fail("accuracy: empty input");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] != 0 && truth[i] != 1) fail("accuracy: labels must be 0 or 1");
        if (pred[i] != 0 && pred[i] != 1) fail("accuracy: labels must be 0 or 1");
        if (pred[i] == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

MetricReport correlation_report(const std::vector<double>& pred, const std::vector<double>& truth,
                                int split_index) {
    MetricReport r;
    r.n = pred.size();
    r.split_index = split_index;
    r.srocc = srocc(pred, truth);
    r.plcc = plcc(pred, truth);
    r.kendall = kendall(pred, truth);
    return r;
}

std::map<std::string, MetricSummary> aggregate_splits(const std::vector<MetricReport>& reports,
                                                      AggStatistic statistic) {
    if (reports.empty()) fail("aggregate_splits: no reports");
    std::map<std::string, std::vector<double>> values;
    for (const auto& r : reports) {
        if (r.srocc) values["srocc"].push_back(*r.srocc);
        if (r.plcc) values["plcc"].push_back(*r.plcc);
        if (r.kendall) values["kendall"].push_back(*r.kendall);
        if (r.accuracy) values["accuracy"].push_back(*r.accuracy);
    }
    std::map<std::string, MetricSummary> out;
    for (auto& [name, v] : values) {
        MetricSummary s;
        s.n_splits = v.size();
        s.min = *std::min_element(v.begin(), v.end());
        s.max = *std::max_element(v.begin(), v.end());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        if (statistic == AggStatistic::mean) {
            s.value = mean;
        } else {
            std::vector<double> sorted = v;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t m = sorted.size();
            s.value = (m % 2 == 1) ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        }
        if (v.size() > 1) {
            double acc = 0.0;
            for (double x : v) acc += (x - mean) * (x - mean);
            s.std_dev = std::sqrt(acc / static_cast<double>(v.size() - 1));
        }
        out[name] = s;
    }
    return out;
}

std::string summary_csv(const std::map<std::string, MetricSummary>& mean_summary,
                        const std::map<std::string, MetricSummary>& median_summary) {
    std::ostringstream os;
    os << "metric,statistic,value,std,min,max,n_splits\n";
    os.precision(10);
    for (const auto& [name, s] : mean_summary)
        os << name << ",mean," << s.value << "," << s.std_dev << "," << s.min << "," << s.max << ","
           << s.n_splits << "\n";
    for (const auto& [name, s] : median_summary)
        os << name << ",median," << s.value << "," << s.std_dev << "," << s.min << "," << s.max << ","
           << s.n_splits << "\n";
    return os.str();
}

}  // namespace hyperimage
