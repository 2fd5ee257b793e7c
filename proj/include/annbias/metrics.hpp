#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "annbias/errors.hpp"
#include "annbias/losses.hpp"
#include "annbias/nncore.hpp"

namespace annbias {

struct MetricsReport {
    double auc = 0.0;
    double log_loss = 0.0;
    double bias_probe_mse = 0.0;
    Eigen::Index n = 0;
    std::string tag;  // FL / RUS / heldout
};

// Probability that a random positive outranks a random negative, ties counted
// one half (Mann-Whitney). Computed by sort-and-midrank in O(n log n); the
// O(n^2) pair-counting formulation lives in the tests as the oracle.
inline double auc(const Vector& y, const Vector& scores) {
    const Eigen::Index n = y.size();
    if (scores.size() != n) throw InputError("auc: y/scores size mismatch");
    Eigen::Index n_pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) n_pos += (y[i] == 1.0) ? 1 : 0;
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw InputError("auc: undefined, both classes must be present");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        // midrank of the tie group spanning 1-based ranks [i+1, j+1]
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (y[order[k]] == 1.0) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double n_pos_d = static_cast<double>(n_pos);
    return (rank_sum_pos - n_pos_d * (n_pos_d + 1.0) / 2.0)
           / (n_pos_d * static_cast<double>(n_neg));
}

inline double log_loss(const Vector& y, const Vector& y_hat) {
    return bce_loss(y, y_hat).value;
}

// 100 * (auc_model - auc_ref) / auc_ref.
inline double relative_auc_gain(double auc_model, double auc_ref) {
    if (!(auc_ref > 0.0)) throw InputError("relative_auc_gain: reference AUC must be > 0");
    return 100.0 * (auc_model - auc_ref) / auc_ref;
}

inline double absolute_pp_diff(double auc_model, double auc_ref) {
    return 100.0 * (auc_model - auc_ref);
}

// --- small rank/statistics helpers used by the sweep analysis ---

inline std::vector<double> midranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
        i = j + 1;
    }
    return ranks;
}

// Spearman rank correlation with midrank ties (Pearson over ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw InputError("spearman: need two equal-length series with n >= 2");
    auto ra = midranks(a);
    auto rb = midranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) throw InputError("spearman: a series is constant");
    return num / std::sqrt(va * vb);
}

// One-sided binomial sign test: P(X >= successes) under X ~ Binomial(trials, 1/2).
inline double sign_test_p_value(int successes, int trials) {
    if (trials <= 0 || successes < 0 || successes > trials)
        throw InputError("sign_test_p_value: bad counts");
    double p = 0.0;
    for (int k = successes; k <= trials; ++k) {
        double log_c = std::lgamma(trials + 1.0) - std::lgamma(k + 1.0)
                       - std::lgamma(trials - k + 1.0);
        p += std::exp(log_c - trials * std::log(2.0));
    }
    return std::min(1.0, p);
}

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace annbias
