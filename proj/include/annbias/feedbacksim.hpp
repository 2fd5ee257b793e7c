#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "annbias/dataset.hpp"
#include "annbias/errors.hpp"
#include "annbias/metrics.hpp"
#include "annbias/nncore.hpp"
#include "annbias/rng.hpp"

// Synthetic feedback-loop generator: a fixed ground-truth pool (Reservoir), a
// day-by-day model-in-the-loop top-2 ranking process with position-CTR
// features, and optional user-level corruption of position-2 clicks.

namespace annbias {

struct FeedbackSimConfig {
    int K = 500;                    // examples recorded per day
    int T = 100;                    // days
    double r = 0.0;                 // P(position-2 click observed as non-click)
    double sigma = 3.0;             // feature std around the label mean
    double p_click = 0.1;           // base click rate
    int reservoir_size = 100000;
    int heldout_size = 100000;
    int candidate_set_size = 10000;
    int top_per_set = 2;
    int n_features = 10;
    double ranker_l2 = 1.0;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (K < 2 || K % 2 != 0) throw ConfigError("FeedbackSimConfig: K must be even and >= 2");
        // topk_{T-2} must be a ranked day (topk_0 has no page positions)
        if (T < 3) throw ConfigError("FeedbackSimConfig: T must be >= 3");
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("FeedbackSimConfig: r must lie in [0, 1]");
        if (sigma < 0.0) throw ConfigError("FeedbackSimConfig: sigma must be >= 0");
        if (!(p_click >= 0.0 && p_click <= 1.0))
            throw ConfigError("FeedbackSimConfig: p_click must lie in [0, 1]");
        if (reservoir_size < 1 || heldout_size < 1)
            throw ConfigError("FeedbackSimConfig: reservoir/heldout sizes must be positive");
        if (candidate_set_size < top_per_set)
            throw ConfigError("FeedbackSimConfig: candidate set smaller than top_per_set");
        if (candidate_set_size > reservoir_size)
            throw ConfigError("FeedbackSimConfig: candidate_set_size must be <= reservoir_size");
        if (top_per_set != 2) throw ConfigError("FeedbackSimConfig: top_per_set must be 2");
        if (n_features < 1) throw ConfigError("FeedbackSimConfig: n_features must be >= 1");
        if (ranker_l2 < 0.0) throw ConfigError("FeedbackSimConfig: ranker_l2 must be >= 0");
    }
};

// Labels Bernoulli(p_click); feature j ~ N(label, sigma) independently.
inline Dataset sample_reservoir(const FeedbackSimConfig& cfg, Rng& rng) {
    cfg.validate();
    Dataset data;
    data.X.resize(cfg.reservoir_size, cfg.n_features);
    data.y.resize(cfg.reservoir_size);
    for (int i = 0; i < cfg.reservoir_size; ++i) {
        const double label = rng.bernoulli(cfg.p_click) ? 1.0 : 0.0;
        data.y[i] = label;
        for (int j = 0; j < cfg.n_features; ++j)
            data.X(i, j) = rng.normal(label, cfg.sigma);
    }
    return data;
}

// Logistic regression scorer: score = X*w + intercept.
struct LogisticRanker {
    Vector weights;
    double intercept = 0.0;
    int iterations = 0;

    Vector score(const Matrix& X) const {
        return (X * weights).array() + intercept;
    }
    Vector predict_proba(const Matrix& X) const {
        Vector s = score(X);
        return 1.0 / (1.0 + (-s.array()).exp());
    }
};

namespace detail {

// Largest eigenvalue of the second-moment matrix of [X 1] by power iteration;
// bounds the logistic Hessian by L = lambda_max/4 (+ penalty curvature).
inline double second_moment_lambda_max(const Matrix& X) {
    const Eigen::Index d = X.cols();
    const double n = static_cast<double>(X.rows());
    Matrix m(d + 1, d + 1);
    m.topLeftCorner(d, d) = (X.transpose() * X) / n;
    Vector col_means = X.colwise().mean();
    m.topRightCorner(d, 1) = col_means;
    m.bottomLeftCorner(1, d) = col_means.transpose();
    m(d, d) = 1.0;
    Vector v = Vector::Ones(d + 1).normalized();
    double lambda = 1.0;
    for (int it = 0; it < 64; ++it) {
        Vector w = m * v;
        lambda = w.norm();
        if (lambda == 0.0) return 1.0;
        v = w / lambda;
    }
    return lambda;
}

}  // namespace detail

// Full-batch gradient descent on mean BCE with the l2 penalty l2*||w||^2 added
// to the summed loss (intercept unpenalized). Stops at gradient max-norm below
// 1e-6 or 1000 iterations. The step size 1/L is safe for the worst-case
// sigmoid curvature.
inline LogisticRanker train_ranker(const Matrix& X, const Vector& y, double l2 = 1.0,
                                   int max_iters = 1000, double tol = 1e-6) {
    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    if (n == 0) throw InputError("train_ranker: empty dataset");
    if (y.size() != n) throw InputError("train_ranker: X/y row counts disagree");
    const double pos = y.sum();
    if (pos == 0.0 || pos == static_cast<double>(n))
        throw TrainingError("train_ranker: single-class data");

    const double n_d = static_cast<double>(n);
    const double lipschitz =
        detail::second_moment_lambda_max(X) / 4.0 + 2.0 * l2 / n_d;
    const double lr = 1.0 / lipschitz;

    LogisticRanker model;
    model.weights = Vector::Zero(d);
    Vector grad_w(d);
    for (int it = 0; it < max_iters; ++it) {
        Vector s = (X * model.weights).array() + model.intercept;
        Vector p = 1.0 / (1.0 + (-s.array()).exp());
        Vector resid = p - y;
        grad_w = (X.transpose() * resid + 2.0 * l2 * model.weights) / n_d;
        const double grad_b = resid.sum() / n_d;
        const double max_norm = std::max(grad_w.cwiseAbs().maxCoeff(), std::abs(grad_b));
        model.iterations = it + 1;
        if (max_norm < tol) break;
        model.weights -= lr * grad_w;
        model.intercept -= lr * grad_b;
    }
    if (!model.weights.allFinite() || !std::isfinite(model.intercept))
        throw TrainingError("train_ranker: diverged to non-finite parameters");
    return model;
}

struct DayCtr {
    int day = 0;          // index t of topk_t
    double position1 = 0.0;
    double position2 = 0.0;
};

// CTR per (day, position) for the two retained days.
struct BTable {
    int day_prev = 0;   // T-2
    int day_last = 0;   // T-1
    double prev_pos1 = 0.0, prev_pos2 = 0.0;
    double last_pos1 = 0.0, last_pos2 = 0.0;
};

struct FeedbackLoopOutput {
    Dataset topk_last;   // day T-1, with position and b attached
    Dataset topk_prev;   // day T-2, with position and b attached
    BTable b_table;
    Dataset heldout;     // separate 100k draw, no position/b
    std::vector<DayCtr> ctr_history;  // topk_1 .. topk_T
};

namespace detail {

struct DaySet {
    std::vector<std::uint32_t> row;  // reservoir row index
    std::vector<double> label;       // observed (possibly corrupted) click
    std::vector<int> position;       // 1 or 2; empty labels day 0
};

inline Dataset day_set_to_dataset(const DaySet& day, const Dataset& reservoir) {
    Dataset out;
    const Eigen::Index n = static_cast<Eigen::Index>(day.row.size());
    out.X.resize(n, reservoir.n_features());
    out.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.X.row(i) = reservoir.X.row(day.row[static_cast<std::size_t>(i)]);
        out.y[i] = day.label[static_cast<std::size_t>(i)];
    }
    out.position = day.position;
    return out;
}

inline double position_ctr(const DaySet& day, int position) {
    double clicks = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < day.row.size(); ++i) {
        if (day.position[i] == position) {
            clicks += day.label[i];
            ++count;
        }
    }
    return count == 0 ? 0.0 : clicks / static_cast<double>(count);
}

}  // namespace detail

// Algorithm: topk_0 = K random reservoir rows; each day i trains a logistic
// ranker M_i on topk_i (and topk_{i-1} when present), draws K/2 candidate sets
// of candidate_set_size rows without replacement from the Reservoir, records
// the two top-scored rows of each set as positions 1 and 2, and flips a
// position-2 click to 0 with probability r. After the loop the four
// (day, position) CTRs of days T-2 and T-1 are attached as each row's b.
// Corruption draws come from their own seed stream, so r=0 runs are
// byte-identical to a corruption-free simulation.
inline FeedbackLoopOutput run_feedback_loop(const FeedbackSimConfig& cfg) {
    cfg.validate();
    Rng reservoir_rng(derive_seed(cfg.rng_seed, 1));
    Rng heldout_rng(derive_seed(cfg.rng_seed, 2));
    Rng topk0_rng(derive_seed(cfg.rng_seed, 3));
    Rng candidate_rng(derive_seed(cfg.rng_seed, 4));
    Rng corruption_rng(derive_seed(cfg.rng_seed, 5));

    const Dataset reservoir = sample_reservoir(cfg, reservoir_rng);
    FeedbackLoopOutput out;
    {
        FeedbackSimConfig heldout_cfg = cfg;
        heldout_cfg.reservoir_size = cfg.heldout_size;
        out.heldout = sample_reservoir(heldout_cfg, heldout_rng);
    }

    std::vector<std::uint32_t> perm(static_cast<std::size_t>(cfg.reservoir_size));
    std::iota(perm.begin(), perm.end(), 0u);

    detail::DaySet prev_day;  // topk_{i-1}
    detail::DaySet curr_day;  // topk_i
    {
        std::vector<std::uint32_t> first;
        sample_without_replacement(topk0_rng, perm, static_cast<std::size_t>(cfg.K), first);
        curr_day.row = std::move(first);
        curr_day.label.reserve(curr_day.row.size());
        for (std::uint32_t idx : curr_day.row) curr_day.label.push_back(reservoir.y[idx]);
        curr_day.position.assign(curr_day.row.size(), 0);  // no page positions on day 0
    }

    detail::DaySet saved_prev, saved_last;  // topk_{T-2}, topk_{T-1}

    // Training matrices reused across days.
    Matrix train_X;
    Vector train_y;
    std::vector<std::uint32_t> candidates;
    const std::size_t set_size = static_cast<std::size_t>(cfg.candidate_set_size);

    for (int day = 0; day < cfg.T; ++day) {
        const std::size_t n_prev = prev_day.row.size();
        const std::size_t n_curr = curr_day.row.size();
        train_X.resize(static_cast<Eigen::Index>(n_prev + n_curr), cfg.n_features);
        train_y.resize(static_cast<Eigen::Index>(n_prev + n_curr));
        for (std::size_t i = 0; i < n_curr; ++i) {
            train_X.row(static_cast<Eigen::Index>(i)) = reservoir.X.row(curr_day.row[i]);
            train_y[static_cast<Eigen::Index>(i)] = curr_day.label[i];
        }
        for (std::size_t i = 0; i < n_prev; ++i) {
            train_X.row(static_cast<Eigen::Index>(n_curr + i)) = reservoir.X.row(prev_day.row[i]);
            train_y[static_cast<Eigen::Index>(n_curr + i)] = prev_day.label[i];
        }

        LogisticRanker ranker;
        try {
            ranker = train_ranker(train_X, train_y, cfg.ranker_l2);
        } catch (const TrainingError& e) {
            throw TrainingError("feedback loop day " + std::to_string(day) + ": " + e.what());
        }

        detail::DaySet next_day;
        next_day.row.reserve(static_cast<std::size_t>(cfg.K));
        next_day.label.reserve(static_cast<std::size_t>(cfg.K));
        next_day.position.reserve(static_cast<std::size_t>(cfg.K));
        for (int set = 0; set < cfg.K / 2; ++set) {
            sample_without_replacement(candidate_rng, perm, set_size, candidates);
            // top two by score, ties broken by lower reservoir row index
            std::uint32_t best = candidates[0], second = candidates[1];
            double s_best = ranker.weights.dot(reservoir.X.row(best)) + ranker.intercept;
            double s_second = ranker.weights.dot(reservoir.X.row(second)) + ranker.intercept;
            if (s_second > s_best || (s_second == s_best && second < best)) {
                std::swap(best, second);
                std::swap(s_best, s_second);
            }
            for (std::size_t c = 2; c < candidates.size(); ++c) {
                const std::uint32_t idx = candidates[c];
                const double s = ranker.weights.dot(reservoir.X.row(idx)) + ranker.intercept;
                if (s > s_best || (s == s_best && idx < best)) {
                    second = best;
                    s_second = s_best;
                    best = idx;
                    s_best = s;
                } else if (s > s_second || (s == s_second && idx < second)) {
                    second = idx;
                    s_second = s;
                }
            }
            double label1 = reservoir.y[best];
            double label2 = reservoir.y[second];
            if (label2 == 1.0 && cfg.r > 0.0 && corruption_rng.bernoulli(cfg.r)) label2 = 0.0;
            next_day.row.push_back(best);
            next_day.label.push_back(label1);
            next_day.position.push_back(1);
            next_day.row.push_back(second);
            next_day.label.push_back(label2);
            next_day.position.push_back(2);
        }

        out.ctr_history.push_back({day + 1, detail::position_ctr(next_day, 1),
                                   detail::position_ctr(next_day, 2)});
        if (day + 1 == cfg.T - 2) saved_prev = next_day;
        if (day + 1 == cfg.T - 1) saved_last = next_day;

        prev_day = std::move(curr_day);
        curr_day = std::move(next_day);
    }

    out.b_table.day_prev = cfg.T - 2;
    out.b_table.day_last = cfg.T - 1;
    out.b_table.prev_pos1 = detail::position_ctr(saved_prev, 1);
    out.b_table.prev_pos2 = detail::position_ctr(saved_prev, 2);
    out.b_table.last_pos1 = detail::position_ctr(saved_last, 1);
    out.b_table.last_pos2 = detail::position_ctr(saved_last, 2);

    out.topk_prev = detail::day_set_to_dataset(saved_prev, reservoir);
    out.topk_last = detail::day_set_to_dataset(saved_last, reservoir);
    out.topk_prev.b.resize(out.topk_prev.n());
    for (Eigen::Index i = 0; i < out.topk_prev.n(); ++i)
        out.topk_prev.b[i] = out.topk_prev.position[static_cast<std::size_t>(i)] == 1
                                 ? out.b_table.prev_pos1
                                 : out.b_table.prev_pos2;
    out.topk_last.b.resize(out.topk_last.n());
    for (Eigen::Index i = 0; i < out.topk_last.n(); ++i)
        out.topk_last.b[i] = out.topk_last.position[static_cast<std::size_t>(i)] == 1
                                 ? out.b_table.last_pos1
                                 : out.b_table.last_pos2;
    return out;
}

// FL training set as used by the paper's evaluations: the last two days.
inline Dataset feedback_training_set(const FeedbackLoopOutput& out) {
    return concat(out.topk_prev, out.topk_last);
}

// Naive baseline: predict the average of the four (day, position) CTR cells.
// Returns that average and the per-row MSE of b against it (the paper's upper
// bound on the Bias network's probe MSE).
inline std::pair<double, double> naive_ctr_baseline(const FeedbackLoopOutput& out) {
    const BTable& t = out.b_table;
    const double avg = (t.prev_pos1 + t.prev_pos2 + t.last_pos1 + t.last_pos2) / 4.0;
    double sum_sq = 0.0;
    Eigen::Index n = 0;
    for (const Dataset* d : {&out.topk_prev, &out.topk_last}) {
        for (Eigen::Index i = 0; i < d->n(); ++i) {
            const double diff = d->b[i] - avg;
            sum_sq += diff * diff;
        }
        n += d->n();
    }
    return {avg, n == 0 ? 0.0 : sum_sq / static_cast<double>(n)};
}

// Trains a logistic model on one fresh heldout draw and evaluates on a second
// independent draw; the paper's upper-bound AUC/log-loss on RUS data.
struct LogisticBound {
    double auc = 0.0;
    double log_loss = 0.0;
};

inline LogisticBound heldout_logistic_bound(const FeedbackSimConfig& cfg, std::uint64_t seed) {
    FeedbackSimConfig draw_cfg = cfg;
    draw_cfg.reservoir_size = cfg.heldout_size;
    Rng train_rng(derive_seed(seed, 11));
    Rng eval_rng(derive_seed(seed, 12));
    Dataset train_set = sample_reservoir(draw_cfg, train_rng);
    Dataset eval_set = sample_reservoir(draw_cfg, eval_rng);
    LogisticRanker model = train_ranker(train_set.X, train_set.y, cfg.ranker_l2);
    Vector p = model.predict_proba(eval_set.X);
    LogisticBound bound;
    bound.auc = auc(eval_set.y, p);
    bound.log_loss = log_loss(eval_set.y, p);
    return bound;
}

}  // namespace annbias
