#pragma once

#include <cmath>
#include <string>

#include "annbias/errors.hpp"
#include "annbias/nncore.hpp"

// The three loss components: binary cross entropy, bias squared error, and the
// squared minibatch covariance, each with value and analytic gradient w.r.t.
// the predictions appearing in it. All values are means over the minibatch so
// the lambda trade-off and learning rates are batch-size independent.

namespace annbias {

inline constexpr double kProbClamp = 1e-12;

struct LossValue {
    double value = 0.0;
    Vector grad;  // w.r.t. the predicted quantity, one entry per example
};

struct NoisyLossValue {
    double value = 0.0;
    double bce = 0.0;       // Loss_Y component
    double sq_cov = 0.0;    // Cov^2 component
    Vector grad_y_hat;
    Vector grad_b_hat;
};

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

inline LossValue bce_loss(const Vector& y, const Vector& y_hat) {
    const Eigen::Index n = y.size();
    if (n == 0) throw InputError("bce_loss: empty batch");
    if (y_hat.size() != n) throw InputError("bce_loss: y/y_hat size mismatch");
    LossValue out;
    out.grad.resize(n);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double p = clamp_prob(y_hat[i]);
        sum -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
        out.grad[i] = (p - y[i]) / (static_cast<double>(n) * p * (1.0 - p));
    }
    out.value = sum / static_cast<double>(n);
    return out;
}

inline LossValue bias_mse_loss(const Vector& b, const Vector& b_hat) {
    const Eigen::Index n = b.size();
    if (n == 0) throw InputError("bias_mse_loss: empty batch");
    if (b_hat.size() != n) throw InputError("bias_mse_loss: b/b_hat size mismatch");
    LossValue out;
    Vector diff = b_hat - b;
    out.value = diff.squaredNorm() / static_cast<double>(n);
    out.grad = (2.0 / static_cast<double>(n)) * diff;
    return out;
}

// Squared sample covariance with the Bessel-corrected (n-1) denominator.
// Means are taken over the minibatch. d(Cov^2)/d(b_hat_i) = 2*Cov*(b_i - mean_b)/(n-1);
// the mean-of-b_hat term contributes nothing since sum(b_i - mean_b) = 0.
inline LossValue sq_cov_loss(const Vector& b, const Vector& b_hat) {
    const Eigen::Index n = b.size();
    if (n < 2) throw InputError("sq_cov_loss: sample covariance needs n >= 2, got "
                                + std::to_string(n));
    if (b_hat.size() != n) throw InputError("sq_cov_loss: b/b_hat size mismatch");
    const double mean_b = b.mean();
    const double mean_bh = b_hat.mean();
    const Vector centered_b = b.array() - mean_b;
    const double cov =
        (centered_b.array() * (b_hat.array() - mean_bh)).sum() / static_cast<double>(n - 1);
    LossValue out;
    out.value = cov * cov;
    out.grad = (2.0 * cov / static_cast<double>(n - 1)) * centered_b;
    return out;
}

// Loss_N = (1-lambda)*BCE + lambda*Cov^2. Gradients are returned separately
// w.r.t. y_hat and w.r.t. b_hat; the b_hat gradient is chained through the
// frozen Bias network into the Base network by the caller.
inline NoisyLossValue noisy_loss(const Vector& y, const Vector& y_hat,
                                 const Vector& b, const Vector& b_hat, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ConfigError("noisy_loss: lambda must lie in [0, 1], got " + std::to_string(lambda));
    if (y.size() != y_hat.size() || y.size() != b.size() || y.size() != b_hat.size())
        throw InputError("noisy_loss: batch size mismatch across inputs");
    LossValue bce = bce_loss(y, y_hat);
    LossValue cov = sq_cov_loss(b, b_hat);
    NoisyLossValue out;
    out.bce = bce.value;
    out.sq_cov = cov.value;
    out.value = (1.0 - lambda) * bce.value + lambda * cov.value;
    out.grad_y_hat = (1.0 - lambda) * bce.grad;
    out.grad_b_hat = lambda * cov.grad;
    return out;
}

}  // namespace annbias
