#pragma once

#include <vector>

#include "toc/error.hpp"

namespace toc {

// Exact GP regression in double precision: Matern-5/2 with per-dimension
// length scales, targets standardized by the caller or via fit().
class GpModel {
public:
    // X: n x d inputs in [0,1]^d; y: raw targets (standardized internally).
    // Hyperparameters are fit by fixed-step gradient ascent on the log
    // marginal likelihood (50 steps, no restarts).
    static GpModel fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                       double noise = 1e-8, int grad_steps = 50);

    // Posterior mean and variance in the raw target scale.
    std::pair<double, double> predict(const std::vector<double>& x) const;

    double y_mean() const { return y_mean_; }
    double y_std() const { return y_std_; }

private:
    std::vector<std::vector<double>> X_;
    std::vector<double> y_;  // standardized
    double y_mean_ = 0.0, y_std_ = 1.0;
    std::vector<double> log_ls_;
    double log_sf_ = 0.0;
    double noise_ = 1e-8;
    std::vector<double> L_;      // n x n lower Cholesky of K + noise I
    std::vector<double> alpha_;  // (K + noise I)^-1 y

    double kernel(const std::vector<double>& a, const std::vector<double>& b) const;
    void refactor();  // recompute L_, alpha_ for current hyperparameters
    double log_marginal() const;
};

// Standard normal pdf/cdf used by the acquisition function.
double norm_pdf(double z);
double norm_cdf(double z);

}  // namespace toc
