#include "toc/gp.hpp"

#include <cmath>
#include <cstdio>

namespace toc {

namespace {

// Lower Cholesky of an n x n SPD matrix, in place. Returns false if a
// non-positive pivot shows up.
bool cholesky(std::vector<double>& A, int n) {
    for (int j = 0; j < n; ++j) {
        double d = A[j * n + j];
        for (int k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
        if (d <= 0.0 || !std::isfinite(d)) return false;
        double Ljj = std::sqrt(d);
        A[j * n + j] = Ljj;
        for (int i = j + 1; i < n; ++i) {
            double s = A[i * n + j];
            for (int k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
            A[i * n + j] = s / Ljj;
        }
        for (int i = 0; i < j; ++i) A[i * n + j] = 0.0;
    }
    return true;
}

void solve_lower(const std::vector<double>& L, int n, std::vector<double>& b) {
    for (int i = 0; i < n; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= L[i * n + k] * b[k];
        b[i] = s / L[i * n + i];
    }
}

void solve_upper_t(const std::vector<double>& L, int n, std::vector<double>& b) {
    // solves L^T x = b
    for (int i = n - 1; i >= 0; --i) {
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= L[k * n + i] * b[k];
        b[i] = s / L[i * n + i];
    }
}

}  // namespace

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double GpModel::kernel(const std::vector<double>& a, const std::vector<double>& b) const {
    double r2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = (a[i] - b[i]) / std::exp(log_ls_[i]);
        r2 += d * d;
    }
    double r = std::sqrt(r2);
    double sr = std::sqrt(5.0) * r;
    double sf2 = std::exp(2.0 * log_sf_);
    return sf2 * (1.0 + sr + 5.0 * r2 / 3.0) * std::exp(-sr);
}

void GpModel::refactor() {
    int n = (int)X_.size();
    std::vector<double> K(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) {
            double k = kernel(X_[i], X_[j]);
            K[i * n + j] = k;
            K[j * n + i] = k;
        }
    double jitter = noise_;
    for (;;) {
        L_ = K;
        for (int i = 0; i < n; ++i) L_[i * n + i] += jitter;
        if (cholesky(L_, n)) break;
        jitter *= 10.0;
        if (jitter > 1e-4)
            fail(Error::Kind::Numeric, "gp: covariance not positive definite even with jitter 1e-4");
    }
    alpha_ = y_;
    solve_lower(L_, n, alpha_);
    solve_upper_t(L_, n, alpha_);
}

double GpModel::log_marginal() const {
    int n = (int)X_.size();
    double logdet = 0.0;
    for (int i = 0; i < n; ++i) logdet += std::log(L_[i * n + i]);
    double fit = 0.0;
    for (int i = 0; i < n; ++i) fit += y_[i] * alpha_[i];
    return -0.5 * fit - logdet - 0.5 * n * std::log(2.0 * M_PI);
}

GpModel GpModel::fit(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                     double noise, int grad_steps) {
    check(!X.empty() && X.size() == y.size(), Error::Kind::InvalidArg,
          "gp: need matching non-empty X and y");
    int n = (int)X.size();
    int d = (int)X[0].size();

    GpModel m;
    m.X_ = X;
    m.noise_ = noise;
    double mu = 0.0;
    for (double v : y) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : y) var += (v - mu) * (v - mu);
    var /= n;
    double sd = std::sqrt(var);
    if (sd < 1e-12) sd = 1.0;  // constant targets
    m.y_mean_ = mu;
    m.y_std_ = sd;
    m.y_.resize(n);
    for (int i = 0; i < n; ++i) m.y_[i] = (y[i] - mu) / sd;
    m.log_ls_.assign(d, std::log(0.5));
    m.log_sf_ = 0.0;
    m.refactor();

    // Gradient ascent on the log marginal likelihood. The gradient w.r.t. a
    // hyperparameter theta is 0.5 tr((alpha alpha^T - K^-1) dK/dtheta).
    double step = 0.05;
    for (int it = 0; it < grad_steps; ++it) {
        // Kinv via triangular solves against identity columns.
        std::vector<double> Kinv(n * n);
        std::vector<double> col(n);
        for (int j = 0; j < n; ++j) {
            std::fill(col.begin(), col.end(), 0.0);
            col[j] = 1.0;
            solve_lower(m.L_, n, col);
            solve_upper_t(m.L_, n, col);
            for (int i = 0; i < n; ++i) Kinv[i * n + j] = col[i];
        }

        std::vector<double> g_ls(d, 0.0);
        double g_sf = 0.0;
        double sf2 = std::exp(2.0 * m.log_sf_);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double w = m.alpha_[i] * m.alpha_[j] - Kinv[i * n + j];
                double kij = m.kernel(m.X_[i], m.X_[j]);
                g_sf += 0.5 * w * 2.0 * kij;
                double r2 = 0.0;
                for (int q = 0; q < d; ++q) {
                    double dd = (m.X_[i][q] - m.X_[j][q]) / std::exp(m.log_ls_[q]);
                    r2 += dd * dd;
                }
                double r = std::sqrt(r2);
                double sr = std::sqrt(5.0) * r;
                // d k / d log l_q = sf2 * (5/3) * exp(-sr) * (1 + sr) * (dx_q/l_q)^2
                double common = sf2 * (5.0 / 3.0) * std::exp(-sr) * (1.0 + sr);
                for (int q = 0; q < d; ++q) {
                    double dd = (m.X_[i][q] - m.X_[j][q]) / std::exp(m.log_ls_[q]);
                    g_ls[q] += 0.5 * w * common * dd * dd;
                }
            }

        double ml_before = m.log_marginal();
        std::vector<double> save_ls = m.log_ls_;
        double save_sf = m.log_sf_;
        for (int q = 0; q < d; ++q) {
            m.log_ls_[q] += step * g_ls[q];
            // keep length scales in a sane band
            m.log_ls_[q] = std::max(std::log(0.02), std::min(std::log(20.0), m.log_ls_[q]));
        }
        m.log_sf_ += step * g_sf;
        m.log_sf_ = std::max(std::log(1e-3), std::min(std::log(1e3), m.log_sf_));
        m.refactor();
        if (m.log_marginal() < ml_before) {
            // backtrack and shrink
            m.log_ls_ = save_ls;
            m.log_sf_ = save_sf;
            m.refactor();
            step *= 0.5;
            if (step < 1e-4) break;
        }
    }
    return m;
}

std::pair<double, double> GpModel::predict(const std::vector<double>& x) const {
    int n = (int)X_.size();
    std::vector<double> k(n);
    for (int i = 0; i < n; ++i) k[i] = kernel(X_[i], x);
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += k[i] * alpha_[i];
    std::vector<double> v = k;
    solve_lower(L_, n, v);
    double var = kernel(x, x);
    for (int i = 0; i < n; ++i) var -= v[i] * v[i];
    var = std::max(var, 1e-12);
    return {y_mean_ + y_std_ * mean, y_std_ * y_std_ * var};
}

}  // namespace toc
