#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dmarket/design.hpp"
#include "dmarket/error.hpp"
#include "dmarket/gaps.hpp"

namespace dmarket {

enum class Family { logistic, fractional_logit, negative_binomial };

inline const char* to_string(Family f) {
    switch (f) {
    case Family::logistic: return "logistic";
    case Family::fractional_logit: return "fractional_logit";
    case Family::negative_binomial: return "negative_binomial";
    }
    return "?";
}

inline std::optional<Family> parse_family(std::string_view s) {
    if (s == "logistic" || s == "logit") return Family::logistic;
    if (s == "fractional" || s == "fractional_logit") return Family::fractional_logit;
    if (s == "negbin" || s == "negative_binomial" || s == "nb2") return Family::negative_binomial;
    return std::nullopt;
}

struct FitOptions {
    int max_iterations = 200;
    // Max-norm of the score at which iteration stops. Defaults to 1e-8 for the
    // logit families and 1e-6 for the negative binomial.
    std::optional<double> gradient_tolerance;
    // Multiply the cluster-robust covariance by G/(G-1).
    bool small_sample_correction = false;
};

struct FitResult {
    Family family = Family::logistic;
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance; // cluster-robust
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd z_values;
    double log_likelihood = 0;
    std::size_t n = 0;
    std::size_t n_clusters = 0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0;
    // NB2 variance is mu + dispersion * mu^2; zero for the logit families.
    double dispersion = 0;
    bool dispersion_at_boundary = false;
    std::vector<std::string> warnings;
    DesignSpec spec;

    std::optional<Eigen::Index> find(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return static_cast<Eigen::Index>(j);
        return std::nullopt;
    }

    double coef(const std::string& name) const {
        auto j = find(name);
        if (!j) throw InputError("no coefficient named '" + name + "'");
        return coefficients[*j];
    }

    double se(const std::string& name) const {
        auto j = find(name);
        if (!j) throw InputError("no coefficient named '" + name + "'");
        return standard_errors[*j];
    }
};

namespace glm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double sigmoid(double eta) {
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// log(1 + e^eta) without overflow.
inline double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

// Bernoulli (quasi-)log-likelihood with logit link; y may be fractional.
inline double bernoulli_loglik(const MatrixXd& X, const VectorXd& y, const VectorXd& beta) {
    const VectorXd eta = X * beta;
    double ll = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - softplus(eta[i]);
    return ll;
}

inline VectorXd bernoulli_score(const MatrixXd& X, const VectorXd& y, const VectorXd& beta) {
    const VectorXd eta = X * beta;
    VectorXd r(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) r[i] = y[i] - sigmoid(eta[i]);
    return X.transpose() * r;
}

namespace nb_detail {

// (1/a^2) log(1 + a mu) - mu / (a (1 + a mu)), and its derivative in a.
// Both cancel badly for small a*mu, where a series is used instead.
inline double nb_a(double a, double mu) {
    const double x = a * mu;
    if (x < 1e-3) return mu * mu * (0.5 - 2.0 / 3.0 * x + 0.75 * x * x - 0.8 * x * x * x + 5.0 / 6.0 * x * x * x * x);
    return std::log1p(x) / (a * a) - mu / (a * (1.0 + x));
}

inline double nb_da(double a, double mu) {
    const double x = a * mu;
    if (x < 1e-3) return mu * mu * mu * (-2.0 / 3.0 + 1.5 * x - 2.4 * x * x + 10.0 / 3.0 * x * x * x);
    return mu / ((1.0 + x) * a * a) - 2.0 * std::log1p(x) / (a * a * a) + mu * (1.0 + 2.0 * x) / (a * a * (1.0 + x) * (1.0 + x));
}

// (1/a) log(1 + a mu), tending to mu as a -> 0.
inline double nb_log_term(double a, double mu) {
    const double x = a * mu;
    return x < 1e-12 ? mu : std::log1p(x) / a;
}

} // namespace nb_detail

// NB2 log-likelihood; variance mu + alpha mu^2, log link.
inline double nb2_loglik(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, double alpha) {
    const VectorXd eta = X * beta;
    double ll = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double mu = std::exp(eta[i]);
        const auto yi = static_cast<long>(y[i]);
        for (long k = 1; k < yi; ++k) ll += std::log1p(alpha * static_cast<double>(k));
        ll += -std::lgamma(y[i] + 1.0) + y[i] * eta[i] - y[i] * std::log1p(alpha * mu) - nb_detail::nb_log_term(alpha, mu);
    }
    return ll;
}

// Gradient of nb2_loglik in (beta, alpha); alpha is the last entry.
inline VectorXd nb2_score(const MatrixXd& X, const VectorXd& y, const VectorXd& beta, double alpha) {
    const VectorXd eta = X * beta;
    VectorXd r(eta.size());
    double ga = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double mu = std::exp(eta[i]);
        r[i] = (y[i] - mu) / (1.0 + alpha * mu);
        const auto yi = static_cast<long>(y[i]);
        for (long k = 1; k < yi; ++k) ga += k / (1.0 + alpha * k);
        ga += nb_detail::nb_a(alpha, mu) - y[i] * mu / (1.0 + alpha * mu);
    }
    VectorXd g(X.cols() + 1);
    g.head(X.cols()) = X.transpose() * r;
    g[X.cols()] = ga;
    return g;
}

// Weighted cross-product X' diag(w) X.
inline MatrixXd weighted_gram(const MatrixXd& X, const VectorXd& w) {
    return X.transpose() * (X.array().colwise() * w.array()).matrix();
}

// A^{-1} B A^{-1} with A = X' diag(hess_w) X and B the sum over clusters of
// outer products of per-cluster score totals. `score_w` and `hess_w` are the
// first and negated second derivatives of each row's log-likelihood in its
// linear predictor.
inline MatrixXd clustered_sandwich(const MatrixXd& X, const VectorXd& score_w, const VectorXd& hess_w,
                                   const std::vector<std::size_t>& cluster, std::size_t n_clusters,
                                   bool small_sample_correction = false) {
    const auto p = X.cols();
    const MatrixXd A = weighted_gram(X, hess_w);
    Eigen::LDLT<MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff()))
        throw NumericError("singular Hessian in sandwich covariance");
    MatrixXd sums = MatrixXd::Zero(static_cast<Eigen::Index>(n_clusters), p);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        sums.row(static_cast<Eigen::Index>(cluster[static_cast<std::size_t>(i)])) += score_w[i] * X.row(i);
    const MatrixXd B = sums.transpose() * sums;
    const MatrixXd Ainv = ldlt.solve(MatrixXd::Identity(p, p));
    MatrixXd V = Ainv * B * Ainv;
    V = 0.5 * (V + V.transpose());
    if (small_sample_correction && n_clusters > 1)
        V *= static_cast<double>(n_clusters) / static_cast<double>(n_clusters - 1);
    return V;
}

// Per-row first and negated second derivatives in eta at the estimate.
inline std::pair<VectorXd, VectorXd> row_derivatives(const FitResult& fit, const MatrixXd& X, const VectorXd& y) {
    const VectorXd eta = X * fit.coefficients;
    VectorXd s(eta.size()), h(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (fit.family == Family::negative_binomial) {
            const double mu = std::exp(eta[i]);
            const double a = fit.dispersion;
            s[i] = (y[i] - mu) / (1.0 + a * mu);
            h[i] = mu * (1.0 + a * y[i]) / ((1.0 + a * mu) * (1.0 + a * mu));
        } else {
            const double mu = sigmoid(eta[i]);
            s[i] = y[i] - mu;
            h[i] = mu * (1.0 - mu);
        }
    }
    return {s, h};
}

inline void finish_inference(FitResult& fit, const DesignMatrix& d, const VectorXd& y, const FitOptions& opt) {
    auto [s, h] = row_derivatives(fit, d.X, y);
    fit.n_clusters = d.clusters();
    if (fit.n_clusters == 1) fit.warnings.emplace_back("single cluster: score total is zero at the optimum, covariance degenerate");
    else if (fit.n_clusters < 10) fit.warnings.emplace_back("few clusters (" + std::to_string(fit.n_clusters) + "): sandwich covariance is unreliable");
    fit.covariance = clustered_sandwich(d.X, s, h, d.cluster, d.clusters(), opt.small_sample_correction);
    fit.standard_errors = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    fit.z_values = fit.coefficients.cwiseQuotient(fit.standard_errors);
}

inline void check_design(const DesignMatrix& d, const VectorXd& y) {
    if (d.X.rows() != y.size()) throw InputError("outcome length does not match design rows");
    if (d.X.rows() == 0 || d.X.cols() == 0) throw InputError("empty design");
    if (d.X.rows() < d.X.cols()) throw NumericError("rank deficient design: fewer rows than columns");
}

inline Eigen::LDLT<MatrixXd> factor_information(const MatrixXd& H) {
    Eigen::LDLT<MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-13 * std::max(1.0, ldlt.vectorD().cwiseAbs().maxCoeff()))
        throw NumericError("information matrix is singular (rank deficient design)");
    return ldlt;
}

// Newton-Raphson (IRLS) for the logit-link Bernoulli likelihood with step
// halving on the objective.
inline FitResult fit_bernoulli(const DesignMatrix& d, const VectorXd& y, Family family, const FitOptions& opt) {
    check_design(d, y);
    const double tol = opt.gradient_tolerance.value_or(1e-8);
    FitResult fit;
    fit.family = family;
    fit.names = d.names;
    fit.spec = d.spec;
    fit.n = static_cast<std::size_t>(y.size());
    VectorXd beta = VectorXd::Zero(d.X.cols());
    double ll = bernoulli_loglik(d.X, y, beta);
    double last_step = 0;
    for (int it = 0; it <= opt.max_iterations; ++it) {
        const VectorXd eta = d.X * beta;
        VectorXd r(eta.size()), w(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double mu = sigmoid(eta[i]);
            r[i] = y[i] - mu;
            w[i] = mu * (1.0 - mu);
        }
        const VectorXd grad = d.X.transpose() * r;
        fit.gradient_norm = grad.cwiseAbs().maxCoeff();
        fit.iterations = it;
        const VectorXd step = factor_information(weighted_gram(d.X, w)).solve(grad);
        last_step = step.cwiseAbs().maxCoeff();
        if (fit.gradient_norm <= tol) {
            fit.converged = true;
            break;
        }
        if (it == opt.max_iterations) break;
        double t = 1.0;
        VectorXd trial = beta + step;
        double ll_new = bernoulli_loglik(d.X, y, trial);
        while (!(ll_new >= ll - 1e-12 * (1.0 + std::abs(ll))) && t > 1e-10) {
            t *= 0.5;
            trial = beta + t * step;
            ll_new = bernoulli_loglik(d.X, y, trial);
        }
        beta = trial;
        ll = ll_new;
    }
    fit.coefficients = beta;
    fit.log_likelihood = bernoulli_loglik(d.X, y, beta);
    // At a genuine optimum the Newton step is negligible. Under separation the
    // score vanishes only because the coefficients run off to infinity, and
    // each Newton step stays of order one.
    if (fit.converged && last_step > 1e-3) {
        fit.converged = false;
        fit.warnings.emplace_back("perfect separation: fitted probabilities numerically 0 or 1");
    }
    if (!fit.converged && fit.warnings.empty())
        fit.warnings.emplace_back("did not converge within " + std::to_string(opt.max_iterations) + " iterations");
    finish_inference(fit, d, y, opt);
    return fit;
}

} // namespace glm

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline FitResult fit_logistic(const DesignMatrix& d, const Eigen::VectorXd& y, const FitOptions& opt = {}) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] != 0.0 && y[i] != 1.0) throw InputError("logistic outcome must be 0 or 1");
    return glm::fit_bernoulli(d, y, Family::logistic, opt);
}

// Bernoulli quasi-likelihood with logit mean for outcomes in [0, 1].
inline FitResult fit_fractional_logit(const DesignMatrix& d, const Eigen::VectorXd& y, const FitOptions& opt = {}) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (!(y[i] >= 0.0 && y[i] <= 1.0)) throw InputError("fractional outcome must lie in [0, 1]");
    return glm::fit_bernoulli(d, y, Family::fractional_logit, opt);
}

// NB2 by joint Newton steps in (beta, log alpha), with step halving and a
// coordinate fallback where the joint Hessian is not negative definite. The
// dispersion is held inside [1e-8, 1e4]; pinning at the lower bound is the
// Poisson limit and is reported as a boundary solution.
inline FitResult fit_negative_binomial(const DesignMatrix& d, const Eigen::VectorXd& y, const FitOptions& opt = {}) {
    using namespace glm;
    check_design(d, y);
    double total = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!(y[i] >= 0.0) || y[i] != std::floor(y[i])) throw InputError("count outcome must be a nonnegative integer");
        total += y[i];
    }
    if (total == 0) throw InputError("count outcome is all zero");

    constexpr double kMinAlpha = 1e-8, kMaxAlpha = 1e4;
    const double tol = opt.gradient_tolerance.value_or(1e-6);
    const auto p = d.X.cols();
    FitResult fit;
    fit.family = Family::negative_binomial;
    fit.names = d.names;
    fit.spec = d.spec;
    fit.n = static_cast<std::size_t>(y.size());

    // Start from the least-squares fit of log(y + 0.5).
    VectorXd ly(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) ly[i] = std::log(y[i] + 0.5);
    VectorXd beta = d.X.colPivHouseholderQr().solve(ly);
    double phi = std::log(0.1);
    auto loglik = [&](const VectorXd& b, double ph) { return nb2_loglik(d.X, y, b, std::exp(ph)); };
    double ll = loglik(beta, phi);

    for (int it = 0; it <= opt.max_iterations; ++it) {
        const double a = std::exp(phi);
        const VectorXd eta = d.X * beta;
        VectorXd s(eta.size()), h(eta.size()), c(eta.size());
        double ga = 0, gaa = 0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double mu = std::exp(eta[i]);
            const double q = 1.0 + a * mu;
            s[i] = (y[i] - mu) / q;
            h[i] = mu * (1.0 + a * y[i]) / (q * q);
            c[i] = -(y[i] - mu) * mu / (q * q); // d2 l / d eta d alpha
            const auto yi = static_cast<long>(y[i]);
            for (long k = 1; k < yi; ++k) {
                const double r = 1.0 + a * k;
                ga += k / r;
                gaa -= static_cast<double>(k) * k / (r * r);
            }
            ga += nb_detail::nb_a(a, mu) - y[i] * mu / q;
            gaa += nb_detail::nb_da(a, mu) + y[i] * mu * mu / (q * q);
        }
        const VectorXd gb = d.X.transpose() * s;
        const bool at_floor = phi <= std::log(kMinAlpha) + 1e-12;
        fit.dispersion_at_boundary = at_floor && ga <= 0;
        const double ga_eff = fit.dispersion_at_boundary ? 0.0 : ga;
        fit.gradient_norm = std::max(gb.cwiseAbs().maxCoeff(), std::abs(ga_eff));
        fit.iterations = it;
        if (fit.gradient_norm <= tol) {
            fit.converged = true;
            break;
        }
        if (it == opt.max_iterations) break;

        // Negative Hessian in (beta, phi), phi = log alpha.
        MatrixXd H(p + 1, p + 1);
        H.topLeftCorner(p, p) = weighted_gram(d.X, h);
        const VectorXd cross = -a * (d.X.transpose() * c);
        H.topRightCorner(p, 1) = cross;
        H.bottomLeftCorner(1, p) = cross.transpose();
        H(p, p) = -(a * a * gaa + a * ga);
        VectorXd g(p + 1);
        g.head(p) = gb;
        g[p] = a * ga;

        VectorXd step(p + 1);
        Eigen::LDLT<MatrixXd> joint(H);
        if (!fit.dispersion_at_boundary && joint.info() == Eigen::Success && joint.isPositive() &&
            joint.vectorD().minCoeff() > 1e-12 * joint.vectorD().cwiseAbs().maxCoeff()) {
            step = joint.solve(g);
        } else {
            step.head(p) = factor_information(H.topLeftCorner(p, p)).solve(gb);
            const double curv = H(p, p);
            step[p] = fit.dispersion_at_boundary ? 0.0 : (curv > 0 ? g[p] / curv : std::copysign(1.0, g[p]));
        }
        step[p] = std::clamp(step[p], -5.0, 5.0);

        double t = 1.0;
        VectorXd nb;
        double nphi = 0, ll_new = 0;
        for (;;) {
            nb = beta + t * step.head(p);
            nphi = std::clamp(phi + t * step[p], std::log(kMinAlpha), std::log(kMaxAlpha));
            ll_new = loglik(nb, nphi);
            if (ll_new >= ll - 1e-12 * (1.0 + std::abs(ll)) || t < 1e-10) break;
            t *= 0.5;
        }
        beta = nb;
        phi = nphi;
        ll = ll_new;
    }
    fit.coefficients = beta;
    fit.dispersion = std::exp(phi);
    fit.log_likelihood = ll;
    if (fit.dispersion_at_boundary)
        fit.warnings.emplace_back("dispersion at its lower bound: data consistent with the Poisson limit");
    if (!fit.converged)
        fit.warnings.emplace_back("did not converge within " + std::to_string(opt.max_iterations) + " iterations");
    glm::finish_inference(fit, d, y, opt);
    return fit;
}

inline FitResult fit_model(Family family, const DesignMatrix& d, const Eigen::VectorXd& y, const FitOptions& opt = {}) {
    switch (family) {
    case Family::logistic: return fit_logistic(d, y, opt);
    case Family::fractional_logit: return fit_fractional_logit(d, y, opt);
    case Family::negative_binomial: return fit_negative_binomial(d, y, opt);
    }
    throw InputError("unknown family");
}

// Cluster-robust covariance for a fitted model on its own design.
inline Eigen::MatrixXd clustered_sandwich_se(const DesignMatrix& d, const FitResult& fit, const Eigen::VectorXd& y,
                                             bool small_sample_correction = false) {
    auto [s, h] = glm::row_derivatives(fit, d.X, y);
    return glm::clustered_sandwich(d.X, s, h, d.cluster, d.clusters(), small_sample_correction);
}

struct PredictionSweep {
    std::string covariate;
    std::vector<double> grid;   // in model units
    double display_scale = 1.0; // bin_centers = grid * display_scale
};

// Mean response over a covariate grid with the other covariates held fixed.
// Standard errors use the delta method on the robust covariance.
inline BinnedCurve predict_curve(const FitResult& fit, const PredictionSweep& sweep,
                                 std::map<std::string, CovariateValue> held) {
    for (const auto& col : fit.spec.columns_used())
        if (col != sweep.covariate && !held.count(col))
            throw InputError("predict_curve: no value held for covariate '" + col + "'");
    BinnedCurve c;
    for (double v : sweep.grid) {
        held[sweep.covariate] = v;
        const Eigen::VectorXd x = fit.spec.row(held);
        const double eta = x.dot(fit.coefficients);
        const double se_eta = std::sqrt(std::max(0.0, x.dot(fit.covariance * x)));
        double mu, dmu;
        if (fit.family == Family::negative_binomial) {
            mu = std::exp(eta);
            dmu = mu;
        } else {
            mu = glm::sigmoid(eta);
            dmu = mu * (1.0 - mu);
        }
        c.bin_centers.push_back(v * sweep.display_scale);
        c.values.push_back(mu);
        c.counts.push_back(0);
        c.standard_errors.push_back(dmu * se_eta);
    }
    return c;
}

inline nlohmann::ordered_json to_json(const FitResult& f) {
    nlohmann::ordered_json j;
    j["model"] = to_string(f.family);
    auto coefs = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < f.names.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        coefs.push_back({{"name", f.names[k]},
                         {"coefficient", f.coefficients[i]},
                         {"std_error", f.standard_errors[i]},
                         {"z", f.z_values[i]}});
    }
    j["coefficients"] = coefs;
    j["n"] = f.n;
    j["log_likelihood"] = f.log_likelihood;
    j["clusters"] = f.n_clusters;
    j["converged"] = f.converged;
    j["iterations"] = f.iterations;
    if (f.family == Family::negative_binomial) {
        j["dispersion"] = f.dispersion;
        j["dispersion_at_boundary"] = f.dispersion_at_boundary;
    }
    j["warnings"] = f.warnings;
    return j;
}

} // namespace dmarket
