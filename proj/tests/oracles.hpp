#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls into the code under test except to
// read graph structure.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmarket/graph.hpp"

namespace oracle {

inline std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("n" + std::to_string(i));
    return v;
}

inline dmarket::ContactGraph random_graph(std::mt19937_64& rng, std::size_t n, double p) {
    std::bernoulli_distribution e(p);
    std::vector<std::pair<dmarket::NodeIndex, dmarket::NodeIndex>> edges;
    for (dmarket::NodeIndex i = 0; i < n; ++i)
        for (dmarket::NodeIndex j = 0; j < n; ++j)
            if (i != j && e(rng)) edges.emplace_back(i, j);
    return dmarket::ContactGraph(ids(n), edges);
}

// Solves (I - alpha S) x = 1 with S_ij = a_ij / outdeg_j.
inline Eigen::VectorXd dense_pagerank(const dmarket::ContactGraph& g, double alpha) {
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
    for (auto [from, to] : g.edges()) M(to, from) -= alpha / static_cast<double>(g.out_degree(from));
    return M.partialPivLu().solve(Eigen::VectorXd::Ones(n));
}

// k-th smallest (0-based) by counting, without sorting.
inline double order_statistic(const std::vector<double>& v, std::size_t k) {
    for (double c : v) {
        std::size_t below = 0, at_most = 0;
        for (double x : v) {
            below += x < c;
            at_most += x <= c;
        }
        if (below <= k && k < at_most) return c;
    }
    throw std::logic_error("no order statistic");
}

inline double percentile(const std::vector<double>& v, double p) {
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double a = order_statistic(v, lo), b = order_statistic(v, hi);
    return a + (h - static_cast<double>(lo)) * (b - a);
}

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
        Eigen::VectorXd a = x, b = x;
        a[j] += h;
        b[j] -= h;
        g[j] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

// Componentwise relative error, with components far below the largest one
// compared on the scale of the largest.
inline double max_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    const double scale = numeric.cwiseAbs().maxCoeff();
    double worst = 0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double denom = std::max(std::abs(numeric[i]), 1e-6 * scale);
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

} // namespace oracle
