#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dmarket/error.hpp"
#include "dmarket/market_data.hpp"
#include "dmarket/parallel.hpp"
#include "dmarket/stats.hpp"

namespace dmarket {

using NodeIndex = std::uint32_t;

// Directed graph in compressed sparse row form, both directions. An edge
// j -> i means j messaged i.
class ContactGraph {
public:
    ContactGraph() = default;

    // Duplicate edges are merged; self-loops are rejected.
    ContactGraph(std::vector<std::string> node_ids, std::vector<std::pair<NodeIndex, NodeIndex>> edges)
        : node_ids_(std::move(node_ids)) {
        const auto n = node_ids_.size();
        for (const auto& [from, to] : edges) {
            if (from >= n || to >= n) throw InputError("edge endpoint out of range");
            if (from == to) throw InputError("self-loop on node '" + node_ids_[from] + "'");
        }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

        out_offsets_.assign(n + 1, 0);
        in_offsets_.assign(n + 1, 0);
        for (const auto& [from, to] : edges) {
            ++out_offsets_[from + 1];
            ++in_offsets_[to + 1];
        }
        std::partial_sum(out_offsets_.begin(), out_offsets_.end(), out_offsets_.begin());
        std::partial_sum(in_offsets_.begin(), in_offsets_.end(), in_offsets_.begin());
        out_targets_.resize(edges.size());
        in_sources_.resize(edges.size());
        auto out_pos = out_offsets_;
        auto in_pos = in_offsets_;
        // edges are sorted by (from, to), so both lists come out sorted
        for (const auto& [from, to] : edges) {
            out_targets_[out_pos[from]++] = to;
            in_sources_[in_pos[to]++] = from;
        }
    }

    std::size_t size() const { return node_ids_.size(); }
    std::size_t edge_count() const { return out_targets_.size(); }
    const std::vector<std::string>& node_ids() const { return node_ids_; }

    std::span<const NodeIndex> out_neighbors(std::size_t i) const {
        return {out_targets_.data() + out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]};
    }
    std::span<const NodeIndex> in_neighbors(std::size_t i) const {
        return {in_sources_.data() + in_offsets_[i], in_offsets_[i + 1] - in_offsets_[i]};
    }
    std::size_t out_degree(std::size_t i) const { return out_offsets_[i + 1] - out_offsets_[i]; }
    std::size_t in_degree(std::size_t i) const { return in_offsets_[i + 1] - in_offsets_[i]; }

    bool has_edge(std::size_t from, std::size_t to) const {
        auto nb = out_neighbors(from);
        return std::binary_search(nb.begin(), nb.end(), static_cast<NodeIndex>(to));
    }

    std::vector<std::pair<NodeIndex, NodeIndex>> edges() const {
        std::vector<std::pair<NodeIndex, NodeIndex>> e;
        e.reserve(edge_count());
        for (std::size_t i = 0; i < size(); ++i)
            for (auto j : out_neighbors(i)) e.emplace_back(static_cast<NodeIndex>(i), j);
        return e;
    }

private:
    std::vector<std::string> node_ids_;
    std::vector<std::size_t> out_offsets_{0};
    std::vector<NodeIndex> out_targets_;
    std::vector<std::size_t> in_offsets_{0};
    std::vector<NodeIndex> in_sources_;
};

// Every first contact becomes an edge. A reply is itself the first contact in
// the reverse direction, so it contributes the reverse edge.
inline ContactGraph build_contact_graph(const MarketDataset& ds) {
    std::vector<std::string> ids;
    ids.reserve(ds.users.size());
    for (const auto& u : ds.users) ids.push_back(u.user_id);
    auto idx = ds.user_index();
    std::vector<std::pair<NodeIndex, NodeIndex>> edges;
    edges.reserve(ds.first_contacts.size());
    for (const auto& fc : ds.first_contacts)
        edges.emplace_back(static_cast<NodeIndex>(idx.at(fc.message.sender_id)),
                           static_cast<NodeIndex>(idx.at(fc.message.receiver_id)));
    return ContactGraph(std::move(ids), std::move(edges));
}

// Union by size with path halving.
class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        return true;
    }

    std::size_t size_of(std::size_t x) { return size_[find(x)]; }

private:
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> size_;
};

// Subgraph induced by `keep` (ascending node indices), preserving node order.
inline ContactGraph induced_subgraph(const ContactGraph& g, const std::vector<std::size_t>& keep) {
    std::vector<std::int64_t> remap(g.size(), -1);
    std::vector<std::string> ids;
    ids.reserve(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        remap[keep[k]] = static_cast<std::int64_t>(k);
        ids.push_back(g.node_ids()[keep[k]]);
    }
    std::vector<std::pair<NodeIndex, NodeIndex>> edges;
    for (auto i : keep)
        for (auto j : g.out_neighbors(i))
            if (remap[j] >= 0)
                edges.emplace_back(static_cast<NodeIndex>(remap[i]), static_cast<NodeIndex>(remap[j]));
    return ContactGraph(std::move(ids), std::move(edges));
}

// Largest component ignoring edge direction. Among equal-size components the
// one containing the smallest node index wins.
inline ContactGraph largest_weakly_connected_component(const ContactGraph& g) {
    if (g.size() == 0) return g;
    DisjointSets sets(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        for (auto j : g.out_neighbors(i)) sets.unite(i, j);

    std::size_t best_root = sets.find(0);
    std::size_t best_size = sets.size_of(0);
    for (std::size_t i = 1; i < g.size(); ++i) {
        auto r = sets.find(i);
        auto s = sets.size_of(r);
        // scanning in index order, the first node seen of each component is its minimum
        if (s > best_size) {
            best_root = r;
            best_size = s;
        }
    }
    if (best_size == g.size()) return g;
    std::vector<std::size_t> keep;
    keep.reserve(best_size);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (sets.find(i) == best_root) keep.push_back(i);
    return induced_subgraph(g, keep);
}

struct PageRankOptions {
    double alpha = 0.85;
    double tolerance = 1e-12;
    int max_iterations = 1000;
    unsigned threads = 1;
};

struct DesirabilityTable {
    std::vector<std::string> node_ids;
    std::vector<double> score;
    double alpha = 0.85;
    int iterations = 0;
    double residual = 0;
    // Filled by scaled_rank.
    std::vector<double> scaled_rank;
    std::vector<Sex> sex;
    std::vector<std::string> city;

    std::unordered_map<std::string, std::size_t> index() const {
        std::unordered_map<std::string, std::size_t> idx;
        idx.reserve(node_ids.size());
        for (std::size_t i = 0; i < node_ids.size(); ++i) idx.emplace(node_ids[i], i);
        return idx;
    }
};

// Solves x_i = 1 + alpha * sum_j a_ij x_j / outdeg_j by synchronous fixed-point
// iteration from x = 0. Nodes with no out-edges pass nothing on. Stops when an
// update moves no score by more than `tolerance`; that change is exactly the
// equation residual of the previous iterate, which is what gets returned.
inline DesirabilityTable pagerank(const ContactGraph& g, const PageRankOptions& opt = {}) {
    if (!(opt.alpha >= 0.0 && opt.alpha < 1.0)) throw InputError("alpha must lie in [0, 1)");
    if (!(opt.tolerance > 0.0)) throw InputError("tolerance must be positive");
    if (opt.max_iterations <= 0) throw InputError("max_iterations must be positive");

    const std::size_t n = g.size();
    DesirabilityTable t;
    t.node_ids = g.node_ids();
    t.alpha = opt.alpha;
    std::vector<double> x(n, 0.0), next(n, 0.0), share(n, 0.0);
    std::vector<double> inv_out(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        if (auto d = g.out_degree(j)) inv_out[j] = 1.0 / static_cast<double>(d);

    double residual = 0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        for (std::size_t j = 0; j < n; ++j) share[j] = x[j] * inv_out[j];
        parallel_for(n, opt.threads, [&](std::size_t i) {
            double s = 0;
            for (auto j : g.in_neighbors(i)) s += share[j];
            next[i] = 1.0 + opt.alpha * s;
        });
        residual = 0;
        for (std::size_t i = 0; i < n; ++i) residual = std::max(residual, std::abs(next[i] - x[i]));
        if (residual <= opt.tolerance && it > 1) {
            t.score = std::move(x);
            t.iterations = it - 1;
            t.residual = residual;
            return t;
        }
        std::swap(x, next);
    }
    if (n == 0) {
        t.iterations = 0;
        return t;
    }
    throw ConvergenceError("pagerank did not converge within " + std::to_string(opt.max_iterations) +
                               " iterations (residual " + csv::format_double(residual) + ")",
                           opt.max_iterations, residual);
}

// Max-norm residual of the score equation for a given score vector.
inline double pagerank_residual(const ContactGraph& g, std::span<const double> x, double alpha) {
    double r = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double s = 0;
        for (auto j : g.in_neighbors(i)) s += x[j] / static_cast<double>(g.out_degree(j));
        r = std::max(r, std::abs(x[i] - 1.0 - alpha * s));
    }
    return r;
}

// Ranks scores within each (sex, city) stratum onto [0, 1]: position p of m
// maps to (p - 1)/(m - 1), ties share their mean position, a lone node gets 1.
inline DesirabilityTable scaled_rank(DesirabilityTable t, const std::vector<UserRecord>& users) {
    std::unordered_map<std::string, const UserRecord*> by_id;
    by_id.reserve(users.size());
    for (const auto& u : users) by_id.emplace(u.user_id, &u);

    const auto n = t.node_ids.size();
    t.sex.resize(n);
    t.city.resize(n);
    t.scaled_rank.assign(n, 0.0);
    std::map<std::pair<Sex, std::string>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < n; ++i) {
        auto it = by_id.find(t.node_ids[i]);
        if (it == by_id.end()) throw InputError("no user record for scored node '" + t.node_ids[i] + "'");
        t.sex[i] = it->second->sex;
        t.city[i] = it->second->city;
        strata[{t.sex[i], t.city[i]}].push_back(i);
    }
    for (const auto& [key, members] : strata) {
        if (members.size() == 1) {
            t.scaled_rank[members[0]] = 1.0;
            continue;
        }
        std::vector<double> s;
        s.reserve(members.size());
        for (auto i : members) s.push_back(t.score[i]);
        auto pos = stats::average_ranks(s);
        const double denom = static_cast<double>(members.size() - 1);
        for (std::size_t k = 0; k < members.size(); ++k) t.scaled_rank[members[k]] = (pos[k] - 1.0) / denom;
    }
    return t;
}

inline csv::Writer ranks_csv(const DesirabilityTable& t) {
    csv::Writer w({"user_id", "sex", "pagerank", "scaled_rank"});
    for (std::size_t i = 0; i < t.node_ids.size(); ++i)
        w.add(t.node_ids[i], t.sex.empty() ? "" : to_string(t.sex[i]), t.score[i],
              t.scaled_rank.empty() ? 0.0 : t.scaled_rank[i]);
    return w;
}

} // namespace dmarket
