#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dmarket/design.hpp"
#include "dmarket/gaps.hpp"
#include "dmarket/graph.hpp"
#include "dmarket/market_data.hpp"

namespace dmarket {

// One city's market carried through ranking: the contact graph is cut to its
// largest weakly connected component before PageRank, and scaled ranks are
// taken within that component.
struct CityAnalysis {
    MarketDataset dataset;
    ContactGraph component;
    std::size_t full_graph_nodes = 0;
    DesirabilityTable ranks;
    std::vector<GapRecord> gaps;
};

inline CityAnalysis analyze_market(MarketDataset ds, const PageRankOptions& opt = {}) {
    CityAnalysis a;
    auto graph = build_contact_graph(ds);
    a.full_graph_nodes = graph.size();
    a.component = largest_weakly_connected_component(graph);
    a.ranks = scaled_rank(pagerank(a.component, opt), ds.users);
    a.gaps = make_gap_records(ds, a.ranks);
    a.dataset = std::move(ds);
    return a;
}

// Message-level regression table. `words` is the word count / 100 and
// `pct_positive` the positive share in percent.
inline DataTable message_table(const std::vector<CityAnalysis>& cities) {
    std::vector<double> gap, words, pct, frac, wc, replied;
    std::vector<std::string> city, sex, seeker;
    for (const auto& a : cities) {
        auto idx = a.dataset.user_index();
        for (const auto& g : a.gaps) {
            gap.push_back(g.gap);
            words.push_back(g.word_count / 100.0);
            pct.push_back(100.0 * g.positive_fraction);
            frac.push_back(g.positive_fraction);
            wc.push_back(g.word_count);
            replied.push_back(g.replied ? 1.0 : 0.0);
            city.push_back(detail::lower(a.dataset.users[idx.at(g.sender_id)].city));
            sex.push_back(to_string(g.sender_sex));
            seeker.push_back(g.sender_id);
        }
    }
    DataTable t;
    t.add("gap", gap).add("words", words).add("pct_positive", pct).add("positive_fraction", frac);
    t.add("word_count", wc).add("replied", replied);
    t.add("city", city).add("sex", sex).add("seeker", seeker);
    return t;
}

// User-level table of scaled rank and demographics for ranked users.
inline DataTable user_table(const std::vector<CityAnalysis>& cities) {
    std::vector<double> rank, age;
    std::vector<std::string> eth, edu, body, children, seeking, city, sex, id;
    for (const auto& a : cities) {
        auto idx = a.dataset.user_index();
        for (std::size_t i = 0; i < a.ranks.node_ids.size(); ++i) {
            const auto& u = a.dataset.users[idx.at(a.ranks.node_ids[i])];
            rank.push_back(a.ranks.scaled_rank[i]);
            age.push_back(u.age);
            eth.push_back(u.ethnicity);
            edu.push_back(to_string(u.education));
            auto extra = [&](const char* k) {
                auto it = u.extra_attributes.find(k);
                return it == u.extra_attributes.end() ? std::string(kMissing) : it->second;
            };
            body.push_back(extra("body_type"));
            children.push_back(extra("has_children"));
            seeking.push_back(extra("seeking"));
            city.push_back(detail::lower(u.city));
            sex.push_back(to_string(u.sex));
            id.push_back(u.user_id);
        }
    }
    DataTable t;
    t.add("scaled_rank", rank).add("age", age).add("ethnicity", eth).add("education", edu);
    t.add("body_type", body).add("has_children", children).add("seeking", seeking);
    t.add("city", city).add("sex", sex).add("user_id", id);
    return t;
}

// Rows of `t` whose categorical `column` equals `value`.
inline DataTable filter_rows(const DataTable& t, const std::string& column, const std::string& value) {
    const auto labels = t.labels(column);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == value) keep.push_back(i);
    DataTable out;
    for (const auto& name : t.names()) {
        std::visit(
            [&](const auto& col) {
                std::decay_t<decltype(col)> sub;
                sub.reserve(keep.size());
                for (auto i : keep) sub.push_back(col[i]);
                out.add(name, std::move(sub));
            },
            t.column(name));
    }
    return out;
}

} // namespace dmarket
