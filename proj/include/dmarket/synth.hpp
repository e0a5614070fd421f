#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dmarket/error.hpp"
#include "dmarket/gaps.hpp"
#include "dmarket/glm.hpp"
#include "dmarket/market_data.hpp"
#include "dmarket/parallel.hpp"
#include "dmarket/pipeline.hpp"
#include "dmarket/stats.hpp"

namespace dmarket {

enum class Strategy { matching, competition, hybrid };

inline const char* to_string(Strategy s) {
    switch (s) {
    case Strategy::matching: return "matching";
    case Strategy::competition: return "competition";
    case Strategy::hybrid: return "hybrid";
    }
    return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
    if (s == "matching") return Strategy::matching;
    if (s == "competition") return Strategy::competition;
    if (s == "hybrid") return Strategy::hybrid;
    return std::nullopt;
}

// Message text model: word counts are NB2 with log-mean linear in the gap,
// positive words binomial with logit-mean linear in the gap.
struct TextModel {
    double words_intercept = 3.2;
    double words_slope = 0.26;
    double words_dispersion = 0.5;
    double positive_intercept = -2.5;
    double positive_slope = 0.1;
};

struct GenerativeConfig {
    std::size_t n_men = 1000;
    std::size_t n_women = 1000;
    Strategy strategy = Strategy::hybrid;
    double reach = 0.25;
    double gap_noise = 0.1;
    double mean_contacts = 10.0;
    double reply_intercept = -1.0;
    double reply_slope = -2.0;
    TextModel text;
    std::uint64_t seed = 1;
    std::string city = "synth";
    std::int64_t window_start = 0;
    std::int64_t window_days = 30;

    TimeWindow window() const { return {window_start, window_start + window_days * 86400}; }

    void validate() const {
        if (n_men < 2 || n_women < 2) throw InputError("need at least two men and two women");
        if (!(mean_contacts > 0)) throw InputError("mean_contacts must be positive");
        if (!(gap_noise >= 0)) throw InputError("gap_noise must be nonnegative");
        if (window_days < 2) throw InputError("window must span at least two days");
        if (!(text.words_dispersion > 0)) throw InputError("word-count dispersion must be positive");
    }
};

struct GroundTruth {
    std::vector<double> latent_rank; // aligned with SyntheticMarket::users
    // One entry per initiating message that survived pair de-duplication.
    struct Initiation {
        std::size_t sender = 0;
        std::size_t receiver = 0;
        double gap = 0;
        double reply_probability = 0;
        bool replied = false;
    };
    std::vector<Initiation> initiations;
};

struct GeneratorBookkeeping {
    std::size_t users[2]{};            // [male, female]
    std::size_t initiations_sent[2]{}; // by sender sex
    std::size_t replies_received[2]{}; // by sender sex
    std::size_t conflicts_dropped = 0; // reverse-direction initiations discarded
};

struct SyntheticMarket {
    std::vector<UserRecord> users;
    std::vector<MessageEvent> messages;
    GroundTruth truth;
    GeneratorBookkeeping book;
    MarketDataset dataset;
};

namespace synth_detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Independent stream per (purpose, index) so draws do not depend on how work
// is split across threads.
inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed ^ splitmix64(purpose)) + index));
}

template <class Rng>
std::size_t pick(Rng& rng, std::initializer_list<double> weights) {
    std::discrete_distribution<std::size_t> d(weights);
    return d(rng);
}

struct Draft {
    std::size_t receiver = 0;
    std::int64_t t = 0;
    double gap = 0;
    double p_reply = 0;
    double reply_u = 0;
    std::int64_t delay = 0;
    int words = 0, positive = 0, reply_words = 0, reply_positive = 0;
};

template <class Rng>
std::pair<int, int> draw_text(Rng& rng, const TextModel& m, double gap) {
    const double mean = std::exp(m.words_intercept + m.words_slope * gap);
    const double shape = 1.0 / m.words_dispersion;
    std::gamma_distribution<double> mix(shape, mean / shape);
    std::poisson_distribution<int> pois(std::max(mix(rng), 1e-12));
    const int words = pois(rng);
    const double p = glm::sigmoid(m.positive_intercept + m.positive_slope * gap);
    std::binomial_distribution<int> bin(words, p);
    return {words, bin(rng)};
}

} // namespace synth_detail

// Draws a market under the configured pursuit strategy. Latent ranks are an
// evenly spaced random permutation of [0, 1] within each sex. Each user sends
// max(1, Poisson(mean_contacts)) first messages to distinct opposite-sex users
// nearest the target rank:
//   matching     own rank + N(0, gap_noise), clamped to [0, 1]
//   competition  a rank drawn with density 2r, regardless of the sender
//   hybrid       own rank + reach + N(0, gap_noise), clamped to [0, 1]
// When two users message each other, the earlier message is the initiation
// and the other is dropped. Each initiation is answered with probability
// sigmoid(reply_intercept + reply_slope * gap), within a day.
inline SyntheticMarket generate_market(const GenerativeConfig& cfg, unsigned threads = 1) {
    using namespace synth_detail;
    cfg.validate();
    SyntheticMarket out;
    const std::size_t n = cfg.n_men + cfg.n_women;
    auto sex_of = [&](std::size_t u) { return u < cfg.n_men ? Sex::male : Sex::female; };
    auto sex_size = [&](Sex s) { return s == Sex::male ? cfg.n_men : cfg.n_women; };
    auto first_of = [&](Sex s) { return s == Sex::male ? std::size_t{0} : cfg.n_men; };

    // latent ranks: position k of n_s maps to k / (n_s - 1)
    out.truth.latent_rank.resize(n);
    std::vector<std::size_t> by_position[2];
    {
        auto rng = stream(cfg.seed, 0, 0);
        for (Sex s : {Sex::male, Sex::female}) {
            auto& order = by_position[s == Sex::male ? 0 : 1];
            order.resize(sex_size(s));
            std::iota(order.begin(), order.end(), first_of(s));
            std::shuffle(order.begin(), order.end(), rng);
            const double denom = static_cast<double>(order.size() - 1);
            for (std::size_t k = 0; k < order.size(); ++k) out.truth.latent_rank[order[k]] = k / denom;
        }
    }

    out.users.resize(n);
    parallel_for(n, threads, [&](std::size_t u) {
        auto rng = stream(cfg.seed, 1, u);
        auto& r = out.users[u];
        const Sex s = sex_of(u);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%c%07zu", s == Sex::male ? 'm' : 'f', u - first_of(s) + 1);
        r.user_id = buf;
        r.sex = s;
        r.city = cfg.city;
        r.age = std::uniform_int_distribution<int>(18, 60)(rng);
        static const char* eth[] = {"asian", "black", "hispanic", "white"};
        r.ethnicity = eth[pick(rng, {0.08, 0.08, 0.08, 0.76})];
        r.education = static_cast<Education>(pick(rng, {0.25, 0.5, 0.25}));
        static const char* body[] = {"thin", "average", "athletic", "curvy"};
        static const char* seek[] = {"long_term", "short_term", "casual"};
        r.extra_attributes["body_type"] = body[pick(rng, {0.2, 0.4, 0.25, 0.15})];
        r.extra_attributes["has_children"] = pick(rng, {0.9, 0.1}) ? "1" : "0";
        r.extra_attributes["seeking"] = seek[pick(rng, {0.6, 0.25, 0.15})];
    });

    const auto win = cfg.window();
    std::vector<std::vector<Draft>> drafts(n);
    parallel_for(n, threads, [&](std::size_t u) {
        auto rng = stream(cfg.seed, 2, u);
        const Sex other = opposite(sex_of(u));
        const auto& targets = by_position[other == Sex::male ? 0 : 1];
        const std::size_t m = targets.size();
        const double own = out.truth.latent_rank[u];
        std::poisson_distribution<long> pois(cfg.mean_contacts);
        const std::size_t k = std::min<std::size_t>(m, static_cast<std::size_t>(std::max(1L, pois(rng))));
        std::normal_distribution<double> noise(0.0, 1.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::uniform_int_distribution<std::int64_t> when(win.start, win.end - 86400);
        std::uniform_int_distribution<std::int64_t> delay(60, 86400);
        std::vector<char> taken(m, 0);
        auto& mine = drafts[u];
        for (std::size_t c = 0; c < k; ++c) {
            double target = 0;
            switch (cfg.strategy) {
            case Strategy::matching: target = own + cfg.gap_noise * noise(rng); break;
            case Strategy::competition: target = std::sqrt(unit(rng)); break;
            case Strategy::hybrid: target = own + cfg.reach + cfg.gap_noise * noise(rng); break;
            }
            target = std::clamp(target, 0.0, 1.0);
            // nearest free position, searching outward and preferring the lower side on ties
            const auto want = static_cast<std::int64_t>(std::llround(target * static_cast<double>(m - 1)));
            std::int64_t pos = -1;
            for (std::int64_t d = 0; pos < 0; ++d) {
                for (std::int64_t cand : {want - d, want + d})
                    if (cand >= 0 && cand < static_cast<std::int64_t>(m) && !taken[cand]) {
                        pos = cand;
                        break;
                    }
            }
            taken[pos] = 1;
            Draft dft;
            dft.receiver = targets[pos];
            dft.gap = out.truth.latent_rank[dft.receiver] - own;
            dft.p_reply = glm::sigmoid(cfg.reply_intercept + cfg.reply_slope * dft.gap);
            dft.t = when(rng);
            dft.reply_u = unit(rng);
            dft.delay = delay(rng);
            std::tie(dft.words, dft.positive) = draw_text(rng, cfg.text, dft.gap);
            std::tie(dft.reply_words, dft.reply_positive) = draw_text(rng, cfg.text, -dft.gap);
            mine.push_back(dft);
        }
    });

    // Resolve mutual initiations: the earlier one stands, ties go to the sender
    // with the lower index.
    struct Ref {
        std::size_t sender, k;
    };
    std::unordered_map<std::uint64_t, Ref> pair_owner;
    auto key = [](std::size_t a, std::size_t b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | b;
    };
    for (std::size_t u = 0; u < n; ++u)
        for (std::size_t k = 0; k < drafts[u].size(); ++k) {
            auto [it, fresh] = pair_owner.emplace(key(u, drafts[u][k].receiver), Ref{u, k});
            if (fresh) continue;
            const auto& prev = drafts[it->second.sender][it->second.k];
            if (drafts[u][k].t < prev.t) it->second = Ref{u, k};
        }

    struct Timed {
        std::int64_t t;
        std::size_t order;
        MessageEvent m;
    };
    std::vector<Timed> timed;
    std::size_t order = 0;
    for (std::size_t u = 0; u < n; ++u) {
        const int su = sex_of(u) == Sex::male ? 0 : 1;
        ++out.book.users[su];
        for (std::size_t k = 0; k < drafts[u].size(); ++k) {
            const auto& d = drafts[u][k];
            const auto& owner = pair_owner.at(key(u, d.receiver));
            if (owner.sender != u || owner.k != k) {
                ++out.book.conflicts_dropped;
                continue;
            }
            const bool replied = d.reply_u < d.p_reply;
            out.truth.initiations.push_back({u, d.receiver, d.gap, d.p_reply, replied});
            ++out.book.initiations_sent[su];
            if (replied) ++out.book.replies_received[su];
            timed.push_back({d.t, order++,
                             MessageEvent{out.users[u].user_id, out.users[d.receiver].user_id, d.t, d.words, d.positive, {}}});
            if (replied)
                timed.push_back({d.t + d.delay, order++,
                                 MessageEvent{out.users[d.receiver].user_id, out.users[u].user_id, d.t + d.delay,
                                              d.reply_words, d.reply_positive, {}}});
        }
    }
    std::stable_sort(timed.begin(), timed.end(), [](const Timed& a, const Timed& b) { return a.t < b.t; });
    out.messages.reserve(timed.size());
    for (auto& tm : timed) out.messages.push_back(std::move(tm.m));

    out.dataset = build_market(out.users, out.messages, win);
    return out;
}

inline csv::Writer ground_truth_csv(const SyntheticMarket& m) {
    csv::Writer w({"user_id", "latent_rank"});
    for (std::size_t i = 0; i < m.users.size(); ++i) w.add(m.users[i].user_id, m.truth.latent_rank[i]);
    return w;
}

struct RoundtripReport {
    std::size_t users = 0;
    std::size_t component_users = 0;
    std::size_t initiations = 0;
    int pagerank_iterations = 0;
    double spearman_latent_rank = 0;           // all ranked users
    double spearman_latent_rank_receivers = 0; // in-degree >= 5
    std::size_t receivers_considered = 0;
    double true_mean_median_gap = 0;
    double estimated_mean_median_gap = 0;
    double reply_curve_spearman = 0; // gap bin centre vs reply rate
    std::size_t reply_curve_bins = 0;
    double true_reply_slope = 0;
    double fitted_reply_slope = 0;
    double fitted_reply_slope_se = 0;
    bool slope_sign_agrees = false;
};

struct RoundtripOptions {
    PageRankOptions pagerank;
    BinningOptions bins;
};

// Generates a market, runs it through ranking, gap analytics and the reply
// regression, and compares the estimates to the generator's ground truth.
inline RoundtripReport pipeline_roundtrip(const GenerativeConfig& cfg, const RoundtripOptions& opt = {}) {
    auto market = generate_market(cfg, opt.pagerank.threads);
    std::unordered_map<std::string, std::size_t> uid;
    for (std::size_t i = 0; i < market.users.size(); ++i) uid.emplace(market.users[i].user_id, i);

    auto a = analyze_market(market.dataset, opt.pagerank);
    RoundtripReport r;
    r.users = market.users.size();
    r.component_users = a.component.size();
    r.initiations = market.truth.initiations.size();
    r.pagerank_iterations = a.ranks.iterations;
    r.true_reply_slope = cfg.reply_slope;

    std::vector<double> latent, est, latent_rx, est_rx;
    for (std::size_t i = 0; i < a.ranks.node_ids.size(); ++i) {
        const double lr = market.truth.latent_rank[uid.at(a.ranks.node_ids[i])];
        latent.push_back(lr);
        est.push_back(a.ranks.scaled_rank[i]);
        if (a.component.in_degree(i) >= 5) {
            latent_rx.push_back(lr);
            est_rx.push_back(a.ranks.scaled_rank[i]);
        }
    }
    r.spearman_latent_rank = stats::spearman(latent, est);
    r.receivers_considered = latent_rx.size();
    if (latent_rx.size() >= 2) r.spearman_latent_rank_receivers = stats::spearman(latent_rx, est_rx);

    std::vector<GapRecord> truth_gaps;
    truth_gaps.reserve(market.truth.initiations.size());
    for (const auto& in : market.truth.initiations) {
        GapRecord g;
        g.sender_id = market.users[in.sender].user_id;
        g.gap = in.gap;
        truth_gaps.push_back(g);
    }
    auto mean_median = [](const std::vector<UserGapProfile>& ps) {
        double s = 0;
        for (const auto& p : ps) s += p.median_gap;
        return ps.empty() ? 0.0 : s / static_cast<double>(ps.size());
    };
    r.true_mean_median_gap = mean_median(user_gap_profiles(truth_gaps));
    r.estimated_mean_median_gap = mean_median(user_gap_profiles(a.gaps));

    auto curve = reply_rate_by_gap(a.gaps, opt.bins);
    r.reply_curve_bins = curve.size();
    if (curve.size() >= 2) r.reply_curve_spearman = stats::spearman(curve.bin_centers, curve.values);

    auto table = message_table({a});
    auto design = build_design(table, Formula::parse("gap"), "seeker");
    auto fit = fit_logistic(design, to_vector(table.numeric("replied")));
    r.fitted_reply_slope = fit.coef("gap");
    r.fitted_reply_slope_se = fit.se("gap");
    r.slope_sign_agrees = (cfg.reply_slope > 0 && r.fitted_reply_slope > 0) ||
                          (cfg.reply_slope < 0 && r.fitted_reply_slope < 0) ||
                          (cfg.reply_slope == 0 && std::abs(r.fitted_reply_slope) <= 3 * r.fitted_reply_slope_se);
    return r;
}

inline nlohmann::ordered_json to_json(const RoundtripReport& r) {
    return {{"users", r.users},
            {"component_users", r.component_users},
            {"initiations", r.initiations},
            {"pagerank_iterations", r.pagerank_iterations},
            {"spearman_latent_rank", r.spearman_latent_rank},
            {"spearman_latent_rank_receivers", r.spearman_latent_rank_receivers},
            {"receivers_considered", r.receivers_considered},
            {"true_mean_median_gap", r.true_mean_median_gap},
            {"estimated_mean_median_gap", r.estimated_mean_median_gap},
            {"reply_curve_spearman", r.reply_curve_spearman},
            {"reply_curve_bins", r.reply_curve_bins},
            {"true_reply_slope", r.true_reply_slope},
            {"fitted_reply_slope", r.fitted_reply_slope},
            {"fitted_reply_slope_se", r.fitted_reply_slope_se},
            {"slope_sign_agrees", r.slope_sign_agrees}};
}

} // namespace dmarket
