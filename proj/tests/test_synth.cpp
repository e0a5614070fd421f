#include <cmath>
#include <numbers>

#include "dmarket/synth.hpp"
#include "test_util.hpp"

using namespace dmarket;

namespace {

GenerativeConfig small(Strategy s, std::size_t per_sex = 600) {
    GenerativeConfig c;
    c.n_men = per_sex;
    c.n_women = per_sex;
    c.strategy = s;
    return c;
}

std::string fingerprint(const SyntheticMarket& m) {
    return users_csv(m.users).str() + messages_csv(m.messages).str() + ground_truth_csv(m).str();
}

// E[max(X - a, 0)] for X ~ N(m, s^2)
double call_payoff(double m, double s, double a) {
    const double z = (m - a) / s;
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    return (m - a) * cdf + s * phi;
}

// Mean of clamp(r + reach + s Z, 0, 1) - r over r ~ U[0, r_max], by trapezoid in r.
double hybrid_gap_oracle(double reach, double s, double r_max = 1.0) {
    const int n = 4000;
    double acc = 0;
    for (int k = 0; k <= n; ++k) {
        const double r = r_max * k / n;
        const double m = r + reach;
        const double clamped = call_payoff(m, s, 0.0) - call_payoff(m, s, 1.0);
        acc += (k == 0 || k == n ? 0.5 : 1.0) * (clamped - r);
    }
    return acc / n;
}

double two_pass_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

TEST(Generator, DeterministicAcrossRunsAndThreads) {
    auto c = small(Strategy::hybrid, 400);
    c.seed = 11;
    const auto a = fingerprint(generate_market(c, 1));
    EXPECT_EQ(a, fingerprint(generate_market(c, 1)));
    EXPECT_EQ(a, fingerprint(generate_market(c, 4)));
    c.seed = 12;
    EXPECT_NE(a, fingerprint(generate_market(c, 1)));
}

TEST(Generator, MessagesAreHeterosexualNonSelfAndGapsBounded) {
    for (auto s : {Strategy::matching, Strategy::competition, Strategy::hybrid}) {
        auto m = generate_market(small(s, 300));
        std::unordered_map<std::string, Sex> sex;
        for (const auto& u : m.users) sex[u.user_id] = u.sex;
        for (const auto& msg : m.messages) {
            ASSERT_NE(msg.sender_id, msg.receiver_id);
            ASSERT_NE(sex.at(msg.sender_id), sex.at(msg.receiver_id));
        }
        for (const auto& in : m.truth.initiations) {
            ASSERT_GE(in.gap, -1.0);
            ASSERT_LE(in.gap, 1.0);
            ASSERT_DOUBLE_EQ(in.gap, m.truth.latent_rank[in.receiver] - m.truth.latent_rank[in.sender]);
        }
        EXPECT_TRUE(std::is_sorted(m.messages.begin(), m.messages.end(),
                                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; }));
    }
}

TEST(Generator, LatentRanksAreUniformPositions) {
    auto m = generate_market(small(Strategy::matching, 5));
    std::vector<double> men(m.truth.latent_rank.begin(), m.truth.latent_rank.begin() + 5);
    std::sort(men.begin(), men.end());
    EXPECT_EQ(men, (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
}

TEST(Generator, NoiselessMatchingGivesZeroGaps) {
    auto c = small(Strategy::matching, 200);
    c.gap_noise = 0;
    c.mean_contacts = 1e-9; // every sender makes exactly one contact
    auto m = generate_market(c);
    ASSERT_FALSE(m.truth.initiations.empty());
    for (const auto& in : m.truth.initiations) ASSERT_EQ(in.gap, 0.0);
}

TEST(Generator, HybridMeanGapMatchesReach) {
    auto c = small(Strategy::hybrid, 5000);
    auto m = generate_market(c, 4);
    double all = 0, low = 0;
    std::size_t n_low = 0;
    for (const auto& in : m.truth.initiations) {
        all += in.gap;
        if (m.truth.latent_rank[in.sender] <= 0.6) {
            low += in.gap;
            ++n_low;
        }
    }
    all /= static_cast<double>(m.truth.initiations.size());
    low /= static_cast<double>(n_low);
    // away from the top of the ladder the reach is not truncated
    EXPECT_GE(low, 0.24);
    EXPECT_LE(low, 0.26);
    EXPECT_NEAR(low, hybrid_gap_oracle(0.25, 0.1, 0.6), 0.005);
    // overall, senders near the top cannot reach 0.25 above themselves
    EXPECT_NEAR(all, hybrid_gap_oracle(0.25, 0.1), 0.005);
}

TEST(Generator, MatchingCentresOnZeroAndCompetitionFavoursTop) {
    auto mm = generate_market(small(Strategy::matching, 2000));
    double g = 0;
    for (const auto& in : mm.truth.initiations) g += in.gap;
    EXPECT_NEAR(g / static_cast<double>(mm.truth.initiations.size()), 0.0, 0.01);

    auto mc = generate_market(small(Strategy::competition, 2000));
    double rx = 0;
    for (const auto& in : mc.truth.initiations) rx += mc.truth.latent_rank[in.receiver];
    // receiver rank density 2r has mean 2/3
    EXPECT_NEAR(rx / static_cast<double>(mc.truth.initiations.size()), 2.0 / 3.0, 0.01);
}

TEST(Generator, ReplyRateFallsAcrossGapQuartiles) {
    auto m = generate_market(small(Strategy::hybrid, 3000));
    std::vector<double> gaps;
    for (const auto& in : m.truth.initiations) gaps.push_back(in.gap);
    const double q1 = stats::percentile(gaps, 0.25), q2 = stats::percentile(gaps, 0.5),
                 q3 = stats::percentile(gaps, 0.75);
    double n[4]{}, r[4]{};
    for (const auto& in : m.truth.initiations) {
        const int q = in.gap <= q1 ? 0 : in.gap <= q2 ? 1 : in.gap <= q3 ? 2 : 3;
        n[q] += 1;
        r[q] += in.replied;
    }
    for (int q = 0; q < 3; ++q) EXPECT_GT(r[q] / n[q], r[q + 1] / n[q + 1]);
}

TEST(Generator, BookkeepingMatchesDataset) {
    auto m = generate_market(small(Strategy::hybrid, 500));
    const auto s = market_summary(m.dataset);
    EXPECT_EQ(m.book.users[0] + m.book.users[1], m.users.size());
    EXPECT_EQ(m.book.initiations_sent[0] + m.book.initiations_sent[1], m.truth.initiations.size());
    std::size_t replies = 0;
    for (const auto& in : m.truth.initiations) replies += in.replied;
    EXPECT_EQ(m.book.replies_received[0] + m.book.replies_received[1], replies);
    EXPECT_EQ(m.messages.size(), m.truth.initiations.size() + replies);
    // each reply is itself a first contact in the reverse direction
    EXPECT_EQ(m.dataset.first_contacts.size(), m.truth.initiations.size() + replies);
    EXPECT_EQ(s.men.users + s.women.users, m.users.size());
}

TEST(Generator, ConfigValidation) {
    auto c = small(Strategy::hybrid);
    c.n_men = 1;
    EXPECT_THROW(generate_market(c), InputError);
    c = small(Strategy::hybrid);
    c.mean_contacts = 0;
    EXPECT_THROW(generate_market(c), InputError);
    c = small(Strategy::hybrid);
    c.gap_noise = -0.1;
    EXPECT_THROW(generate_market(c), InputError);
    EXPECT_EQ(parse_strategy("competition"), Strategy::competition);
    EXPECT_FALSE(parse_strategy("random"));
}

TEST(Correlation, MatchingMarketAgreesWithTwoPassPearson) {
    auto m = generate_market(small(Strategy::matching, 1500));
    auto a = analyze_market(m.dataset);
    std::unordered_map<std::string, double> rank;
    for (std::size_t i = 0; i < a.ranks.node_ids.size(); ++i) rank[a.ranks.node_ids[i]] = a.ranks.scaled_rank[i];
    std::vector<double> x, y;
    for (const auto& g : a.gaps) {
        x.push_back(rank.at(g.sender_id));
        y.push_back(rank.at(g.receiver_id));
    }
    const double r = sender_receiver_correlation(a.gaps, a.ranks);
    EXPECT_GT(r, 0.0);
    EXPECT_LT(r, 1.0);
    EXPECT_NEAR(r, two_pass_pearson(x, y), 1e-10);
}

TEST(Roundtrip, CompetitionRecoversLatentRanks) {
    auto r = pipeline_roundtrip(small(Strategy::competition, 2000));
    EXPECT_GE(r.receivers_considered, 100u);
    EXPECT_GE(r.spearman_latent_rank_receivers, 0.8);
}

TEST(Roundtrip, HybridRecoversReach) {
    auto r = pipeline_roundtrip(small(Strategy::hybrid, 2000));
    EXPECT_NEAR(r.estimated_mean_median_gap, 0.25, 0.05);
    EXPECT_TRUE(r.slope_sign_agrees);
    EXPECT_LT(r.fitted_reply_slope, 0);
    EXPECT_GT(r.spearman_latent_rank, 0.5);
}

TEST(Roundtrip, NullReplyModelAndReplyEdgeFeedback) {
    auto c = small(Strategy::hybrid, 1500);
    c.reply_slope = 0;
    auto m = generate_market(c);
    std::vector<double> gap, replied;
    std::vector<std::string> seeker;
    for (const auto& in : m.truth.initiations) {
        gap.push_back(in.gap);
        replied.push_back(in.replied);
        seeker.push_back(m.users[in.sender].user_id);
    }
    DataTable t;
    t.add("gap", gap).add("seeker", seeker);
    auto truth = fit_logistic(build_design(t, Formula::parse("gap"), "seeker"), to_vector(replied));
    EXPECT_LE(std::abs(truth.coef("gap")), 3 * truth.se("gap"));

    // A reply adds an edge back to the sender, raising the sender's rank and
    // shrinking the estimated gap of exactly the replied messages.
    auto r = pipeline_roundtrip(c);
    EXPECT_LT(r.fitted_reply_slope, -3 * r.fitted_reply_slope_se);
    EXPECT_FALSE(r.slope_sign_agrees);
    EXPECT_EQ(to_json(r)["users"], 3000);
}
