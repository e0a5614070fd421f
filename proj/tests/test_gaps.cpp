#include <cmath>
#include <random>

#include "dmarket/gaps.hpp"
#include "dmarket/glm.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dmarket;

namespace {

GapRecord record(const std::string& sender, double gap, bool replied = false) {
    GapRecord g;
    g.sender_id = sender;
    g.gap = gap;
    g.replied = replied;
    return g;
}

} // namespace

TEST(Gap, EndpointsAreExact) {
    EXPECT_EQ(desirability_gap(0.0, 1.0), 1.0);
    EXPECT_EQ(desirability_gap(1.0, 0.0), -1.0);
    EXPECT_EQ(desirability_gap(0.3, 0.3), 0.0);
    EXPECT_THROW(desirability_gap(-0.01, 0.5), InputError);
    EXPECT_THROW(desirability_gap(0.5, 1.01), InputError);
    EXPECT_THROW(desirability_gap(std::nan(""), 0.5), InputError);
}

TEST(Percentile, HandValues) {
    EXPECT_DOUBLE_EQ(stats::median({3, 1, 2}), 2.0);
    EXPECT_DOUBLE_EQ(stats::median({4, 1, 2, 3}), 2.5);
    std::vector<double> v{1, 2, 3, 4, 5};
    EXPECT_DOUBLE_EQ(stats::iqr_sorted(v), 2.0);
    EXPECT_DOUBLE_EQ(stats::percentile({7}, 0.25), 7.0);
    EXPECT_THROW(stats::percentile({}, 0.5), InputError);
}

TEST(Percentile, MatchesOrderStatisticEnumeration) {
    std::mt19937_64 rng(17);
    for (std::size_t n = 1; n <= 20; ++n) {
        for (int rep = 0; rep < 200; ++rep) {
            // small integer support forces ties
            std::uniform_int_distribution<int> d(-5, 5);
            std::vector<double> v(n);
            for (auto& x : v) x = d(rng) / 5.0;
            for (double p : {0.25, 0.5, 0.75}) ASSERT_NEAR(stats::percentile(v, p), oracle::percentile(v, p), 1e-15);
            std::sort(v.begin(), v.end());
            ASSERT_NEAR(stats::iqr_sorted(v), oracle::percentile(v, 0.75) - oracle::percentile(v, 0.25), 1e-15);
        }
    }
}

TEST(Profiles, PerSenderSummaries) {
    std::vector<GapRecord> gs{record("a", 0.1), record("b", -0.2), record("a", 0.5), record("a", 0.3),
                              record("a", 0.7)};
    auto p = user_gap_profiles(gs);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].user_id, "a");
    EXPECT_DOUBLE_EQ(p[0].median_gap, 0.4);
    EXPECT_DOUBLE_EQ(p[0].mean_gap, 0.4);
    EXPECT_NEAR(p[0].iqr_gap, 0.55 - 0.25, 1e-15);
    EXPECT_EQ(p[0].n_contacted, 4u);
    EXPECT_DOUBLE_EQ(p[1].median_gap, -0.2);
    EXPECT_DOUBLE_EQ(p[1].iqr_gap, 0.0);
}

TEST(Density, IntegratesToOne) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-1, 1);
    for (std::size_t n : {2u, 3u, 10u, 100u, 5000u}) {
        std::vector<double> v(n);
        for (auto& x : v) x = u(rng);
        EXPECT_NEAR(trapezoid(gap_density(v)), 1.0, 1e-3) << n;
    }
    // mass piled on the support edges
    EXPECT_NEAR(trapezoid(gap_density({1.0, 1.0, 1.0, -1.0})), 1.0, 1e-3);
    // identical values: the bandwidth falls back to one grid step
    EXPECT_NEAR(trapezoid(gap_density({0.2, 0.2, 0.2})), 1.0, 1e-3);
    for (double h : {1e-6, 0.05, 0.5, 5.0}) {
        DensityOptions o;
        o.bandwidth = h;
        EXPECT_NEAR(trapezoid(gap_density({0.1, -0.3, 0.9}, o)), 1.0, 1e-3) << h;
    }
}

TEST(Density, GridAndErrors) {
    auto c = gap_density({0.0, 0.5});
    ASSERT_EQ(c.size(), 201u);
    EXPECT_DOUBLE_EQ(c.bin_centers.front(), -1.0);
    EXPECT_DOUBLE_EQ(c.bin_centers.back(), 1.0);
    EXPECT_THROW(gap_density({0.1}), InputError);
    DensityOptions o;
    o.bandwidth = -1;
    EXPECT_THROW(gap_density({0.1, 0.2}, o), InputError);
}

TEST(Density, SymmetricForSymmetricSample) {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> z(0, 0.4);
    std::vector<double> v;
    while (v.size() < 10000) {
        double x = z(rng);
        if (std::abs(x) <= 1) v.push_back(x);
    }
    auto c = gap_density(v);
    for (std::size_t k = 0; k < c.size(); ++k) EXPECT_NEAR(c.values[k], c.values[c.size() - 1 - k], 0.06);
    // mode near zero
    auto peak = std::max_element(c.values.begin(), c.values.end()) - c.values.begin();
    EXPECT_NEAR(c.bin_centers[peak], 0.0, 0.1);
}

TEST(Density, SilvermanByHand) {
    std::vector<double> v{0, 1, 2, 3, 4};
    // sd = sqrt(2.5), IQR/1.34 = 2/1.34
    const double expect = 0.9 * std::min(std::sqrt(2.5), 2.0 / 1.34) * std::pow(5.0, -0.2);
    EXPECT_NEAR(silverman_bandwidth(v), expect, 1e-15);
}

TEST(Binning, CountsOmissionsAndBinomialErrors) {
    std::vector<GapRecord> gs;
    for (int i = 0; i < 100; ++i) gs.push_back(record("s", -0.9, i < 25));
    for (int i = 0; i < 10; ++i) gs.push_back(record("s", 0.0, true));
    for (int i = 0; i < 60; ++i) gs.push_back(record("s", 0.9, i < 6));
    BinningOptions o{3, 50};
    auto c = reply_rate_by_gap(gs, o);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.omitted, 10u);
    EXPECT_NEAR(c.bin_centers[0], -0.6, 1e-12);
    EXPECT_DOUBLE_EQ(c.values[0], 0.25);
    EXPECT_NEAR(c.standard_errors[0], std::sqrt(0.25 * 0.75 / 100), 1e-15);
    EXPECT_DOUBLE_EQ(c.values[1], 0.1);
    EXPECT_EQ(c.counts[0] + c.counts[1] + c.omitted, gs.size());
}

TEST(Binning, ReplyCurveDecreasesUnderLogisticReplies) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1, 1), p(0, 1);
    std::vector<GapRecord> gs;
    for (int i = 0; i < 40000; ++i) {
        double g = u(rng);
        gs.push_back(record("s" + std::to_string(i % 500), g, p(rng) < glm::sigmoid(-1 - 2 * g)));
    }
    auto c = reply_rate_by_gap(gs);
    ASSERT_GE(c.size(), 15u);
    EXPECT_LE(stats::spearman(c.bin_centers, c.values), -0.9);
}

TEST(Binning, IqrControlRemovesVolumeEffect) {
    // IQR depends only on volume; controlling for volume flattens the curve
    std::vector<UserGapProfile> ps;
    for (int i = 0; i < 2000; ++i) {
        UserGapProfile p;
        p.mean_gap = -0.5 + i / 2000.0;
        p.n_contacted = 1 + static_cast<std::size_t>(i / 100);
        p.iqr_gap = 0.1 + 0.05 * std::log(static_cast<double>(p.n_contacted));
        ps.push_back(p);
    }
    BinningOptions o{10, 1};
    auto raw = iqr_by_gap(ps, o, false);
    auto ctl = iqr_by_gap(ps, o, true);
    EXPECT_GT(raw.values.back() - raw.values.front(), 0.05);
    for (double v : ctl.values) EXPECT_NEAR(v, ctl.values.front(), 1e-12);
    auto vol = volume_by_gap(ps, o);
    EXPECT_LT(vol.values.front(), vol.values.back());
}

TEST(Correlation, SenderReceiverRanks) {
    DesirabilityTable t;
    t.node_ids = {"a", "b", "c", "d"};
    t.scaled_rank = {0.0, 1.0, 0.5, 0.25};
    std::vector<GapRecord> gs;
    auto add = [&](std::string s, std::string r) {
        GapRecord g;
        g.sender_id = s;
        g.receiver_id = r;
        gs.push_back(g);
    };
    add("a", "c");
    add("b", "d");
    add("c", "b");
    std::vector<double> s{0.0, 1.0, 0.5}, r{0.5, 0.25, 1.0};
    EXPECT_NEAR(sender_receiver_correlation(gs, t), stats::pearson(s, r), 1e-15);
    EXPECT_THROW(sender_receiver_correlation({gs[0]}, t), InputError);
}
