#include "dmarket/design.hpp"
#include "test_util.hpp"

using namespace dmarket;

namespace {

DataTable four_rows() {
    DataTable t;
    t.add("gap", DataTable::Numeric{0.1, -0.2, 0.3, 0.5});
    t.add("city", DataTable::Categorical{"boston", "nyc", "nyc", "seattle"});
    t.add("seeker", DataTable::Categorical{"u1", "u2", "u1", "u3"});
    return t;
}

} // namespace

TEST(Formula, ParsesTermsPowersAndInteractions) {
    auto f = Formula::parse("gap + gap^2 + city + gap^2:city");
    EXPECT_TRUE(f.intercept);
    ASSERT_EQ(f.terms.size(), 4u);
    EXPECT_EQ(f.terms[1][0].power, 2);
    ASSERT_EQ(f.terms[3].size(), 2u);
    EXPECT_EQ(f.terms[3][1].column, "city");
    EXPECT_FALSE(Formula::parse("0 + gap").intercept);
    EXPECT_FALSE(Formula::parse("gap + -1").intercept);
    EXPECT_THROW(Formula::parse("gap + "), InputError);
    EXPECT_THROW(Formula::parse("gap^0"), InputError);
    EXPECT_THROW(Formula::parse("gap:"), InputError);
}

TEST(Design, CityIndicatorsUseBostonReference) {
    DataTable t;
    t.add("city", DataTable::Categorical{"nyc", "boston", "chicago", "seattle", "nyc"});
    auto d = build_design(t, Formula::parse("city"), "");
    EXPECT_EQ(d.names, (std::vector<std::string>{"(intercept)", "city[chicago]", "city[nyc]", "city[seattle]"}));
    EXPECT_EQ(d.X(0, 2), 1.0);
    EXPECT_EQ(d.X(1, 1) + d.X(1, 2) + d.X(1, 3), 0.0);
    EXPECT_EQ(d.spec.reference.at("city"), "boston");
}

TEST(Design, ReferenceLevelOverride) {
    DataTable t;
    t.add("city", DataTable::Categorical{"nyc", "boston", "chicago"});
    DesignOptions o;
    o.reference_levels["city"] = "nyc";
    auto d = build_design(t, Formula::parse("city"), "", o);
    EXPECT_EQ(d.names[1], "city[boston]");
    o.reference_levels["city"] = "paris";
    EXPECT_THROW(build_design(t, Formula::parse("city"), "", o), InputError);
}

TEST(Design, InteractionMatchesHandProducts) {
    DataTable t;
    t.add("gap", DataTable::Numeric{0.1, -0.2, 0.3, 0.5, -0.4, 0.7});
    t.add("city", DataTable::Categorical{"boston", "nyc", "nyc", "seattle", "boston", "seattle"});
    t.add("seeker", DataTable::Categorical{"u1", "u2", "u1", "u3", "u2", "u4"});
    auto d = build_design(t, Formula::parse("gap + city + gap:city"), "seeker");
    const std::vector<std::string> names{"(intercept)",  "gap",           "city[nyc]",
                                         "city[seattle]", "gap:city[nyc]", "gap:city[seattle]"};
    ASSERT_EQ(d.names, names);
    const double expect[6][6] = {{1, 0.1, 0, 0, 0, 0},     {1, -0.2, 1, 0, -0.2, 0}, {1, 0.3, 1, 0, 0.3, 0},
                                 {1, 0.5, 0, 1, 0, 0.5},   {1, -0.4, 0, 0, 0, 0},    {1, 0.7, 0, 1, 0, 0.7}};
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) EXPECT_EQ(d.X(i, j), expect[i][j]) << i << "," << j;
    EXPECT_EQ(d.clusters(), 4u);
    EXPECT_EQ(d.cluster, (std::vector<std::size_t>{0, 1, 0, 2, 1, 3}));
}

TEST(Design, ZeroColumnIsDroppedAndReported) {
    DataTable t;
    t.add("gap", DataTable::Numeric{0, 0, 0, 0});
    t.add("x", DataTable::Numeric{1, 2, 3, 5});
    auto d = build_design(t, Formula::parse("x + gap^2"), "");
    EXPECT_EQ(d.names, (std::vector<std::string>{"(intercept)", "x"}));
    EXPECT_EQ(d.dropped, (std::vector<std::string>{"gap^2"}));
}

TEST(Design, LinearlyDependentColumnIsDropped) {
    DataTable t;
    t.add("a", DataTable::Numeric{1, 2, 3, 4});
    t.add("b", DataTable::Numeric{3, 5, 7, 9}); // 1 + 2a
    auto d = build_design(t, Formula::parse("a + b"), "");
    EXPECT_EQ(d.dropped, (std::vector<std::string>{"b"}));
    EXPECT_EQ(d.X.cols(), 2);
    // a constant numeric is aliased with the intercept
    DataTable c;
    c.add("k", DataTable::Numeric{2, 2, 2});
    EXPECT_EQ(build_design(c, Formula::parse("k"), "").dropped, (std::vector<std::string>{"k"}));
}

TEST(Design, Errors) {
    auto t = four_rows();
    EXPECT_THROW(build_design(t, Formula::parse("nope"), ""), InputError);
    EXPECT_THROW(build_design(t, Formula::parse("city^2"), ""), InputError);
    EXPECT_THROW(build_design(t, Formula::parse("gap"), "nope"), InputError);
    DataTable one;
    one.add("city", DataTable::Categorical{"nyc", "nyc"});
    EXPECT_THROW(build_design(one, Formula::parse("city"), ""), InputError);
    DataTable bad;
    bad.add("a", DataTable::Numeric{1, 2});
    EXPECT_THROW(bad.add("b", DataTable::Numeric{1}), InputError);
    EXPECT_THROW(bad.labels("zz"), InputError);
    EXPECT_THROW(four_rows().numeric("city"), InputError);
}

TEST(Design, NoInterceptKeepsAllLevels) {
    auto d = build_design(four_rows(), Formula::parse("0 + gap"), "");
    EXPECT_EQ(d.names, (std::vector<std::string>{"gap"}));
    EXPECT_EQ(d.clusters(), 4u);
}

TEST(DesignSpec, RowRebuildsDesignRows) {
    auto t = four_rows();
    auto d = build_design(t, Formula::parse("gap + gap^2 + city + gap:city"), "");
    const auto& gap = t.numeric("gap");
    const auto city = t.labels("city");
    for (int i = 0; i < 4; ++i) {
        auto x = d.spec.row({{"gap", gap[i]}, {"city", city[i]}});
        ASSERT_EQ(x.size(), d.X.cols());
        for (Eigen::Index j = 0; j < x.size(); ++j) EXPECT_DOUBLE_EQ(x[j], d.X(i, j));
    }
    EXPECT_THROW(d.spec.row({{"gap", 0.1}}), InputError);
    EXPECT_THROW(d.spec.row({{"gap", std::string("x")}, {"city", std::string("nyc")}}), InputError);
}

TEST(DataTable, FilterAndLabels) {
    DataTable t;
    t.add("v", DataTable::Numeric{1.5, 2});
    EXPECT_EQ(t.labels("v"), (DataTable::Categorical{"1.5", "2"}));
    EXPECT_TRUE(t.is_numeric("v"));
    EXPECT_EQ(t.rows(), 2u);
}
