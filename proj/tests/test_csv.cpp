#include <cmath>
#include <limits>
#include <random>

#include "dmarket/csv.hpp"
#include "test_util.hpp"

using namespace dmarket;

TEST(Csv, ParsesQuotedFieldsAndTracksLines) {
    auto recs = csv::parse("a,b\n\"x,1\",\"say \"\"hi\"\"\"\n\"multi\nline\",z\n");
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[1].fields[0], "x,1");
    EXPECT_EQ(recs[1].fields[1], "say \"hi\"");
    EXPECT_EQ(recs[2].fields[0], "multi\nline");
    EXPECT_EQ(recs[2].line, 3u);
}

TEST(Csv, HandlesCrLfAndMissingFinalNewline) {
    auto recs = csv::parse("a,b\r\n1,2\r\n3,");
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[1].fields[1], "2");
    ASSERT_EQ(recs[2].fields.size(), 2u);
    EXPECT_EQ(recs[2].fields[1], "");
}

TEST(Csv, QuoteRoundTrips) {
    for (std::string s : {"plain", "with,comma", "with \"quote\"", "line\nbreak", ""}) {
        auto recs = csv::parse("k," + csv::quote(s) + "\n");
        ASSERT_EQ(recs.size(), 1u);
        EXPECT_EQ(recs[0].fields[1], s);
    }
}

TEST(Csv, FormatDoubleIsShortestRoundTrip) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng);
        auto back = csv::parse_double(csv::format_double(v));
        ASSERT_TRUE(back);
        EXPECT_EQ(*back, v);
    }
    EXPECT_EQ(csv::format_double(1.85), "1.85");
    EXPECT_EQ(csv::format_double(1.0), "1");
}

TEST(Csv, BlankLinesAreSkipped) {
    auto recs = csv::parse("a\n\nb\n");
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[1].line, 3u);
    EXPECT_THROW(csv::parse("\"open"), InputError);
}

TEST(Csv, ParseIntRejectsJunk) {
    EXPECT_EQ(csv::parse_int<int>("42"), 42);
    EXPECT_FALSE(csv::parse_int<int>("4x"));
    EXPECT_FALSE(csv::parse_int<int>(""));
    EXPECT_FALSE(csv::parse_double("1.5abc"));
}

TEST(Csv, WriteAtomicLeavesNoTempFile) {
    testutil::TempDir dir;
    auto p = dir / "sub" / "out.csv";
    csv::Writer w({"a", "b"});
    w.add(1, "x,y");
    w.save(p);
    EXPECT_EQ(testutil::read_text(p), "a,b\n1,\"x,y\"\n");
    EXPECT_FALSE(std::filesystem::exists(p.string() + ".tmp"));
}

TEST(Csv, TableStripsBomAndReportsMissingColumn) {
    testutil::TempDir dir;
    testutil::write_text(dir / "t.csv", "\xEF\xBB\xBFid,v\n1,2\n");
    auto t = csv::Table::read(dir / "t.csv");
    EXPECT_EQ(t.require("id"), 0u);
    EXPECT_THROW(t.require("nope"), InputError);
    EXPECT_THROW(csv::Table::read(dir / "absent.csv"), InputError);
}
