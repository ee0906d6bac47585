#include "factorrisk/panel_store.hpp"

#include "../support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace factorrisk;
using namespace factorrisk::testing;

TEST(Date, ParsesAndFormatsIso) {
    const Date d = Date::parse("2021-03-05");
    EXPECT_EQ(d.year, 2021);
    EXPECT_EQ(d.month, 3u);
    EXPECT_EQ(d.day, 5u);
    EXPECT_EQ(d.str(), "2021-03-05");
}

TEST(Date, SerialRoundTripsAndKnowsWeekdays) {
    EXPECT_EQ(Date::parse("1970-01-01").serial(), 0);
    EXPECT_EQ(Date::parse("1970-01-01").weekday(), 4u);  // Thursday
    EXPECT_EQ(Date::parse("2024-02-29").weekday(), 4u);
    for (std::int64_t s = -1000; s < 30000; s += 37) EXPECT_EQ(Date::from_serial(s).serial(), s);
}

TEST(Date, RejectsMalformedText) {
    EXPECT_EQ(error_code([] { Date::parse("2021-3-5"); }), "MalformedDate");
    EXPECT_EQ(error_code([] { Date::parse("2021-02-30"); }), "MalformedDate");
    EXPECT_EQ(error_code([] { Date::parse("yesterday"); }), "MalformedDate");
}

TEST(StockId, RejectsEmpty) {
    EXPECT_EQ(error_code([] { StockId(""); }), "EmptyStockId");
}

TEST(DatedSeries, LatestBeforeIsStrict) {
    DatedSeries<int> s;
    s.insert(Date{2020, 1, 10}, 1);
    s.insert(Date{2020, 2, 10}, 2);
    EXPECT_EQ(s.latest_before(Date{2020, 1, 10}), nullptr);
    EXPECT_EQ(*s.latest_before(Date{2020, 1, 11}), 1);
    EXPECT_EQ(*s.latest_before(Date{2020, 2, 10}), 1);
    EXPECT_EQ(*s.latest_at_or_before(Date{2020, 2, 10}), 2);
    EXPECT_EQ(*s.latest_before(Date{2021, 1, 1}), 2);
}

TEST(IngestReturns, EmptyCellBecomesInvalid) {
    TempDir dir("returns");
    const auto p = dir.write("returns.csv",
                             "date,A,B\n"
                             "2020-01-02,0.01,-0.02\n"
                             "2020-01-03,,0.005\n"
                             "2020-01-06,0.0,0.03\n");
    const auto panel = ingest_returns(p);
    ASSERT_EQ(panel.dates.size(), 3u);
    ASSERT_EQ(panel.stocks.size(), 2u);
    EXPECT_EQ(panel.valid_count(), 5);
    EXPECT_FALSE(panel.valid(1, 0));
    EXPECT_TRUE(std::isnan(panel.values(1, 0)));
    EXPECT_DOUBLE_EQ(panel.values(2, 1), 0.03);
    EXPECT_EQ(*panel.stock_index(StockId("B")), 1);
    EXPECT_EQ(*panel.date_index(Date{2020, 1, 6}), 2);
}

TEST(IngestReturns, RejectsBadInput) {
    TempDir dir("returns_bad");
    EXPECT_EQ(error_code([&] { ingest_returns(dir.write("a.csv", "date,A\n2020-01-02,1.5\n")); }), "MalformedCell");
    EXPECT_EQ(error_code([&] { ingest_returns(dir.write("b.csv", "date,A\n2020-01-02,0.1\n2020-01-02,0.2\n")); }),
              "DuplicateDate");
    EXPECT_EQ(error_code([&] { ingest_returns(dir.write("c.csv", "date,A,A\n2020-01-02,0.1,0.2\n")); }), "DuplicateStock");
    EXPECT_EQ(error_code([&] { ingest_returns(dir.write("d.csv", "day,A\n2020-01-02,0.1\n")); }), "MalformedHeader");
    EXPECT_EQ(error_code([&] { ingest_returns(dir.write("e.csv", "date,A\n2020-13-02,0.1\n")); }), "MalformedDate");
    EXPECT_EQ(error_code([&] { ingest_returns(dir.path() / "missing.csv"); }), "FileNotFound");
}

TEST(IngestReturns, RoundTripsThroughWriter) {
    TempDir dir("returns_rt");
    const auto p = dir.write("returns.csv", "date,A,B\n2020-01-02,0.0123456789012345,\n2020-01-03,-0.5,0.25\n");
    const auto panel = ingest_returns(p);
    write_returns(dir.path() / "copy.csv", panel);
    const auto again = ingest_returns(dir.path() / "copy.csv");
    EXPECT_EQ(again.dates, panel.dates);
    EXPECT_EQ(again.stocks, panel.stocks);
    EXPECT_TRUE((again.valid == panel.valid).all());
    EXPECT_EQ(again.values(0, 0), panel.values(0, 0));
    EXPECT_EQ(again.values(1, 1), panel.values(1, 1));
}

namespace {

const char* kExposures =
    "stock,style:Size,style:Beta,ind:Banks,ind:Tech,country:Market\n"
    "A,0.5,1.0,1,0,1\n"
    "B,,0.2,1,0,1\n"
    "C,-1.0,0.3,0,1,1\n"
    "D,0.1,-0.4,0,1,1\n";

}  // namespace

TEST(IngestExposures, ParsesKindsAndMissingStyles) {
    TempDir dir("expo");
    const auto t = ingest_exposures(dir.write("x.csv", kExposures), Date{2020, 1, 31});
    EXPECT_EQ(t.stocks.size(), 4u);
    EXPECT_EQ(t.factors, (std::vector<std::string>{"Size", "Beta", "Banks", "Tech", "Market"}));
    EXPECT_EQ(t.columns_of(FactorKind::style).size(), 2u);
    EXPECT_EQ(t.columns_of(FactorKind::industry).size(), 2u);
    EXPECT_EQ(t.country_column(), 4);
    EXPECT_TRUE(std::isnan(t.values(1, 0)));
    EXPECT_EQ(t.industry_membership(), (std::vector<int>{0, 0, 1, 1}));
    EXPECT_NO_THROW(t.validate());
}

TEST(IngestExposures, RejectsIndustryDefects) {
    TempDir dir("expo_bad");
    const Date d{2020, 1, 31};
    EXPECT_EQ(error_code([&] {
                  ingest_exposures(dir.write("two.csv", "stock,style:S,ind:I1,ind:I2,country:C\nA,0.1,1,1,1\n"), d);
              }),
              "MultipleIndustry");
    EXPECT_EQ(error_code([&] {
                  ingest_exposures(dir.write("none.csv", "stock,style:S,ind:I1,ind:I2,country:C\nA,0.1,0,0,1\n"), d);
              }),
              "MissingIndustry");
    EXPECT_EQ(error_code([&] {
                  ingest_exposures(dir.write("nocountry.csv", "stock,style:S,ind:I1\nA,0.1,1\n"), d);
              }),
              "NoCountryColumn");
    EXPECT_EQ(error_code([&] {
                  ingest_exposures(dir.write("country2.csv", "stock,style:S,ind:I1,country:C\nA,0.1,1,2\n"), d);
              }),
              "MalformedCell");
    EXPECT_EQ(error_code([&] {
                  ingest_exposures(dir.write("prefix.csv", "stock,S,ind:I1,country:C\nA,0.1,1,1\n"), d);
              }),
              "MalformedHeader");
}

TEST(IngestExposures, RestrictReordersRows) {
    TempDir dir("expo_restrict");
    const auto t = ingest_exposures(dir.write("x.csv", kExposures), Date{2020, 1, 31});
    const auto r = t.restricted_to(make_universe({"D", "A"}));
    ASSERT_EQ(r.values.rows(), 2);
    EXPECT_EQ(r.stocks.front().str(), "D");
    EXPECT_DOUBLE_EQ(r.values(0, 1), -0.4);
    EXPECT_DOUBLE_EQ(r.values(1, 1), 1.0);
    EXPECT_EQ(error_code([&] { t.restricted_to(make_universe({"Z"})); }), "UnknownStock");
}

TEST(IngestVectors, CapsBenchmarkAlpha) {
    TempDir dir("vectors");
    const Date d{2020, 1, 31};
    const auto caps = ingest_caps(dir.write("caps.csv", "stock,cap\nA,100\nB,25\n"), d);
    EXPECT_DOUBLE_EQ(caps.values(1), 25.0);
    EXPECT_EQ(error_code([&] { ingest_caps(dir.write("c0.csv", "stock,cap\nA,0\n"), d); }), "MalformedCell");
    EXPECT_EQ(error_code([&] { ingest_caps(dir.write("c1.csv", "stock,size\nA,1\n"), d); }), "MalformedHeader");

    const auto bench = ingest_benchmark(dir.write("bench.csv", "stock,weight\nA,0.25\nB,0.75\n"), d);
    EXPECT_EQ(bench.select(make_universe({"B", "A"})), Eigen::Vector2d(0.75, 0.25));
    EXPECT_EQ(error_code([&] { ingest_benchmark(dir.write("b1.csv", "stock,weight\nA,0.5\nB,0.4\n"), d); }),
              "BenchmarkNotNormalized");

    const auto alpha = ingest_alpha(dir.write("alpha.csv", "stock,alpha\nA,-0.01\nB,0.02\n"), d);
    EXPECT_DOUBLE_EQ(alpha.values(0), -0.01);
}

TEST(AlignUniverse, IntersectionWithDropReport) {
    const auto out = align_universe({make_universe({"A", "B", "C"}), make_universe({"B", "C", "D"})});
    EXPECT_EQ(out.stocks, make_universe({"B", "C"}));
    ASSERT_EQ(out.dropped.size(), 2u);
    EXPECT_EQ(out.dropped[0], make_universe({"A"}));
    EXPECT_EQ(out.dropped[1], make_universe({"D"}));
}

TEST(AlignUniverse, IdenticalAndDisjoint) {
    const auto u = make_universe({"A", "B", "C"});
    const auto same = align_universe({u, u});
    EXPECT_EQ(same.stocks, u);
    EXPECT_TRUE(same.dropped[0].empty());
    EXPECT_EQ(error_code([] { align_universe({make_universe({"A"}), make_universe({"B"})}); }), "EmptyIntersection");
}

TEST(UniverseHash, StableAndOrderSensitive) {
    const auto a = universe_hash(make_universe({"A", "B"}));
    EXPECT_EQ(a.size(), 16u);
    EXPECT_EQ(a, universe_hash(make_universe({"A", "B"})));
    EXPECT_NE(a, universe_hash(make_universe({"B", "A"})));
}

TEST(LoadDataDir, UsesStrictlyEarlierFiles) {
    TempDir dir("datadir");
    dir.write("returns.csv",
              "date,A,B,C\n"
              "2020-01-30,0.01,0.02,0.03\n"
              "2020-01-31,0.01,0.02,0.03\n"
              "2020-02-03,0.01,0.02,0.03\n");
    dir.write("exposures/2020-01-31.csv",
              "stock,style:S,ind:I,country:M\nA,0.1,1,1\nB,0.2,1,1\nC,0.3,1,1\n");
    dir.write("caps/2020-01-31.csv", "stock,cap\nA,1\nB,2\n");
    const auto data = load_data_dir(dir.path());
    EXPECT_EQ(data.returns.dates.size(), 3u);
    EXPECT_EQ(data.exposures.size(), 1u);
    EXPECT_TRUE(data.benchmark.empty());

    EXPECT_EQ(error_code([&] { align_for_date(data, Date{2020, 1, 31}); }), "MissingInput");
    const auto aligned = align_for_date(data, Date{2020, 2, 3});
    EXPECT_EQ(aligned.stocks, make_universe({"A", "B"}));
}

TEST(LoadDataDir, RequiresExposuresAndCaps) {
    TempDir dir("datadir_missing");
    dir.write("returns.csv", "date,A\n2020-01-30,0.01\n");
    EXPECT_EQ(error_code([&] { load_data_dir(dir.path()); }), "MissingInput");
}
