#include "factorrisk/bias.hpp"
#include "factorrisk/risk_model.hpp"
#include "factorrisk/synth.hpp"

#include "../support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace factorrisk;
using namespace factorrisk::testing;

TEST(PortfolioVariance, MatchesDenseOracle) {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = random_snapshot(rng, 50, 5, 4);
        const Eigen::MatrixXd v = oracle_dense_v(s);
        const Eigen::VectorXd w = rng.normal_vector(50, 0.05);
        EXPECT_NEAR(portfolio_variance(s, w), w.dot(v * w), 1e-10 * std::max(1.0, w.dot(v * w)));
        EXPECT_LE((covariance_times(s, w) - v * w).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LE((dense_covariance(s) - v).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LE((stock_volatilities(s) - v.diagonal().cwiseSqrt()).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(PortfolioVariance, UnitVectorAndPureIdio) {
    Rng rng(62);
    auto s = random_snapshot(rng, 10, 3, 2);
    const Eigen::VectorXd x3 = s.exposures.values.row(3).transpose();
    EXPECT_NEAR(portfolio_variance(s, Eigen::VectorXd::Unit(10, 3)),
                x3.dot(s.factor_cov.matrix * x3) + s.delta.variances(3), 1e-15);
    s.factor_cov.matrix.setZero();
    const Eigen::VectorXd w = rng.normal_vector(10);
    EXPECT_NEAR(portfolio_variance(s, w), w.cwiseAbs2().dot(s.delta.variances), 1e-15);
}

TEST(PortfolioVariance, NonNegativeForRandomWeights) {
    Rng rng(63);
    const auto s = random_snapshot(rng, 40, 4, 3);
    for (int trial = 0; trial < 500; ++trial) {
        const Eigen::VectorXd w = rng.normal_vector(40);
        EXPECT_GE(portfolio_variance(s, w), -1e-10 * w.squaredNorm());
    }
}

TEST(Snapshot, ValidateCatchesOrderingMismatch) {
    Rng rng(64);
    auto s = random_snapshot(rng, 12, 3, 2);
    EXPECT_NO_THROW(s.validate());
    auto bad = s;
    std::swap(bad.factor_cov.factors[0], bad.factor_cov.factors[1]);
    EXPECT_EQ(error_code([&] { bad.validate(); }), "InconsistentSnapshot");
    bad = s;
    std::swap(bad.delta.stocks[0], bad.delta.stocks[1]);
    EXPECT_EQ(error_code([&] { bad.validate(); }), "InconsistentSnapshot");
    EXPECT_EQ(error_code([&] { portfolio_variance(s, Eigen::VectorXd::Ones(3)); }), "DimensionMismatch");
}

TEST(Bias, StandardizedReturnExamples) {
    EXPECT_DOUBLE_EQ(bias::standardized_return(0.05, 0.05), 1.0);
    EXPECT_DOUBLE_EQ(bias::standardized_return(0.0, 0.05), 0.0);
    EXPECT_DOUBLE_EQ(bias::standardized_return(-0.1, 0.05), -2.0);
    EXPECT_EQ(error_code([] { bias::standardized_return(0.1, 0.0); }), "ZeroForecastVol");
}

TEST(Bias, StatisticExamples) {
    const std::vector<double> alt{1, -1, 1, -1};
    EXPECT_NEAR(bias::bias_statistic(alt), std::sqrt(4.0 / 3.0), 1e-15);
    const std::vector<double> flat{0.7, 0.7, 0.7};
    EXPECT_NEAR(bias::bias_statistic(flat), 0.0, 1e-15);
    const std::vector<double> one{1.0};
    EXPECT_EQ(error_code([&] { bias::bias_statistic(one); }), "InsufficientWindows");
}

TEST(Bias, ExactForecastsFluctuateAroundOne) {
    Rng rng(65);
    const int assets = 500, windows = 60;
    int inside = 0;
    for (int a = 0; a < assets; ++a) {
        const double sigma = rng.uniform(0.02, 0.2);
        std::vector<double> b;
        for (int t = 0; t < windows; ++t) b.push_back(bias::standardized_return(rng.normal(0.0, sigma), sigma));
        const double stat = bias::bias_statistic(b);
        inside += stat >= 0.8 && stat <= 1.2 ? 1 : 0;
    }
    EXPECT_GE(inside, static_cast<int>(0.95 * assets));
}

TEST(Bias, RealizedReturnCompounds) {
    ReturnsPanel p;
    p.dates = synth::business_days(Date{2020, 1, 2}, 4);
    p.stocks = make_universe({"A", "B"});
    p.values.resize(4, 2);
    p.values << 0.1, 0.0, -0.1, kNaN, 0.2, 0.0, 0.0, 0.0;
    p.valid = p.values.array().isFinite();
    EXPECT_NEAR(bias::realized_return(p, 0, 3, 0), 1.1 * 0.9 * 1.2 - 1.0, 1e-15);
    EXPECT_TRUE(std::isnan(bias::realized_return(p, 0, 3, 1)));
    EXPECT_TRUE(std::isnan(bias::realized_return(p, 2, 3, 0)));
}

TEST(Bias, RankGroupsTiesAndDegenerateDeciles) {
    const Eigen::VectorXd vols = Eigen::VectorXd::LinSpaced(10, 1.0, 0.1);
    const auto g = bias::rank_groups(vols, 10);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(g[static_cast<std::size_t>(i)], 9 - i);

    // Equal vols keep universe order.
    const auto tied = bias::rank_groups(Eigen::VectorXd::Constant(20, 0.1), 10);
    for (int i = 0; i < 20; ++i) EXPECT_EQ(tied[static_cast<std::size_t>(i)], i / 2);
    EXPECT_EQ(error_code([] { bias::rank_groups(Eigen::VectorXd::Ones(5), 10); }), "InsufficientStocks");
}

TEST(Bias, DecileBiasPoolsWithinGroups) {
    // Two windows, 20 stocks, 10 groups: each group pools 4 values.
    std::vector<bias::BiasWindow> windows(2);
    for (int w = 0; w < 2; ++w) {
        windows[static_cast<std::size_t>(w)].forecast_vol = Eigen::VectorXd::LinSpaced(20, 0.01, 0.2);
        windows[static_cast<std::size_t>(w)].b.resize(20);
        for (int i = 0; i < 20; ++i) windows[static_cast<std::size_t>(w)].b(i) = (i % 2 == 0 ? 1.0 : -1.0) * (i / 2 + 1);
    }
    const auto out = bias::decile_bias(windows, 10);
    ASSERT_EQ(out.size(), 10u);
    for (int k = 0; k < 10; ++k) {
        const double m = k + 1;
        const std::vector<double> pooled{m, -m, m, -m};
        EXPECT_EQ(out[static_cast<std::size_t>(k)].n_obs, 4);
        EXPECT_NEAR(out[static_cast<std::size_t>(k)].mean_bias, bias::bias_statistic(pooled), 1e-15);
    }
    EXPECT_NEAR(bias::mean_abs_deviation_from_one({0.9, 1.2, 1.0}), 0.1, 1e-15);
}

namespace {

synth::SyntheticMarket small_market(std::uint64_t seed) {
    synth::SyntheticMarketSpec spec;
    spec.n_stocks = 60;
    spec.n_style = 3;
    spec.n_industries = 5;
    spec.n_days = 260;
    spec.seed = seed;
    return synth::generate(spec);
}

RiskModelConfig small_config() {
    RiskModelConfig cfg;
    cfg.factor.window = 100;
    cfg.factor.half_life = 40;
    cfg.idio.window = 100;
    cfg.idio.half_life = 40;
    return cfg;
}

}  // namespace

TEST(Builder, SnapshotIsConsistentAndUsesOnlyEarlierData) {
    const auto m = small_market(66);
    const RiskModelBuilder builder(m.data, small_config());
    const Date d = m.data.returns.dates[200];
    const auto snap = builder.snapshot(d);
    EXPECT_NO_THROW(snap.validate());
    EXPECT_EQ(snap.date, d);
    EXPECT_EQ(snap.factor_cov.factors, snap.exposures.factors);
    EXPECT_TRUE(covariance::is_symmetric_psd(snap.factor_cov.matrix));
    EXPECT_TRUE((snap.delta.variances.array() > 0.0).all());

    // Scrambling returns on and after d cannot change the model at d.
    auto later = m.data;
    for (Eigen::Index t = 200; t < later.returns.values.rows(); ++t) later.returns.values.row(t) *= -3.0;
    const RiskModelBuilder other(later, small_config());
    const auto snap2 = other.snapshot(d);
    EXPECT_EQ(snap2.factor_cov.matrix, snap.factor_cov.matrix);
    EXPECT_EQ(snap2.delta.variances, snap.delta.variances);
    EXPECT_EQ(snap2.exposures.values, snap.exposures.values);

    EXPECT_EQ(error_code([&] { builder.snapshot(Date{2000, 1, 3}); }), "InsufficientHistory");
}

TEST(Builder, EvaluateWindowsStandardizesRealizedReturns) {
    const auto m = small_market(67);
    const RiskModelBuilder builder(m.data, small_config());
    const auto windows = bias::evaluate_windows(builder, m.data.returns, bias::window_starts(150, 21, 3), 21);
    ASSERT_EQ(windows.size(), 3u);
    for (const auto& w : windows) {
        for (Eigen::Index i = 0; i < w.b.size(); ++i)
            if (std::isfinite(w.b(i))) EXPECT_NEAR(w.b(i), w.realized(i) / w.forecast_vol(i), 1e-15);
    }
    EXPECT_EQ(windows[1].start, m.data.returns.dates[171]);
    EXPECT_EQ(error_code([&] { bias::evaluate_windows(builder, m.data.returns, {250}, 21); }), "WindowOutOfRange");
    const auto per_stock = bias::per_stock_bias(windows);
    EXPECT_EQ(per_stock.size(), 60u);
}
