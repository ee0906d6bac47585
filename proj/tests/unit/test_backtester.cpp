#include "factorrisk/backtester.hpp"
#include "factorrisk/synth.hpp"

#include "../support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace factorrisk;
using namespace factorrisk::backtest;
using namespace factorrisk::testing;

namespace {

RiskModelConfig short_model() {
    RiskModelConfig cfg;
    cfg.factor.window = 60;
    cfg.factor.half_life = 30;
    cfg.idio.window = 60;
    cfg.idio.half_life = 30;
    return cfg;
}

synth::SyntheticMarket market(std::uint64_t seed, int n_stocks = 50, int days = 180) {
    synth::SyntheticMarketSpec spec;
    spec.n_stocks = n_stocks;
    spec.n_style = 3;
    spec.n_industries = 4;
    spec.n_days = days;
    spec.seed = seed;
    return synth::generate(spec);
}

BacktestConfig config_for(const MarketData& data, Strategy strategy) {
    BacktestConfig cfg;
    cfg.start = data.returns.dates[70];
    cfg.end = data.returns.dates.back();
    cfg.strategy = strategy;
    cfg.model = short_model();
    return cfg;
}

/// One stock, one industry, given daily returns; caps and exposures dated before the first day.
MarketData single_stock(const Eigen::VectorXd& r) {
    MarketData d;
    const auto dates = synth::business_days(Date{2020, 1, 2}, static_cast<int>(r.size()));
    d.returns.dates = dates;
    d.returns.stocks = make_universe({"ONLY"});
    d.returns.values = r;
    d.returns.valid = d.returns.values.array().isFinite();
    ExposureTensor x;
    x.date = Date{2019, 12, 31};
    x.stocks = d.returns.stocks;
    x.factors = {"Ind", "Market"};
    x.kinds = {FactorKind::industry, FactorKind::country};
    x.values = Eigen::MatrixXd::Ones(1, 2);
    d.exposures.insert(x.date, x);
    d.caps.insert(x.date, StockVector{x.date, x.stocks, Eigen::VectorXd::Ones(1)});
    d.benchmark.insert(x.date, StockVector{x.date, x.stocks, Eigen::VectorXd::Ones(1)});
    return d;
}

}  // namespace

TEST(RebalanceDates, FirstTradingDayOfEachMonth) {
    const std::vector<Date> dates{Date{2020, 1, 30}, Date{2020, 1, 31}, Date{2020, 2, 3}, Date{2020, 2, 4},
                                  Date{2020, 3, 2},  Date{2020, 3, 3},  Date{2020, 4, 1}};
    EXPECT_EQ(rebalance_dates(dates, Date{2020, 1, 31}, Date{2020, 3, 31}),
              (std::vector<Date>{Date{2020, 2, 3}, Date{2020, 3, 2}}));
    EXPECT_EQ(rebalance_dates(dates, Date{2020, 1, 1}, Date{2020, 1, 31}), (std::vector<Date>{Date{2020, 1, 30}}));
}

TEST(Metrics, ConstantReturn) {
    const auto dates = synth::business_days(Date{2020, 1, 2}, 252);
    const Eigen::VectorXd r = Eigen::VectorXd::Constant(252, 0.001);
    const auto m = compute_metrics(dates, r, Eigen::VectorXd::Zero(252));
    EXPECT_NEAR(m.ann_return, std::pow(1.001, 252) - 1.0, 1e-12);
    EXPECT_NEAR(m.ann_vol, 0.0, 1e-12);
    EXPECT_TRUE(m.zero_vol);
    EXPECT_EQ(m.sharpe, 0.0);
    EXPECT_EQ(m.max_drawdown, 0.0);
    EXPECT_EQ(m.success_ratio, 1.0);
}

TEST(Metrics, DrawdownHandExample) {
    EXPECT_NEAR(max_drawdown(Eigen::Vector4d(1.0, 1.2, 0.9, 1.1)), 0.25, 1e-15);
    EXPECT_EQ(max_drawdown(Eigen::Vector3d(1.0, 1.1, 1.2)), 0.0);
}

TEST(Metrics, PortfolioEqualsBenchmark) {
    Rng rng(91);
    const auto dates = synth::business_days(Date{2020, 1, 2}, 100);
    const Eigen::VectorXd r = rng.normal_vector(100, 0.01);
    const auto m = compute_metrics(dates, r, r);
    EXPECT_EQ(m.info_ratio, 0.0);
    EXPECT_TRUE(m.zero_tracking);
    EXPECT_EQ(m.success_ratio, 0.0);
    EXPECT_GT(m.months, 3);
    EXPECT_NEAR(m.ann_vol, std::sqrt(252.0) * std::sqrt((r.array() - r.mean()).square().sum() / 99.0), 1e-12);
}

TEST(Metrics, SharpeAndInformationRatio) {
    Rng rng(92);
    const auto dates = synth::business_days(Date{2020, 1, 2}, 200);
    const Eigen::VectorXd rb = rng.normal_vector(200, 0.01);
    const Eigen::VectorXd rp = rb + rng.normal_vector(200, 0.002) + Eigen::VectorXd::Constant(200, 0.0005);
    const auto m = compute_metrics(dates, rp, rb, 0.02);
    EXPECT_NEAR(m.sharpe, (m.ann_return - 0.02) / m.ann_vol, 1e-12);
    const Eigen::VectorXd ex = rp - rb;
    const double te = std::sqrt((ex.array() - ex.mean()).square().sum() / 199.0) * std::sqrt(252.0);
    EXPECT_NEAR(m.tracking_error, te, 1e-12);
    EXPECT_NEAR(m.info_ratio, ex.mean() * 252.0 / te, 1e-10);
    EXPECT_EQ(error_code([&] { compute_metrics({dates[0]}, rp.head(1), rb.head(1)); }), "InsufficientData");
}

TEST(BenchmarkOn, RenormalizesOnUniverse) {
    const StockVector b{Date{2020, 1, 2}, make_universe({"A", "B", "C"}), Eigen::Vector3d(0.5, 0.3, 0.2)};
    const auto w = benchmark_on(b, make_universe({"C", "A", "Z"}));
    EXPECT_NEAR(w(0), 0.2 / 0.7, 1e-15);
    EXPECT_NEAR(w(1), 0.5 / 0.7, 1e-15);
    EXPECT_EQ(w(2), 0.0);
    EXPECT_EQ(error_code([&] { benchmark_on(b, make_universe({"Z"})); }), "EmptyBenchmark");
}

TEST(Backtest, SingleStockTracksItsOwnReturn) {
    Rng rng(93);
    const Eigen::VectorXd r = rng.normal_vector(120, 0.01);
    const auto data = single_stock(r);
    BacktestConfig cfg;
    cfg.start = data.returns.dates[40];
    cfg.end = data.returns.dates.back();
    cfg.model = short_model();
    cfg.model.factor.window = 20;
    cfg.model.idio.window = 20;
    const auto rep = run_backtest(cfg, data);
    const auto first = *data.returns.date_index(rep.dates.front());
    double nv = 1.0;
    for (Eigen::Index t = 1; t < rep.portfolio_nv.size(); ++t) {
        nv *= 1.0 + r(first + t);
        EXPECT_NEAR(rep.portfolio_nv(t), nv, 1e-12);
    }
    EXPECT_LE((rep.excess_nv.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(Backtest, ZeroReturnMarketIsFlat) {
    const auto data = single_stock(Eigen::VectorXd::Zero(120));
    BacktestConfig cfg;
    cfg.start = data.returns.dates[40];
    cfg.end = data.returns.dates.back();
    cfg.strategy = Strategy::equal_weight;
    cfg.model = short_model();
    cfg.model.factor.window = 20;
    cfg.model.idio.window = 20;
    const auto rep = run_backtest(cfg, data);
    EXPECT_EQ(rep.portfolio_nv, Eigen::VectorXd::Ones(rep.portfolio_nv.size()));
    EXPECT_TRUE(rep.metrics.zero_vol);
    EXPECT_EQ(rep.metrics.sharpe, 0.0);
    EXPECT_EQ(rep.metrics.ann_return, 0.0);
    EXPECT_EQ(rep.metrics.max_drawdown, 0.0);
}

TEST(Backtest, EqualWeightDriftsBetweenRebalances) {
    const auto m = market(94);
    const auto& ret = m.data.returns;
    const auto cfg = config_for(m.data, Strategy::equal_weight);
    const auto rep = run_backtest(cfg, m.data);
    ASSERT_GE(rep.rebalances.size(), 2u);

    // Manual replay: equal weights on each rebalance day's universe, drifting daily.
    const RiskModelBuilder builder(m.data, cfg.model);
    const auto first = *ret.date_index(rep.dates.front());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(ret.stocks.size());
    double nv = 1.0;
    std::size_t k = 0;
    for (Eigen::Index t = first; t < static_cast<Eigen::Index>(ret.dates.size()); ++t) {
        if (t > first) {
            double p = 0.0;
            Eigen::VectorXd grown = w;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                const double r = ret.valid(t, i) ? ret.values(t, i) : 0.0;
                p += w(i) * r;
                grown(i) = w(i) * (1.0 + r);
            }
            w = grown / grown.sum();
            nv *= 1.0 + p;
            EXPECT_NEAR(rep.portfolio_nv(t - first), nv, 1e-12);
        }
        if (k < rep.rebalances.size() && rep.rebalances[k].date == ret.dates[static_cast<std::size_t>(t)]) {
            const auto uni = builder.snapshot(ret.dates[static_cast<std::size_t>(t)]).universe();
            w.setZero();
            for (const auto& s : uni) w(*ret.stock_index(s)) = 1.0 / static_cast<double>(uni.size());
            ++k;
        }
    }
}

TEST(Backtest, ForesightAlphaBeatsBenchmark) {
    for (std::uint64_t seed : {95u, 96u, 97u}) {
        const auto m = market(seed);
        const auto& ret = m.data.returns;
        auto cfg = config_for(m.data, Strategy::optimized);
        cfg.problem.objective = portfolio::Objective::max_risk_adjusted;
        cfg.problem.lambda = 0.0;
        cfg.problem.constraints.per_stock_cap = 0.1;
        const auto rebal = rebalance_dates(ret.dates, cfg.start, cfg.end);
        cfg.alpha_source = [&](const Date& d, const Universe& uni) {
            // Realized return from this close to the next rebalance close.
            const auto from = *ret.date_index(d);
            auto it = std::upper_bound(rebal.begin(), rebal.end(), d);
            const auto to = it == rebal.end() ? static_cast<Eigen::Index>(ret.dates.size()) - 1 : *ret.date_index(*it);
            Eigen::VectorXd a(static_cast<Eigen::Index>(uni.size()));
            for (std::size_t i = 0; i < uni.size(); ++i) {
                const auto c = *ret.stock_index(uni[i]);
                double g = 1.0;
                for (Eigen::Index t = from + 1; t <= to; ++t) g *= 1.0 + (ret.valid(t, c) ? ret.values(t, c) : 0.0);
                a(static_cast<Eigen::Index>(i)) = g - 1.0;
            }
            return a;
        };
        const auto rep = run_backtest(cfg, m.data);
        EXPECT_GE(rep.portfolio_nv.tail(1)(0), rep.benchmark_nv.tail(1)(0)) << seed;
        for (const auto& r : rep.rebalances) EXPECT_EQ(r.status, "optimal");
    }
}

TEST(Backtest, RejectsShortHistoryAndBadWindow) {
    const auto m = market(98);
    auto cfg = config_for(m.data, Strategy::equal_weight);
    cfg.start = m.data.returns.dates[20];
    EXPECT_EQ(error_code([&] { run_backtest(cfg, m.data); }), "InsufficientHistory");
    cfg.start = m.data.returns.dates.back();
    cfg.end = m.data.returns.dates[100];
    EXPECT_EQ(error_code([&] { run_backtest(cfg, m.data); }), "InvalidConfig");
}

TEST(Backtest, BenchmarkStrategyMatchesBenchmarkSeries) {
    const auto m = market(99);
    const auto rep = run_backtest(config_for(m.data, Strategy::benchmark), m.data);
    EXPECT_LE((rep.portfolio_nv - rep.benchmark_nv).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(rep.metrics.info_ratio, 0.0, 1e-12);
}

TEST(Names, StrategyRoundTrip) {
    for (auto s : {Strategy::optimized, Strategy::equal_weight, Strategy::benchmark})
        EXPECT_EQ(parse_strategy(to_string(s)), s);
    EXPECT_THROW(parse_strategy("momentum"), Error);
}
