#include "factorrisk/backtester.hpp"

#include "factorrisk/error.hpp"
#include "factorrisk/stats.hpp"

#include <algorithm>
#include <cmath>

namespace factorrisk::backtest {

namespace {

constexpr const char* kModule = "backtester";

double std_dev(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    return std::sqrt((v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
}

/// Applies one day's returns to weights over panel columns; returns the portfolio return.
double apply_day(Eigen::VectorXd& w, const ReturnsPanel& returns, Eigen::Index t, int* zero_filled) {
    double rp = 0.0;
    Eigen::VectorXd grown = w;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        if (w(i) == 0.0) continue;
        if (!returns.valid(t, i)) {
            if (zero_filled) ++*zero_filled;
            continue;
        }
        const double r = returns.values(t, i);
        rp += w(i) * r;
        grown(i) = w(i) * (1.0 + r);
    }
    const double total = grown.sum();
    if (std::abs(total) > 1e-300) w = grown * (w.sum() / total);
    return rp;
}

Eigen::VectorXd to_panel(const Eigen::VectorXd& w, const Universe& universe, const ReturnsPanel& returns) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(returns.stocks.size()));
    for (std::size_t i = 0; i < universe.size(); ++i) {
        const auto col = returns.stock_index(universe[i]);
        if (!col) throw Error(kModule, "UnknownStock", "stock missing from returns panel", {{"stock", universe[i].str()}});
        out(*col) = w(static_cast<Eigen::Index>(i));
    }
    return out;
}

Eigen::VectorXd bench_on_panel(const DatedSeries<StockVector>& series, const Date& date, const ReturnsPanel& returns) {
    const auto* b = series.latest_before(date);
    if (!b) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(returns.stocks.size()));
    return to_panel(benchmark_on(*b, returns.stocks), returns.stocks, returns);
}

}  // namespace

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::optimized: return "optimized";
        case Strategy::equal_weight: return "equal_weight";
        case Strategy::benchmark: return "benchmark";
    }
    return "optimized";
}

Strategy parse_strategy(std::string_view s) {
    if (s == "optimized") return Strategy::optimized;
    if (s == "equal_weight") return Strategy::equal_weight;
    if (s == "benchmark") return Strategy::benchmark;
    throw Error(kModule, "InvalidConfig", "unknown strategy", {{"strategy", std::string(s)}});
}

void BacktestConfig::validate() const {
    if (!(start < end)) throw Error(kModule, "InvalidConfig", "start must precede end", {{"start", start.str()}, {"end", end.str()}});
    problem.constraints.validate();
}

std::vector<Date> rebalance_dates(const std::vector<Date>& dates, const Date& start, const Date& end) {
    std::vector<Date> out;
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (dates[i] < start || dates[i] > end) continue;
        if (i == 0 || !dates[i - 1].same_month(dates[i])) out.push_back(dates[i]);
    }
    return out;
}

double max_drawdown(const Eigen::VectorXd& nv) {
    double peak = -std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (Eigen::Index t = 0; t < nv.size(); ++t) {
        peak = std::max(peak, nv(t));
        if (peak > 0.0) worst = std::max(worst, 1.0 - nv(t) / peak);
    }
    return std::clamp(worst, 0.0, 1.0);
}

Metrics compute_metrics(const std::vector<Date>& dates, const Eigen::VectorXd& rp, const Eigen::VectorXd& rb,
                        double risk_free) {
    const auto n = rp.size();
    if (n < 2) throw Error(kModule, "InsufficientData", "metrics need at least two daily returns");
    if (rb.size() != n || static_cast<Eigen::Index>(dates.size()) != n)
        throw Error(kModule, "DimensionMismatch", "return series and dates differ in length");

    Metrics m;
    m.days = static_cast<int>(n);
    Eigen::VectorXd nv(n + 1);
    nv(0) = 1.0;
    for (Eigen::Index t = 0; t < n; ++t) nv(t + 1) = nv(t) * (1.0 + rp(t));
    m.ann_return = std::pow(nv(n), 252.0 / static_cast<double>(n)) - 1.0;
    m.ann_vol = std_dev(rp) * std::sqrt(252.0);
    m.zero_vol = m.ann_vol < 1e-12;
    m.sharpe = m.zero_vol ? 0.0 : (m.ann_return - risk_free) / m.ann_vol;

    const Eigen::VectorXd ex = rp - rb;
    m.tracking_error = std_dev(ex) * std::sqrt(252.0);
    m.zero_tracking = m.tracking_error < 1e-12;
    m.info_ratio = m.zero_tracking ? 0.0 : ex.mean() * 252.0 / m.tracking_error;
    m.max_drawdown = max_drawdown(nv);

    int wins = 0;
    double gp = 1.0, gb = 1.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        gp *= 1.0 + rp(t);
        gb *= 1.0 + rb(t);
        const bool month_end = t + 1 == n || !dates[static_cast<std::size_t>(t)].same_month(dates[static_cast<std::size_t>(t + 1)]);
        if (month_end) {
            ++m.months;
            if (gp > gb) ++wins;
            gp = gb = 1.0;
        }
    }
    m.success_ratio = m.months > 0 ? static_cast<double>(wins) / m.months : 0.0;
    return m;
}

Eigen::VectorXd benchmark_on(const StockVector& bench, const Universe& universe) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(universe.size()));
    for (std::size_t i = 0; i < universe.size(); ++i)
        if (auto k = bench.index_of(universe[i])) out(static_cast<Eigen::Index>(i)) = bench.values(*k);
    const double s = out.sum();
    if (!(s > 0.0)) throw Error(kModule, "EmptyBenchmark", "benchmark has no weight on the universe", {{"date", bench.date.str()}});
    return out / s;
}

BacktestReport run_backtest(const BacktestConfig& config, const MarketData& data) {
    const RiskModelBuilder builder(data, config.model);
    return run_backtest(config, data, builder);
}

BacktestReport run_backtest(const BacktestConfig& config, const MarketData& data, const RiskModelBuilder& builder) {
    config.validate();
    const auto& returns = data.returns;
    const auto rebal = rebalance_dates(returns.dates, config.start, config.end);
    if (rebal.empty()) throw Error(kModule, "InsufficientHistory", "no rebalance date inside the backtest window");

    const auto& fr_dates = builder.history().factor_returns.dates;
    const auto history = std::lower_bound(fr_dates.begin(), fr_dates.end(), rebal.front()) - fr_dates.begin();
    if (history < config.model.factor.window + 1)
        throw Error(kModule, "InsufficientHistory", "not enough estimation history before the first rebalance",
                    {{"first_rebalance", rebal.front().str()}, {"history", std::to_string(history)},
                     {"required", std::to_string(config.model.factor.window + 1)}});

    const auto first = *returns.date_index(rebal.front());
    Eigen::Index last = first;
    while (last + 1 < static_cast<Eigen::Index>(returns.dates.size()) && returns.dates[static_cast<std::size_t>(last + 1)] <= config.end) ++last;

    const auto n_all = static_cast<Eigen::Index>(returns.stocks.size());
    Eigen::VectorXd wp = Eigen::VectorXd::Zero(n_all);
    Eigen::VectorXd wb = Eigen::VectorXd::Zero(n_all);

    BacktestReport rep;
    std::vector<double> nv_p{1.0}, nv_b{1.0};
    std::vector<double> rp, rb;
    std::vector<Date> ret_dates;
    rep.dates.push_back(returns.dates[static_cast<std::size_t>(first)]);
    std::size_t next = 0;

    for (Eigen::Index t = first; t <= last; ++t) {
        const Date& date = returns.dates[static_cast<std::size_t>(t)];
        if (t > first) {
            const double p = apply_day(wp, returns, t, &rep.zero_filled);
            const double b = apply_day(wb, returns, t, nullptr);
            rp.push_back(p);
            rb.push_back(b);
            ret_dates.push_back(date);
            nv_p.push_back(nv_p.back() * (1.0 + p));
            nv_b.push_back(nv_b.back() * (1.0 + b));
            rep.dates.push_back(date);
        }
        if (next >= rebal.size() || rebal[next] != date) continue;
        ++next;

        // New weights take effect from this day's close; the model only sees data before it.
        const auto snap = builder.snapshot(date);
        const auto& uni = snap.universe();
        RebalanceRecord rec;
        rec.date = date;
        Eigen::VectorXd target;

        const auto* bench_file = data.benchmark.latest_before(date);
        std::optional<Eigen::VectorXd> bench;
        if (bench_file) bench = benchmark_on(*bench_file, uni);

        try {
            if (config.strategy == Strategy::equal_weight) {
                target = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(uni.size()),
                                                   config.problem.constraints.budget / static_cast<double>(uni.size()));
                rec.status = "optimal";
            } else if (config.strategy == Strategy::benchmark) {
                if (!bench) throw Error(kModule, "MissingBenchmark", "no benchmark before rebalance date", {{"date", date.str()}});
                target = *bench;
                rec.status = "optimal";
            } else {
                portfolio::PortfolioProblem prob = config.problem;
                prob.benchmark = bench;
                if (config.alpha_source) {
                    prob.alpha = config.alpha_source(date, uni);
                } else if (const auto* a = data.alpha.latest_before(date)) {
                    prob.alpha = a->select(uni);
                }
                const auto sol = portfolio::solve_portfolio(prob, snap, config.tolerances);
                rec.status = std::string(qp::to_string(sol.status));
                rec.iterations = sol.iterations;
                rec.kkt_residual = sol.kkt_residual;
                if (sol.status == qp::Status::optimal) target = sol.weights;
            }
        } catch (const Error& e) {
            rec.status = "error";
            rec.message = e.what();
        }

        if (target.size() > 0) {
            rec.predicted_vol = std::sqrt(std::max(0.0, portfolio_variance(snap, target)));
            const Eigen::VectorXd new_w = to_panel(target, uni, returns);
            rec.turnover = (new_w - wp).cwiseAbs().sum();
            wp = new_w;
        } else {
            rec.carried_forward = true;
            if (rec.message.empty()) rec.message = "SolverFailed: previous weights carried forward";
        }
        wb = bench_on_panel(data.benchmark, date, returns);
        rep.rebalances.push_back(rec);
    }

    rep.portfolio_nv = Eigen::Map<const Eigen::VectorXd>(nv_p.data(), static_cast<Eigen::Index>(nv_p.size()));
    rep.benchmark_nv = Eigen::Map<const Eigen::VectorXd>(nv_b.data(), static_cast<Eigen::Index>(nv_b.size()));
    rep.excess_nv = rep.portfolio_nv.cwiseQuotient(rep.benchmark_nv);

    const Eigen::VectorXd erp = Eigen::Map<const Eigen::VectorXd>(rp.data(), static_cast<Eigen::Index>(rp.size()));
    const Eigen::VectorXd erb = Eigen::Map<const Eigen::VectorXd>(rb.data(), static_cast<Eigen::Index>(rb.size()));
    if (erp.size() >= 2) rep.metrics = compute_metrics(ret_dates, erp, erb, config.risk_free);

    // Realized vol of each holding period, scaled to the monthly horizon.
    for (std::size_t k = 0; k < rep.rebalances.size(); ++k) {
        const Date from = rep.rebalances[k].date;
        const Date to = k + 1 < rep.rebalances.size() ? rep.rebalances[k + 1].date : config.end;
        std::vector<double> seg;
        for (std::size_t j = 0; j < ret_dates.size(); ++j)
            if (ret_dates[j] > from && ret_dates[j] <= to) seg.push_back(rp[j]);
        rep.rebalances[k].realized_vol = seg.size() >= 2 ? stats::sample_std(seg) * std::sqrt(21.0) : 0.0;
    }
    return rep;
}

}  // namespace factorrisk::backtest
