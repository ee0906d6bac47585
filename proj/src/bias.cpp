#include "factorrisk/bias.hpp"

#include "factorrisk/error.hpp"
#include "factorrisk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace factorrisk::bias {

namespace {

constexpr const char* kModule = "risk_assembly";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double standardized_return(double realized, double forecast_vol) {
    if (!(forecast_vol > 0.0)) throw Error(kModule, "ZeroForecastVol", "forecast volatility must be positive");
    return realized / forecast_vol;
}

double bias_statistic(std::span<const double> b) {
    if (b.size() < 2) throw Error(kModule, "InsufficientWindows", "bias statistic needs at least two windows");
    return stats::sample_std(std::vector<double>(b.begin(), b.end()));
}

double realized_return(const ReturnsPanel& returns, Eigen::Index start, int horizon, Eigen::Index stock) {
    if (start < 0 || start + horizon > returns.values.rows()) return kNaN;
    double growth = 1.0;
    for (Eigen::Index t = start; t < start + horizon; ++t) {
        if (!returns.valid(t, stock)) return kNaN;
        growth *= 1.0 + returns.values(t, stock);
    }
    return growth - 1.0;
}

std::vector<Eigen::Index> window_starts(Eigen::Index first, Eigen::Index step, int count) {
    std::vector<Eigen::Index> out;
    for (int k = 0; k < count; ++k) out.push_back(first + step * k);
    return out;
}

std::vector<BiasWindow> evaluate_windows(const RiskModelBuilder& builder, const ReturnsPanel& returns,
                                         const std::vector<Eigen::Index>& starts, int horizon) {
    std::vector<BiasWindow> out;
    for (auto start : starts) {
        if (start < 0 || start + horizon > returns.values.rows())
            throw Error(kModule, "WindowOutOfRange", "evaluation window exceeds the returns panel",
                        {{"start", std::to_string(start)}});
        const auto snap = builder.snapshot(returns.dates[static_cast<std::size_t>(start)]);
        BiasWindow w;
        w.start = snap.date;
        w.stocks = snap.universe();
        w.forecast_vol = stock_volatilities(snap);
        const auto n = static_cast<Eigen::Index>(w.stocks.size());
        w.realized.resize(n);
        w.b.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto col = returns.stock_index(w.stocks[static_cast<std::size_t>(i)]);
            w.realized(i) = realized_return(returns, start, horizon, static_cast<Eigen::Index>(*col));
            w.b(i) = std::isfinite(w.realized(i)) ? standardized_return(w.realized(i), w.forecast_vol(i)) : kNaN;
        }
        out.push_back(std::move(w));
    }
    return out;
}

std::map<StockId, double> per_stock_bias(const std::vector<BiasWindow>& windows) {
    std::map<StockId, std::vector<double>> series;
    for (const auto& w : windows)
        for (std::size_t i = 0; i < w.stocks.size(); ++i)
            if (std::isfinite(w.b(static_cast<Eigen::Index>(i)))) series[w.stocks[i]].push_back(w.b(static_cast<Eigen::Index>(i)));
    std::map<StockId, double> out;
    for (const auto& [id, b] : series)
        if (b.size() >= 2) out.emplace(id, bias_statistic(b));
    return out;
}

std::vector<int> rank_groups(const Eigen::VectorXd& vols, int groups) {
    const auto n = static_cast<std::size_t>(vols.size());
    if (groups < 1 || n < static_cast<std::size_t>(groups))
        throw Error(kModule, "InsufficientStocks", "fewer stocks than groups",
                    {{"stocks", std::to_string(n)}, {"groups", std::to_string(groups)}});
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return vols(static_cast<Eigen::Index>(a)) < vols(static_cast<Eigen::Index>(b));
    });
    std::vector<int> group(n);
    for (std::size_t r = 0; r < n; ++r) group[order[r]] = static_cast<int>(r * static_cast<std::size_t>(groups) / n);
    return group;
}

std::vector<GroupBias> decile_bias(const std::vector<BiasWindow>& windows, int groups) {
    std::vector<std::vector<double>> pooled(static_cast<std::size_t>(groups));
    for (const auto& w : windows) {
        const auto g = rank_groups(w.forecast_vol, groups);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double b = w.b(static_cast<Eigen::Index>(i));
            if (std::isfinite(b)) pooled[static_cast<std::size_t>(g[i])].push_back(b);
        }
    }
    std::vector<GroupBias> out;
    for (int k = 0; k < groups; ++k) {
        const auto& b = pooled[static_cast<std::size_t>(k)];
        GroupBias gb;
        gb.group = k + 1;
        gb.n_obs = static_cast<int>(b.size());
        gb.mean_bias = b.size() >= 2 ? bias_statistic(b) : kNaN;
        out.push_back(gb);
    }
    return out;
}

double mean_abs_deviation_from_one(const std::vector<double>& values) {
    if (values.empty()) return kNaN;
    double s = 0.0;
    for (double v : values) s += std::abs(v - 1.0);
    return s / static_cast<double>(values.size());
}

}  // namespace factorrisk::bias
