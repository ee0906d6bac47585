#pragma once

#include "factorrisk/panel_store.hpp"
#include "factorrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <map>
#include <span>
#include <vector>

/// Forecast validation: standardized returns and bias statistics.
namespace factorrisk::bias {

/// r / sigma. Throws ZeroForecastVol when sigma <= 0.
double standardized_return(double realized, double forecast_vol);

/// Sample standard deviation (T - 1) of standardized returns. Throws InsufficientWindows for T < 2.
double bias_statistic(std::span<const double> b);

/// Compounded return of column `stock` over rows [start, start + horizon); NaN if any is missing
/// or the window runs past the panel.
double realized_return(const ReturnsPanel& returns, Eigen::Index start, int horizon, Eigen::Index stock);

/// One evaluation window: forecasts made at `start`, realized over the next `horizon` days.
struct BiasWindow {
    Date start;
    Universe stocks;
    Eigen::VectorXd forecast_vol;
    Eigen::VectorXd realized;
    /// Standardized returns; NaN where the realized return is missing.
    Eigen::VectorXd b;
};

/// Window starts at `first`, `first + step`, ... for `count` windows (row indices of the panel).
std::vector<Eigen::Index> window_starts(Eigen::Index first, Eigen::Index step, int count);

/// Evaluates the builder's snapshot at each start row against realized returns.
std::vector<BiasWindow> evaluate_windows(const RiskModelBuilder& builder, const ReturnsPanel& returns,
                                         const std::vector<Eigen::Index>& starts, int horizon = 21);

/// Per-stock bias statistic over all windows in which the stock has a standardized return.
/// Stocks with fewer than two observations are omitted.
std::map<StockId, double> per_stock_bias(const std::vector<BiasWindow>& windows);

struct GroupBias {
    int group = 0;
    double mean_bias = 0.0;
    int n_obs = 0;
};

/// In every window, stocks are ranked by forecast volatility (ties keep universe
/// order) and split into `groups` equal-count groups; each group's bias statistic
/// is the standard deviation of its pooled standardized returns.
/// Throws InsufficientStocks when a window has fewer stocks than groups.
std::vector<GroupBias> decile_bias(const std::vector<BiasWindow>& windows, int groups = 10);

/// Group index of each position after ranking `vols` ascending (stable).
std::vector<int> rank_groups(const Eigen::VectorXd& vols, int groups);

/// Mean of |B - 1| over a set of bias statistics.
double mean_abs_deviation_from_one(const std::vector<double>& values);

}  // namespace factorrisk::bias
