#pragma once

#include "factorrisk/panel_store.hpp"
#include "factorrisk/portfolio.hpp"
#include "factorrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

/// Monthly-rebalance backtest with drifting weights between rebalances.
namespace factorrisk::backtest {

enum class Strategy { optimized, equal_weight, benchmark };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

using AlphaSource = std::function<Eigen::VectorXd(const Date& rebalance, const Universe& universe)>;

struct BacktestConfig {
    Date start;
    Date end;
    Strategy strategy = Strategy::optimized;
    /// Objective, mode, lambda and constraints; alpha and benchmark are filled per rebalance.
    portfolio::PortfolioProblem problem;
    RiskModelConfig model;
    /// Annual risk-free rate used in the Sharpe ratio.
    double risk_free = 0.0;
    /// Overrides the alpha files when set (e.g. oracle experiments).
    AlphaSource alpha_source;
    qp::Tolerances tolerances;

    void validate() const;
};

struct Metrics {
    double ann_return = 0.0;
    double ann_vol = 0.0;
    double sharpe = 0.0;
    double info_ratio = 0.0;
    double tracking_error = 0.0;
    double max_drawdown = 0.0;
    double success_ratio = 0.0;
    bool zero_vol = false;
    bool zero_tracking = false;
    int days = 0;
    int months = 0;
};

struct RebalanceRecord {
    Date date;
    std::string status;
    int iterations = 0;
    double kkt_residual = 0.0;
    double turnover = 0.0;
    double predicted_vol = 0.0;
    /// Monthly-scaled realized volatility over the holding period.
    double realized_vol = 0.0;
    bool carried_forward = false;
    std::string message;
};

struct BacktestReport {
    std::vector<Date> dates;
    Eigen::VectorXd portfolio_nv;
    Eigen::VectorXd benchmark_nv;
    Eigen::VectorXd excess_nv;
    Metrics metrics;
    std::vector<RebalanceRecord> rebalances;
    /// Stock-days whose missing return was treated as zero.
    int zero_filled = 0;
};

/// Trading dates in [start, end] that open a calendar month (relative to the full panel).
std::vector<Date> rebalance_dates(const std::vector<Date>& dates, const Date& start, const Date& end);

/// Realized metrics from daily portfolio and benchmark returns (same length, >= 2).
Metrics compute_metrics(const std::vector<Date>& dates, const Eigen::VectorXd& portfolio_returns,
                        const Eigen::VectorXd& benchmark_returns, double risk_free = 0.0);

double max_drawdown(const Eigen::VectorXd& nv);

/// Benchmark weights on `universe` (absent stocks get 0), renormalized to sum to one.
Eigen::VectorXd benchmark_on(const StockVector& bench, const Universe& universe);

BacktestReport run_backtest(const BacktestConfig& config, const MarketData& data);

/// Same, reusing an existing builder built on `data`.
BacktestReport run_backtest(const BacktestConfig& config, const MarketData& data, const RiskModelBuilder& builder);

}  // namespace factorrisk::backtest
