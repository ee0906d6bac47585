#pragma once

#include "factorrisk/panel_store.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

/// Constrained cross-sectional WLS for country, industry and style factor returns.
namespace factorrisk::regression {

enum class WeightScheme { equal, cap, sqrt_cap };

struct RegressionConfig {
    WeightScheme weighting = WeightScheme::sqrt_cap;
    double rank_tol = 1e-10;
};

/// Per-stock regression weights, normalized to sum to one.
Eigen::VectorXd regression_weights(const Eigen::VectorXd& caps, WeightScheme scheme = WeightScheme::sqrt_cap);

struct UnconstrainedFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd residuals;
};

/// Weighted least squares of `returns` on `design` (no country column).
/// Throws Underdetermined (fewer rows than columns) or RankDeficient.
UnconstrainedFit solve_unconstrained(const Eigen::MatrixXd& design, const Eigen::VectorXd& returns,
                                     const Eigen::VectorXd& weights, double rank_tol = 1e-10);

struct CountryRecovery {
    double country = 0.0;
    Eigen::VectorXd industry;
};

/// Country return is the cap-weighted mean of the raw industry returns;
/// industry returns are expressed relative to it so that sum_i w_i f_i = 0.
CountryRecovery recover_country(const Eigen::VectorXd& raw_industry, const Eigen::VectorXd& industry_cap_weights);

struct CrossSection {
    Date date;
    /// In the tensor's factor order; NaN for industries with no members.
    Eigen::VectorXd factor_returns;
    Universe stocks;
    Eigen::VectorXd residuals;
    /// Cap weight of each industry column (tensor industry order); 0 for empty ones.
    Eigen::VectorXd industry_weights;
    double r2 = 0.0;
    std::vector<std::string> dropped_industries;
};

/// One date's regression. `exposures`, `returns` and `caps` share the stock order.
CrossSection run_cross_section(const ExposureTensor& exposures, const Eigen::VectorXd& returns,
                               const Eigen::VectorXd& caps, const RegressionConfig& config = {});

struct FactorReturnSeries {
    std::vector<Date> dates;
    std::vector<std::string> factors;
    std::vector<FactorKind> kinds;
    /// Dates x factors daily returns; NaN where an industry was dropped.
    Eigen::MatrixXd values;
    Eigen::VectorXd r2;
    std::map<Date, std::vector<std::string>> dropped;
};

struct IdioReturnPanel {
    std::vector<Date> dates;
    Universe stocks;
    /// Dates x stocks residuals; NaN outside the regression universe.
    Eigen::MatrixXd values;
    BoolMatrix valid;
};

struct RegressionHistory {
    FactorReturnSeries factor_returns;
    IdioReturnPanel idio;
};

/// Runs a cross-section for every date of the returns panel that has processed
/// exposures and caps dated strictly before it. Stocks enter a date's regression
/// when their return is valid that day.
RegressionHistory run_history(const ReturnsPanel& returns, const DatedSeries<ExposureTensor>& processed_exposures,
                              const DatedSeries<StockVector>& caps, const RegressionConfig& config = {});

}  // namespace factorrisk::regression
