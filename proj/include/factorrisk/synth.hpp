#pragma once

#include "factorrisk/panel_store.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

/// Seeded synthetic market drawn from a known factor model, with optional
/// missing-return runs and outliers for exercising the cleaning steps.
namespace factorrisk::synth {

struct SyntheticMarketSpec {
    int n_stocks = 200;
    int n_style = 10;
    int n_industries = 29;
    int n_days = 600;
    std::uint64_t seed = 1;
    Date start = Date{2018, 1, 2};

    // Daily factor volatilities and factor-return dynamics.
    double country_vol = 0.01;
    double industry_vol = 0.005;
    double style_vol = 0.003;
    /// Strength of the common component in the random factor correlation.
    double factor_correlation = 0.3;
    /// Correlation of the Beta style factor (second style) with the country factor.
    double beta_market_correlation = 0.7;
    /// MA(1) coefficient of factor returns.
    double ma_theta = 0.1;

    // Daily idiosyncratic volatility: log-linear in exposures plus noise, clipped.
    double idio_median = 0.02;
    double idio_dispersion = 0.3;
    double idio_min = 0.005;
    double idio_max = 0.08;

    /// Month-to-month AR(1) persistence of the latent style exposures.
    double exposure_persistence = 0.97;
    /// Cross-sectional std of the monthly expected return and of the forecast noise.
    double alpha_scale = 0.005;
    double alpha_noise = 0.005;

    // Defects on a random subset of stocks, confined to days [defect_start, defect_end).
    double defect_fraction = 0.0;
    int missing_run_min = 20;
    int missing_run_max = 60;
    double outlier_rate = 0.0;
    /// Outlier size in multiples of the stock's idio volatility.
    double outlier_magnitude = 12.0;
    int defect_start = 0;
    /// -1 means n_days.
    int defect_end = -1;

    /// Throws InvalidSpec.
    void validate() const;
};

struct GroundTruth {
    std::vector<std::string> factors;
    std::vector<FactorKind> kinds;
    /// Unconditional daily covariance of the generated factor returns.
    Eigen::MatrixXd factor_cov_daily;
    /// Daily idio volatility per stock.
    Eigen::VectorXd idio_vol;
    /// Dates x factors generated factor returns.
    Eigen::MatrixXd factor_returns;
    Universe defective;
};

struct SyntheticMarket {
    MarketData data;
    GroundTruth truth;
};

std::vector<std::string> style_names(int n_style);

/// Business days (Mon-Fri) starting at `start` (rolled forward to a weekday).
std::vector<Date> business_days(Date start, int count);

SyntheticMarket generate(const SyntheticMarketSpec& spec);

/// Writes the data directory layout read by `load_data_dir` plus a `truth/` folder.
void write_market(const std::filesystem::path& dir, const SyntheticMarket& market);

}  // namespace factorrisk::synth
