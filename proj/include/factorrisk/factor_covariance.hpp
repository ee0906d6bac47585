#pragma once

#include "factorrisk/factor_regression.hpp"
#include "factorrisk/panel_store.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

/// Exponentially weighted factor covariance with Bartlett-weighted
/// Newey-West lag terms, scaled from daily to monthly horizon.
///
/// Series are chronological: the last element has age 0 and weight 1,
/// an element s days older has weight 0.5^(s / half_life). NaN marks a
/// missing observation and is excluded from both numerator and normalizer.
namespace factorrisk::covariance {

struct EwmaConfig {
    /// Window length h; a window holds the h + 1 most recent observations.
    int window = 252;
    double half_life = 90.0;
    int nw_lags = 2;
    int monthly_scale = 21;
    /// Demean both legs of the lag products with the window's EWMA mean.
    bool demean_autocov = true;

    void validate() const;
};

enum class Stage { raw, newey_west, monthly };

std::string_view to_string(Stage stage);

struct CovarianceEstimate {
    std::vector<std::string> factors;
    Eigen::MatrixXd matrix;
    Stage stage = Stage::raw;
    Date date;
};

double decay_weight(Eigen::Index age, double half_life);

/// Throws EmptySeries when no entry is valid.
double ewma_mean(std::span<const double> series, double half_life);

/// Covariance over jointly valid entries of the last `config.window + 1`
/// observations; both means are taken over those same entries.
/// Throws InsufficientData with fewer than two jointly valid points.
double ewma_cov(std::span<const double> a, std::span<const double> b, const EwmaConfig& config);

/// F_raw over the whole panel (rows = dates, cols = factors).
Eigen::MatrixXd ewma_cov_matrix(const Eigen::MatrixXd& panel, double half_life);

/// Lag-d EWMA cross-product matrix: entry (a, b) is
///   sum_t sqrt(lambda_t * lambda_{t+d}) f_{a,t} f_{b,t+d} / sum_s lambda_s
/// over the whole panel, i.e. the age of t + d discounted by a further half lag.
Eigen::MatrixXd autocov_lag(const Eigen::MatrixXd& panel, int lag, double half_life, bool demean = true);

/// monthly_scale * [F_raw + sum_d (1 - d / (D + 1)) (lag_d + lag_d')], symmetrized.
/// Throws NotPSD when min eigenvalue < -1e-10 * max eigenvalue.
Eigen::MatrixXd newey_west(const Eigen::MatrixXd& f_raw, const std::vector<Eigen::MatrixXd>& lags, int monthly_scale);

/// True when symmetric to 1e-12 (relative) and min eig >= -1e-10 * max eig.
bool is_symmetric_psd(const Eigen::MatrixXd& m);

/// Trailing window of rows strictly before `as_of` (at most window + 1 rows).
Eigen::MatrixXd trailing_window(const std::vector<Date>& dates, const Eigen::MatrixXd& values, const Date& as_of,
                                int window);

/// Monthly factor covariance from factor returns dated strictly before `as_of`.
CovarianceEstimate estimate_factor_covariance(const regression::FactorReturnSeries& series, const Date& as_of,
                                              const EwmaConfig& config);

}  // namespace factorrisk::covariance
