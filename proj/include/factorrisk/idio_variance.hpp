#pragma once

#include "factorrisk/factor_regression.hpp"
#include "factorrisk/panel_store.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

/// Per-stock idiosyncratic variance: EWMA, Newey-West adjustment and a
/// structural (cross-sectional) adjustment for stocks with unreliable history.
namespace factorrisk::idio {

struct IdioConfig {
    int window = 252;
    double half_life = 90.0;
    int nw_lags = 5;
    int monthly_scale = 21;
    /// Floor on the adjusted variance, as a fraction of monthly_scale * lag-0 variance.
    double floor_fraction = 0.25;
    double e0 = 1.05;
    bool structural = true;
    /// Clean stocks required beyond the number of structural regressors.
    int min_clean_extra = 5;

    void validate() const;
};

/// EWMA variance of a chronological series (last element has age 0); NaN entries skipped.
/// Throws InsufficientData with fewer than two valid values.
double idio_ewma_var(std::span<const double> u, double half_life);

struct NeweyWestVar {
    double variance = 0.0;
    double lag0 = 0.0;  ///< daily EWMA variance
    bool floored = false;
};

/// Monthly Newey-West variance of one series; floored at floor_fraction * scale * lag0.
/// Throws InsufficientData when the series has at most D + 1 entries or < 2 valid values.
NeweyWestVar idio_newey_west(std::span<const double> u, const IdioConfig& config);

struct Coordination {
    double gamma = 0.0;
    int h = 0;
    double z = 0.0;
    double sigma = 0.0;
    double robust_sigma = 0.0;
};

/// gamma from the valid-observation count and the ratio of sample std to the
/// interquartile-range std. Degenerate inputs give gamma = 0.
Coordination coordination_gamma(std::span<const double> u);

/// gamma formula on precomputed inputs.
double gamma_from(int h, double z);

struct StructuralFit {
    Eigen::VectorXd sigma_str;
    /// Intercept first, then the regressor columns.
    Eigen::VectorXd coefficients;
    int n_clean = 0;
    bool fallback = false;
};

/// Cap-weighted fit of ln(sigma_ts) on [1, regressors] over stocks with gamma == 1
/// and sigma_ts > 0; prediction scaled by e0 for every stock. With too few clean
/// stocks every prediction is the cap-weighted mean of clean sigma_ts (flagged).
StructuralFit structural_fit(const Eigen::VectorXd& sigma_ts, const Eigen::MatrixXd& regressors,
                             const Eigen::VectorXd& caps, const Eigen::VectorXd& gamma, double e0 = 1.05,
                             int min_clean_extra = 5);

Eigen::VectorXd blend(const Eigen::VectorXd& sigma_ts, const Eigen::VectorXd& sigma_str, const Eigen::VectorXd& gamma);

enum class Stage { time_series, structural };

struct IdioVarianceVector {
    Date date;
    Universe stocks;
    Eigen::VectorXd variances;
    Eigen::VectorXd gamma;
    Eigen::VectorXi h;
    Eigen::VectorXd z;
    Eigen::VectorXd sigma_ts;
    Eigen::VectorXd sigma_str;
    Stage stage = Stage::structural;
    bool structural_fallback = false;
    std::vector<std::string> warnings;
};

/// Final variances from blended vols; zero vols are kept and reported.
IdioVarianceVector assemble_delta(IdioVarianceVector partial, const Eigen::VectorXd& vols);

/// Monthly idio variances for the stocks of `exposures`, using residuals dated
/// strictly before `as_of`. Stocks without enough history get gamma = 0.
IdioVarianceVector estimate_idio_variance(const regression::IdioReturnPanel& idio, const Date& as_of,
                                          const ExposureTensor& exposures, const Eigen::VectorXd& caps,
                                          const IdioConfig& config);

}  // namespace factorrisk::idio
