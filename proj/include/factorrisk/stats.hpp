#pragma once

#include <Eigen/Dense>

#include <vector>

namespace factorrisk::stats {

/// Finite entries of `v` (NaN marks a masked cell).
std::vector<double> valid_values(const Eigen::VectorXd& v);

double median(std::vector<double> values);

/// Quantile by linear interpolation between order statistics, q in [0, 1].
double quantile_linear(std::vector<double> values, double q);

double mean(const std::vector<double>& values);

/// Sample standard deviation with the (n - 1) denominator.
double sample_std(const std::vector<double>& values);

/// Weighted least squares of y on the columns of `design` via column-pivoted QR.
///
/// Returns coefficients; throws Error(module, "RankDeficient") when the weighted
/// design has rank below its column count under relative tolerance `rank_tol`.
Eigen::VectorXd wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                    const char* module, double rank_tol = 1e-10);

}  // namespace factorrisk::stats
