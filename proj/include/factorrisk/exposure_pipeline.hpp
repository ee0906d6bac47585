#pragma once

#include "factorrisk/panel_store.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

/// Cross-sectional cleaning of style exposures: MAD clipping, industry-mean
/// fill, z-scoring and cap-weighted orthogonalization.
namespace factorrisk::exposure {

/// Regress `target` on `regressors` (plus an intercept) and keep the residual.
struct OrthogonalizationStep {
    std::string target;
    std::vector<std::string> regressors;
};

enum class StdWeighting { equal, cap_weighted_mean };

struct PipelineConfig {
    double mad_multiplier = 3.0;
    std::vector<OrthogonalizationStep> orthogonalization_plan;
    StdWeighting standardization_weighting = StdWeighting::equal;

    /// Residual Volatility on {Size, Beta}; Liquidity on {Size}.
    static std::vector<OrthogonalizationStep> default_plan();
    /// `default_plan()` restricted to steps whose target and regressors all exist.
    static std::vector<OrthogonalizationStep> default_plan_for(const ExposureTensor& tensor);

    /// Throws InvalidConfig / UnknownFactor against the tensor's factor list.
    void validate(const ExposureTensor& tensor) const;
};

struct DepolariseResult {
    Eigen::VectorXd values;
    double median = 0.0;
    double mad = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    /// MAD was zero: the column is returned unchanged.
    bool degenerate = false;
};

/// Clip valid (finite) entries to median +/- multiplier * MAD. NaN entries pass through.
DepolariseResult depolarise(const Eigen::VectorXd& column, double mad_multiplier = 3.0);

/// Replace NaN entries with the equal-weighted mean of valid same-industry
/// entries; industries with no valid entry fall back to the cross-sectional mean.
/// `industry[n]` is the industry index of stock n.
Eigen::VectorXd fill_missing(const Eigen::VectorXd& column, const std::vector<int>& industry);

/// z-score with the sample (n - 1) standard deviation. `caps` is only used
/// for `StdWeighting::cap_weighted_mean`.
Eigen::VectorXd standardize(const Eigen::VectorXd& column, StdWeighting weighting = StdWeighting::equal,
                            const Eigen::VectorXd& caps = {});

struct OrthogonalizeResult {
    /// WLS residual before re-standardization.
    Eigen::VectorXd residual;
    /// Re-standardized residual; this is the new exposure column.
    Eigen::VectorXd column;
    /// Intercept first, then one coefficient per regressor.
    Eigen::VectorXd coefficients;
};

OrthogonalizeResult orthogonalize(const Eigen::VectorXd& target, const Eigen::MatrixXd& regressors,
                                  const Eigen::VectorXd& caps);

struct PipelineReport {
    std::vector<std::string> warnings;
};

/// Runs the four steps on every style column; industry and country columns are untouched.
ExposureTensor run_pipeline(const ExposureTensor& tensor, const Eigen::VectorXd& caps, const PipelineConfig& config,
                            PipelineReport* report = nullptr);

}  // namespace factorrisk::exposure
