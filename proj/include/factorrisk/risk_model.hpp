#pragma once

#include "factorrisk/exposure_pipeline.hpp"
#include "factorrisk/factor_covariance.hpp"
#include "factorrisk/factor_regression.hpp"
#include "factorrisk/idio_variance.hpp"
#include "factorrisk/panel_store.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace factorrisk {

/// One estimation date's model: V = X F X' + diag(delta), never formed densely.
struct RiskModelSnapshot {
    Date date;
    ExposureTensor exposures;
    covariance::CovarianceEstimate factor_cov;
    idio::IdioVarianceVector delta;

    const Universe& universe() const { return exposures.stocks; }

    /// Throws InconsistentSnapshot when orderings disagree.
    void validate() const;
};

/// (X'w)' F (X'w) + sum w_n^2 delta_n. Throws DimensionMismatch.
double portfolio_variance(const RiskModelSnapshot& snapshot, const Eigen::VectorXd& w);

/// V w in factored form.
Eigen::VectorXd covariance_times(const RiskModelSnapshot& snapshot, const Eigen::VectorXd& w);

/// Forecast volatility of every single stock.
Eigen::VectorXd stock_volatilities(const RiskModelSnapshot& snapshot);

/// Dense V, for tests and small problems only.
Eigen::MatrixXd dense_covariance(const RiskModelSnapshot& snapshot);

struct RiskModelConfig {
    exposure::PipelineConfig pipeline;
    /// Use the default orthogonalization plan restricted to the factors present.
    bool default_orthogonalization = true;
    regression::RegressionConfig regression;
    covariance::EwmaConfig factor;
    idio::IdioConfig idio;
};

/// Runs the exposure pipeline on every exposure file and the regression
/// history once, then serves snapshots for any date.
class RiskModelBuilder {
public:
    RiskModelBuilder(const MarketData& data, RiskModelConfig config);

    /// Model available at the start of `date`: every input is dated strictly before it.
    /// Throws InsufficientHistory when no exposures or factor returns precede `date`.
    RiskModelSnapshot snapshot(const Date& date) const;

    const DatedSeries<ExposureTensor>& processed_exposures() const { return processed_; }
    const regression::RegressionHistory& history() const { return history_; }
    const RiskModelConfig& config() const { return config_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    const MarketData& data_;
    RiskModelConfig config_;
    DatedSeries<ExposureTensor> processed_;
    regression::RegressionHistory history_;
    std::vector<std::string> warnings_;
};

/// Processes one raw exposure file against caps for the same universe.
ExposureTensor process_exposures(const ExposureTensor& raw, const StockVector& caps, const RiskModelConfig& config,
                                 std::vector<std::string>* warnings = nullptr);

}  // namespace factorrisk
