#include "factorrisk/risk_model.hpp"

#include "factorrisk/error.hpp"

#include <cmath>

namespace factorrisk {

namespace {

constexpr const char* kModule = "risk_assembly";

void check_weights(const RiskModelSnapshot& s, const Eigen::VectorXd& w) {
    if (w.size() != s.exposures.values.rows())
        throw Error(kModule, "DimensionMismatch", "weight vector does not match the snapshot universe",
                    {{"weights", std::to_string(w.size())}, {"stocks", std::to_string(s.exposures.values.rows())}});
}

}  // namespace

void RiskModelSnapshot::validate() const {
    const auto n = exposures.values.rows();
    const auto k = exposures.values.cols();
    if (factor_cov.matrix.rows() != k || factor_cov.matrix.cols() != k || factor_cov.factors != exposures.factors)
        throw Error(kModule, "InconsistentSnapshot", "factor covariance does not match exposure factors");
    if (delta.variances.size() != n || delta.stocks != exposures.stocks)
        throw Error(kModule, "InconsistentSnapshot", "idio variances do not match exposure stocks");
}

double portfolio_variance(const RiskModelSnapshot& snapshot, const Eigen::VectorXd& w) {
    check_weights(snapshot, w);
    const Eigen::VectorXd xw = snapshot.exposures.values.transpose() * w;
    return xw.dot(snapshot.factor_cov.matrix * xw) + w.cwiseAbs2().dot(snapshot.delta.variances);
}

Eigen::VectorXd covariance_times(const RiskModelSnapshot& snapshot, const Eigen::VectorXd& w) {
    check_weights(snapshot, w);
    const auto& x = snapshot.exposures.values;
    return x * (snapshot.factor_cov.matrix * (x.transpose() * w)) + snapshot.delta.variances.cwiseProduct(w);
}

Eigen::VectorXd stock_volatilities(const RiskModelSnapshot& snapshot) {
    const auto& x = snapshot.exposures.values;
    const Eigen::MatrixXd xf = x * snapshot.factor_cov.matrix;
    Eigen::VectorXd out = (xf.cwiseProduct(x)).rowwise().sum() + snapshot.delta.variances;
    return out.cwiseMax(0.0).cwiseSqrt();
}

Eigen::MatrixXd dense_covariance(const RiskModelSnapshot& snapshot) {
    const auto& x = snapshot.exposures.values;
    Eigen::MatrixXd v = x * snapshot.factor_cov.matrix * x.transpose();
    v.diagonal() += snapshot.delta.variances;
    return v;
}

ExposureTensor process_exposures(const ExposureTensor& raw, const StockVector& caps, const RiskModelConfig& config,
                                 std::vector<std::string>* warnings) {
    const auto aligned = align_universe({raw.stocks, caps.stocks});
    const ExposureTensor x = aligned.stocks == raw.stocks ? raw : raw.restricted_to(aligned.stocks);
    exposure::PipelineConfig pipeline = config.pipeline;
    if (config.default_orthogonalization) pipeline.orthogonalization_plan = exposure::PipelineConfig::default_plan_for(x);
    exposure::PipelineReport report;
    auto out = exposure::run_pipeline(x, caps.select(aligned.stocks), pipeline, &report);
    if (warnings) {
        for (auto& w : report.warnings) warnings->push_back(x.date.str() + ": " + w);
    }
    return out;
}

RiskModelBuilder::RiskModelBuilder(const MarketData& data, RiskModelConfig config)
    : data_(data), config_(std::move(config)) {
    config_.factor.validate();
    config_.idio.validate();
    for (const auto& [date, raw] : data_.exposures) {
        const auto* caps = data_.caps.latest_at_or_before(date);
        if (!caps) throw Error(kModule, "MissingInput", "no caps on or before exposure date", {{"date", date.str()}});
        processed_.insert(date, process_exposures(raw, *caps, config_, &warnings_));
    }
    history_ = regression::run_history(data_.returns, processed_, data_.caps, config_.regression);
}

RiskModelSnapshot RiskModelBuilder::snapshot(const Date& date) const {
    const auto* x = processed_.latest_before(date);
    const auto* caps = data_.caps.latest_before(date);
    if (!x || !caps) throw Error(kModule, "InsufficientHistory", "no exposures or caps before date", {{"date", date.str()}});

    const auto aligned = align_universe({data_.returns.stocks, x->stocks, caps->stocks});
    RiskModelSnapshot s;
    s.date = date;
    s.exposures = aligned.stocks == x->stocks ? *x : x->restricted_to(aligned.stocks);
    s.factor_cov = covariance::estimate_factor_covariance(history_.factor_returns, date, config_.factor);
    s.delta = idio::estimate_idio_variance(history_.idio, date, s.exposures, caps->select(aligned.stocks), config_.idio);
    s.validate();
    return s;
}

}  // namespace factorrisk
