#include "factorrisk/exposure_pipeline.hpp"

#include "factorrisk/error.hpp"
#include "factorrisk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace factorrisk::exposure {

namespace {

constexpr const char* kModule = "exposure_pipeline";

}  // namespace

std::vector<OrthogonalizationStep> PipelineConfig::default_plan() {
    return {{"ResidualVolatility", {"Size", "Beta"}}, {"Liquidity", {"Size"}}};
}

std::vector<OrthogonalizationStep> PipelineConfig::default_plan_for(const ExposureTensor& tensor) {
    std::vector<OrthogonalizationStep> plan;
    for (auto& step : default_plan()) {
        bool present = tensor.factor_index(step.target).has_value();
        for (const auto& r : step.regressors) present = present && tensor.factor_index(r).has_value();
        if (present) plan.push_back(std::move(step));
    }
    return plan;
}

void PipelineConfig::validate(const ExposureTensor& tensor) const {
    if (!(mad_multiplier > 0.0)) throw Error(kModule, "InvalidConfig", "mad_multiplier must be positive");
    auto require_style = [&](const std::string& name) {
        auto k = tensor.factor_index(name);
        if (!k) throw Error(kModule, "UnknownFactor", "orthogonalization references an unknown factor", {{"factor", name}});
        if (tensor.kinds[static_cast<std::size_t>(*k)] != FactorKind::style)
            throw Error(kModule, "InvalidConfig", "orthogonalization only applies to style factors", {{"factor", name}});
    };
    for (const auto& step : orthogonalization_plan) {
        require_style(step.target);
        if (step.regressors.empty()) throw Error(kModule, "InvalidConfig", "orthogonalization step has no regressors", {{"factor", step.target}});
        for (const auto& r : step.regressors) {
            require_style(r);
            if (r == step.target) throw Error(kModule, "InvalidConfig", "factor cannot be its own regressor", {{"factor", r}});
        }
    }
}

DepolariseResult depolarise(const Eigen::VectorXd& column, double mad_multiplier) {
    auto valid = stats::valid_values(column);
    if (valid.size() < 2) throw Error(kModule, "InsufficientData", "depolarise needs at least two valid values");
    DepolariseResult out;
    out.median = stats::median(valid);
    for (auto& v : valid) v = std::abs(v - out.median);
    out.mad = stats::median(std::move(valid));
    out.lower = out.median - mad_multiplier * out.mad;
    out.upper = out.median + mad_multiplier * out.mad;
    out.values = column;
    if (out.mad == 0.0) {
        out.degenerate = true;
        return out;
    }
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
        double& v = out.values(i);
        if (std::isfinite(v)) v = std::clamp(v, out.lower, out.upper);
    }
    return out;
}

Eigen::VectorXd fill_missing(const Eigen::VectorXd& column, const std::vector<int>& industry) {
    if (static_cast<Eigen::Index>(industry.size()) != column.size())
        throw Error(kModule, "DimensionMismatch", "industry membership does not match column length");
    const int n_ind = industry.empty() ? 0 : *std::max_element(industry.begin(), industry.end()) + 1;
    std::vector<double> sum(static_cast<std::size_t>(std::max(n_ind, 0)), 0.0);
    std::vector<int> count(sum.size(), 0);
    double total = 0.0;
    int total_count = 0;
    for (Eigen::Index i = 0; i < column.size(); ++i) {
        if (!std::isfinite(column(i))) continue;
        total += column(i);
        ++total_count;
        const int g = industry[static_cast<std::size_t>(i)];
        if (g >= 0) {
            sum[static_cast<std::size_t>(g)] += column(i);
            ++count[static_cast<std::size_t>(g)];
        }
    }
    if (total_count == 0) throw Error(kModule, "AllMissing", "every entry of the column is missing");
    const double fallback = total / total_count;

    Eigen::VectorXd out = column;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (std::isfinite(out(i))) continue;
        const int g = industry[static_cast<std::size_t>(i)];
        const bool has_peer = g >= 0 && count[static_cast<std::size_t>(g)] > 0;
        out(i) = has_peer ? sum[static_cast<std::size_t>(g)] / count[static_cast<std::size_t>(g)] : fallback;
    }
    return out;
}

Eigen::VectorXd standardize(const Eigen::VectorXd& column, StdWeighting weighting, const Eigen::VectorXd& caps) {
    const auto n = column.size();
    if (n < 2 || !column.allFinite()) throw Error(kModule, "InvalidInput", "standardize needs a complete column of length >= 2");
    const double mean = column.mean();
    const double sd = std::sqrt((column.array() - mean).square().sum() / static_cast<double>(n - 1));
    if (!(sd > 1e-12)) throw Error(kModule, "ZeroVariance", "column has zero cross-sectional variance");
    double centre = mean;
    if (weighting == StdWeighting::cap_weighted_mean) {
        if (caps.size() != n) throw Error(kModule, "DimensionMismatch", "caps do not match column length");
        centre = caps.dot(column) / caps.sum();
    }
    Eigen::VectorXd out = (column.array() - centre) / sd;
    if (weighting == StdWeighting::equal) out.array() -= out.mean();  // removes rounding drift of the mean
    return out;
}

OrthogonalizeResult orthogonalize(const Eigen::VectorXd& target, const Eigen::MatrixXd& regressors,
                                  const Eigen::VectorXd& caps) {
    const auto n = target.size();
    if (regressors.rows() != n || caps.size() != n) throw Error(kModule, "DimensionMismatch", "orthogonalize inputs differ in length");
    Eigen::MatrixXd design(n, regressors.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(regressors.cols()) = regressors;
    const Eigen::VectorXd w = caps / caps.sum();

    OrthogonalizeResult out;
    out.coefficients = stats::wls(design, target, w, kModule);
    out.residual = target - design * out.coefficients;
    out.column = standardize(out.residual);
    return out;
}

ExposureTensor run_pipeline(const ExposureTensor& tensor, const Eigen::VectorXd& caps, const PipelineConfig& config,
                            PipelineReport* report) {
    config.validate(tensor);
    if (caps.size() != tensor.values.rows()) throw Error(kModule, "DimensionMismatch", "caps do not match the tensor's universe");
    ExposureTensor out = tensor;
    const auto industry = tensor.industry_membership();
    const auto styles = tensor.columns_of(FactorKind::style);

    for (auto k : styles) {
        const std::string& name = tensor.factors[static_cast<std::size_t>(k)];
        auto dep = depolarise(out.values.col(k), config.mad_multiplier);
        if (dep.degenerate && report) report->warnings.push_back("DegenerateColumn: " + name + " has zero MAD; not clipped");
        const Eigen::VectorXd filled = fill_missing(dep.values, industry);
        try {
            out.values.col(k) = standardize(filled, config.standardization_weighting, caps);
        } catch (Error& e) {
            throw Error(kModule, e.code(), e.message(), {{"factor", name}, {"date", tensor.date.str()}});
        }
    }

    for (const auto& step : config.orthogonalization_plan) {
        const auto target = *tensor.factor_index(step.target);
        Eigen::MatrixXd regs(out.values.rows(), static_cast<Eigen::Index>(step.regressors.size()));
        for (std::size_t j = 0; j < step.regressors.size(); ++j)
            regs.col(static_cast<Eigen::Index>(j)) = out.values.col(*tensor.factor_index(step.regressors[j]));
        try {
            out.values.col(target) = orthogonalize(out.values.col(target), regs, caps).column;
        } catch (Error& e) {
            throw Error(kModule, e.code(), e.message(), {{"factor", step.target}, {"date", tensor.date.str()}});
        }
    }
    return out;
}

}  // namespace factorrisk::exposure
