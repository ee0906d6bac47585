#pragma once

#include "factorrisk/qp.hpp"
#include "factorrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

/// Portfolio programs over a risk-model snapshot: minimum risk and maximum
/// risk-adjusted return, in holding (absolute) or active (vs benchmark) weights.
namespace factorrisk::portfolio {

enum class Objective { min_risk, max_risk_adjusted };
enum class WeightMode { absolute, active };

std::string_view to_string(Objective o);
std::string_view to_string(WeightMode m);
Objective parse_objective(std::string_view s);
WeightMode parse_weight_mode(std::string_view s);

struct ConstraintSet {
    bool long_only = true;
    double budget = 1.0;
    std::optional<double> per_stock_cap;
    /// Active industry exposures fixed at zero.
    bool industry_neutral = false;
    /// |active exposure to `size_factor`| <= size_band.
    std::optional<double> size_band;
    std::string size_factor = "Size";

    void validate() const;
};

/// Everything except the snapshot; alpha and benchmark are aligned to the snapshot universe.
struct PortfolioProblem {
    Objective objective = Objective::min_risk;
    WeightMode mode = WeightMode::absolute;
    double lambda = 1.0;
    std::optional<Eigen::VectorXd> alpha;
    std::optional<Eigen::VectorXd> benchmark;
    ConstraintSet constraints;
};

struct PortfolioSolution {
    /// Holding weights.
    Eigen::VectorXd weights;
    /// weights - benchmark (empty without a benchmark).
    Eigen::VectorXd active_weights;
    /// Variance for min_risk; r'x - lambda x'Vx for max_risk_adjusted, x in the problem's weight space.
    double objective_value = 0.0;
    double predicted_variance = 0.0;
    double predicted_alpha = 0.0;
    double kkt_residual = 0.0;
    std::vector<std::string> active_constraints;
    int iterations = 0;
    qp::Status status = qp::Status::infeasible;
};

/// Canonical QP in the problem's weight space (active mode solves for w - benchmark).
/// Throws MissingAlpha, MissingBenchmark, DimensionMismatch, InvalidConfig.
qp::Problem build_qp(const PortfolioProblem& problem, const RiskModelSnapshot& snapshot);

PortfolioSolution solve_portfolio(const PortfolioProblem& problem, const RiskModelSnapshot& snapshot,
                                  const qp::Tolerances& tol = {});

/// lambda* = ratio / (2 * target_vol). Throws InvalidArgument when target_vol <= 0.
double lambda_range(double ratio, double target_vol);

}  // namespace factorrisk::portfolio
