#include "factorrisk/portfolio.hpp"

#include "factorrisk/error.hpp"

#include <cmath>
#include <limits>

namespace factorrisk::portfolio {

namespace {

constexpr const char* kModule = "qp_optimizer";
constexpr double kInf = std::numeric_limits<double>::infinity();

/// R with F = R R' (negative eigenvalues clipped, null directions dropped).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& f) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double cutoff = 1e-14 * std::max(lam.maxCoeff(), 0.0);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (lam(i) > cutoff) keep.push_back(i);
    Eigen::MatrixXd r(f.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k)
        r.col(static_cast<Eigen::Index>(k)) = es.eigenvectors().col(keep[k]) * std::sqrt(lam(keep[k]));
    return r;
}

}  // namespace

std::string_view to_string(Objective o) {
    return o == Objective::min_risk ? "min_risk" : "max_risk_adjusted";
}

std::string_view to_string(WeightMode m) {
    return m == WeightMode::absolute ? "absolute" : "active";
}

Objective parse_objective(std::string_view s) {
    if (s == "min_risk") return Objective::min_risk;
    if (s == "max_risk_adjusted") return Objective::max_risk_adjusted;
    throw Error(kModule, "InvalidConfig", "unknown objective", {{"objective", std::string(s)}});
}

WeightMode parse_weight_mode(std::string_view s) {
    if (s == "absolute") return WeightMode::absolute;
    if (s == "active") return WeightMode::active;
    throw Error(kModule, "InvalidConfig", "unknown weight mode", {{"mode", std::string(s)}});
}

void ConstraintSet::validate() const {
    if (!(budget > 0.0)) throw Error(kModule, "InvalidConfig", "budget must be positive");
    if (per_stock_cap && !(*per_stock_cap > 0.0)) throw Error(kModule, "InvalidConfig", "per_stock_cap must be positive");
    if (size_band && !(*size_band >= 0.0)) throw Error(kModule, "InvalidConfig", "size_band must be non-negative");
}

qp::Problem build_qp(const PortfolioProblem& problem, const RiskModelSnapshot& snapshot) {
    const auto& cs = problem.constraints;
    cs.validate();
    const auto& x = snapshot.exposures.values;
    const auto n = x.rows();
    if (!(problem.lambda >= 0.0)) throw Error(kModule, "InvalidConfig", "lambda must be non-negative");

    const bool max_obj = problem.objective == Objective::max_risk_adjusted;
    if (max_obj && !problem.alpha) throw Error(kModule, "MissingAlpha", "max_risk_adjusted requires an alpha vector");
    if (problem.alpha && problem.alpha->size() != n) throw Error(kModule, "DimensionMismatch", "alpha does not match the universe");
    const bool need_bench = problem.mode == WeightMode::active || cs.industry_neutral || cs.size_band.has_value();
    if (need_bench && !problem.benchmark)
        throw Error(kModule, "MissingBenchmark", "active weights or neutrality constraints require a benchmark");
    if (problem.benchmark && problem.benchmark->size() != n)
        throw Error(kModule, "DimensionMismatch", "benchmark does not match the universe");

    const bool active = problem.mode == WeightMode::active;
    const Eigen::VectorXd bench = problem.benchmark ? *problem.benchmark : Eigen::VectorXd::Zero(n);
    // Holdings are x + shift.
    const Eigen::VectorXd shift = active ? bench : Eigen::VectorXd::Zero(n);

    qp::Problem q;
    const double lam = max_obj ? problem.lambda : 1.0;
    q.d = 2.0 * lam * snapshot.delta.variances;
    q.u = lam > 0.0 ? Eigen::MatrixXd(std::sqrt(2.0 * lam) * (x * psd_factor(snapshot.factor_cov.matrix)))
                    : Eigen::MatrixXd::Zero(n, 0);
    q.c = max_obj ? Eigen::VectorXd(-*problem.alpha) : Eigen::VectorXd::Zero(n);

    q.lower = Eigen::VectorXd::Constant(n, cs.long_only ? 0.0 : -kInf) - shift;
    q.upper = Eigen::VectorXd::Constant(n, cs.per_stock_cap ? *cs.per_stock_cap : kInf) - shift;

    std::vector<Eigen::VectorXd> eq_rows;
    std::vector<double> eq_rhs;
    eq_rows.push_back(Eigen::VectorXd::Ones(n));
    eq_rhs.push_back(cs.budget - shift.sum());
    if (cs.industry_neutral) {
        for (auto k : snapshot.exposures.columns_of(FactorKind::industry)) {
            const Eigen::VectorXd col = x.col(k);
            if (col.sum() == 0.0) continue;
            eq_rows.push_back(col);
            eq_rhs.push_back(col.dot(bench) - col.dot(shift));
        }
    }
    q.eq.resize(static_cast<Eigen::Index>(eq_rows.size()), n);
    q.eq_rhs.resize(static_cast<Eigen::Index>(eq_rows.size()));
    for (std::size_t i = 0; i < eq_rows.size(); ++i) {
        q.eq.row(static_cast<Eigen::Index>(i)) = eq_rows[i].transpose();
        q.eq_rhs(static_cast<Eigen::Index>(i)) = eq_rhs[i];
    }

    q.ineq.resize(0, n);
    q.ineq_rhs.resize(0);
    if (cs.size_band) {
        const auto k = snapshot.exposures.factor_index(cs.size_factor);
        if (!k) throw Error(kModule, "UnknownFactor", "size factor not in exposures", {{"factor", cs.size_factor}});
        const Eigen::VectorXd s = x.col(*k);
        const double centre = s.dot(bench) - s.dot(shift);  // size exposure of the benchmark in x-space
        q.ineq.resize(2, n);
        q.ineq_rhs.resize(2);
        q.ineq.row(0) = s.transpose();
        q.ineq_rhs(0) = *cs.size_band + centre;
        q.ineq.row(1) = -s.transpose();
        q.ineq_rhs(1) = *cs.size_band - centre;
    }

    // Benchmark holdings satisfy every neutrality row; equal weights are the other natural guess.
    if (problem.benchmark) q.start = Eigen::VectorXd(bench * (cs.budget / bench.sum()) - shift);
    else q.start = Eigen::VectorXd::Constant(n, cs.budget / static_cast<double>(n));
    return q;
}

PortfolioSolution solve_portfolio(const PortfolioProblem& problem, const RiskModelSnapshot& snapshot,
                                  const qp::Tolerances& tol) {
    const auto q = build_qp(problem, snapshot);
    const auto r = qp::solve(q, tol);

    PortfolioSolution sol;
    sol.status = r.status;
    sol.iterations = r.iterations;
    sol.kkt_residual = r.kkt_residual;
    sol.active_constraints = r.active;
    if (r.status == qp::Status::infeasible) return sol;

    const bool active = problem.mode == WeightMode::active;
    sol.weights = active ? Eigen::VectorXd(r.x + *problem.benchmark) : r.x;
    if (problem.benchmark) sol.active_weights = sol.weights - *problem.benchmark;
    sol.predicted_variance = portfolio_variance(snapshot, r.x);
    sol.predicted_alpha = problem.alpha ? problem.alpha->dot(r.x) : 0.0;
    sol.objective_value = problem.objective == Objective::min_risk
                              ? sol.predicted_variance
                              : sol.predicted_alpha - problem.lambda * sol.predicted_variance;
    return sol;
}

double lambda_range(double ratio, double target_vol) {
    if (!(target_vol > 0.0)) throw Error(kModule, "InvalidArgument", "target volatility must be positive");
    return ratio / (2.0 * target_vol);
}

}  // namespace factorrisk::portfolio
