#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

/// Convex QP  min 1/2 x'Hx + c'x  subject to
///   eq * x = eq_rhs,  ineq * x <= ineq_rhs,  lower <= x <= upper,
/// with H = diag(d) + U U' kept in factored form.
namespace factorrisk::qp {

struct Problem {
    Eigen::VectorXd d;
    /// n x r low-rank factor; may have zero columns.
    Eigen::MatrixXd u;
    Eigen::VectorXd c;
    /// +/-infinity for unbounded sides.
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Eigen::MatrixXd eq;
    Eigen::VectorXd eq_rhs;
    Eigen::MatrixXd ineq;
    Eigen::VectorXd ineq_rhs;
    /// Optional feasible starting point; phase 1 is skipped when it is feasible.
    std::optional<Eigen::VectorXd> start;

    Eigen::Index size() const { return c.size(); }
    Eigen::VectorXd hessian_times(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd dense_hessian() const;
    double objective(const Eigen::VectorXd& x) const;
    /// Largest violation of any constraint at x (0 when feasible).
    double max_violation(const Eigen::VectorXd& x) const;
    /// Throws DimensionMismatch / InvalidBounds.
    void validate() const;
};

struct Tolerances {
    double stationarity = 1e-6;
    double feasibility = 1e-8;
    /// Iteration cap is max_iter_factor * n.
    int max_iter_factor = 10;
};

enum class Status { optimal, max_iter, infeasible };

std::string_view to_string(Status status);

struct Result {
    Eigen::VectorXd x;
    double objective = 0.0;
    Status status = Status::infeasible;
    int iterations = 0;
    double stationarity = 0.0;
    double feasibility = 0.0;
    /// max(stationarity, feasibility, complementarity, dual infeasibility)
    double kkt_residual = 0.0;
    /// "lower[j]", "upper[j]", "ineq[i]" entries of the final working set.
    std::vector<std::string> active;
    Eigen::VectorXd eq_multipliers;
    Eigen::VectorXd ineq_multipliers;
    /// Non-negative multipliers of the bound constraints.
    Eigen::VectorXd lower_multipliers;
    Eigen::VectorXd upper_multipliers;
};

/// Primal active-set method with a phase-1 feasibility LP. Deterministic:
/// ties in constraint selection go to the lowest index (bounds before rows).
Result solve(const Problem& problem, const Tolerances& tol = {});

/// Indices of a maximal linearly independent subset of the rows of `m`
/// (rank-revealing QR), in ascending order.
std::vector<Eigen::Index> independent_rows(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

}  // namespace factorrisk::qp
