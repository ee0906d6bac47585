#include "factorrisk/qp.hpp"

#include "factorrisk/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace factorrisk::qp {

namespace {

constexpr const char* kModule = "qp_optimizer";
constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Bound : signed char { free = 0, lower = -1, upper = 1 };

struct Step {
    Eigen::VectorXd p;  // full length, zero on fixed variables
    bool ray = false;   // zero-curvature descent direction: no natural step length
};

struct Multipliers {
    Eigen::VectorXd eq;     // per working equality row
    Eigen::VectorXd ineq;   // per problem inequality row (0 when inactive)
    Eigen::VectorXd lower;  // per variable
    Eigen::VectorXd upper;
    Eigen::VectorXd stationarity;  // residual of the Lagrangian gradient
};

/// Active-set iterations from a feasible point. Equality rows must be independent.
class ActiveSet {
public:
    ActiveSet(const Problem& p, std::vector<Eigen::Index> eq_rows, Eigen::VectorXd x)
        : p_(p), eq_rows_(std::move(eq_rows)), x_(std::move(x)), state_(p.size(), Bound::free),
          ineq_active_(static_cast<std::size_t>(p.ineq.rows()), false) {}

    Status run(int max_iter, double dual_tol) {
        for (iterations_ = 0; iterations_ < max_iter; ++iterations_) {
            const Eigen::VectorXd g = p_.hessian_times(x_) + p_.c;
            const Step step = compute_step(g);
            const double xscale = 1.0 + x_.cwiseAbs().maxCoeff();
            if (!step.ray && step.p.cwiseAbs().maxCoeff() <= 1e-12 * xscale) {
                mult_ = multipliers(g);
                if (!drop_most_negative(dual_tol)) return Status::optimal;
                continue;
            }
            take_step(step);
        }
        mult_ = multipliers(p_.hessian_times(x_) + p_.c);
        return Status::max_iter;
    }

    const Eigen::VectorXd& x() const { return x_; }
    int iterations() const { return iterations_; }
    const Multipliers& mult() const { return mult_; }
    const std::vector<Bound>& state() const { return state_; }
    const std::vector<bool>& ineq_active() const { return ineq_active_; }
    const std::vector<Eigen::Index>& eq_rows() const { return eq_rows_; }

private:
    std::vector<Eigen::Index> free_vars() const {
        std::vector<Eigen::Index> f;
        for (Eigen::Index j = 0; j < p_.size(); ++j)
            if (state_[static_cast<std::size_t>(j)] == Bound::free) f.push_back(j);
        return f;
    }

    /// Working rows (equalities then active inequalities) over all columns.
    Eigen::MatrixXd working_rows() const {
        std::vector<Eigen::Index> in;
        for (std::size_t i = 0; i < ineq_active_.size(); ++i)
            if (ineq_active_[i]) in.push_back(static_cast<Eigen::Index>(i));
        Eigen::MatrixXd a(static_cast<Eigen::Index>(eq_rows_.size() + in.size()), p_.size());
        Eigen::Index r = 0;
        for (auto i : eq_rows_) a.row(r++) = p_.eq.row(i);
        for (auto i : in) a.row(r++) = p_.ineq.row(i);
        return a;
    }

    static Eigen::MatrixXd columns(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
        Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
        return out;
    }

    static Eigen::MatrixXd rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
        for (std::size_t j = 0; j < idx.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = m.row(idx[j]);
        return out;
    }

    Step compute_step(const Eigen::VectorXd& g) const {
        Step s;
        s.p = Eigen::VectorXd::Zero(p_.size());
        const auto free = free_vars();
        const auto nf = static_cast<Eigen::Index>(free.size());
        if (nf == 0) return s;
        const Eigen::MatrixXd a = columns(working_rows(), free);
        const auto m = a.rows();
        if (m >= nf) return s;

        Eigen::VectorXd gf(nf), df(nf);
        for (Eigen::Index j = 0; j < nf; ++j) {
            gf(j) = g(free[static_cast<std::size_t>(j)]);
            df(j) = p_.d(free[static_cast<std::size_t>(j)]);
        }
        const Eigen::MatrixXd uf = rows(p_.u, free);

        Eigen::VectorXd pf;
        bool done = false;
        if (df.size() > 0 && df.minCoeff() > 0.0 && df.minCoeff() >= 1e-12 * df.maxCoeff()) {
            done = range_space_step(a, gf, df, uf, pf);
        }
        if (!done) s.ray = null_space_step(a, gf, df, uf, pf);
        for (Eigen::Index j = 0; j < nf; ++j) s.p(free[static_cast<std::size_t>(j)]) = pf(j);
        return s;
    }

    // H_FF = diag(df) + uf uf' is positive definite: invert it with Woodbury.
    static bool range_space_step(const Eigen::MatrixXd& a, const Eigen::VectorXd& gf, const Eigen::VectorXd& df,
                                 const Eigen::MatrixXd& uf, Eigen::VectorXd& pf) {
        const Eigen::VectorXd dinv = df.cwiseInverse();
        Eigen::LLT<Eigen::MatrixXd> small;
        if (uf.cols() > 0) {
            Eigen::MatrixXd core = Eigen::MatrixXd::Identity(uf.cols(), uf.cols());
            core.noalias() += uf.transpose() * dinv.asDiagonal() * uf;
            small.compute(core);
            if (small.info() != Eigen::Success) return false;
        }
        auto hinv = [&](const Eigen::MatrixXd& v) -> Eigen::MatrixXd {
            Eigen::MatrixXd y = dinv.asDiagonal() * v;
            if (uf.cols() > 0) y -= dinv.asDiagonal() * (uf * small.solve(uf.transpose() * y));
            return y;
        };
        const Eigen::VectorXd h = hinv(gf);
        if (a.rows() == 0) {
            pf = -h;
            return true;
        }
        const Eigen::MatrixXd y = hinv(a.transpose());
        const Eigen::MatrixXd schur = a * y;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(schur);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) return false;
        const Eigen::VectorXd mu = ldlt.solve(-(a * h));
        pf = -(h + y * mu);
        return pf.allFinite();
    }

    // Dense reduced-Hessian step; returns true when the step is a zero-curvature ray.
    static bool null_space_step(const Eigen::MatrixXd& a, const Eigen::VectorXd& gf, const Eigen::VectorXd& df,
                                const Eigen::MatrixXd& uf, Eigen::VectorXd& pf) {
        const auto nf = gf.size();
        const auto m = a.rows();
        Eigen::MatrixXd z;
        if (m == 0) {
            z = Eigen::MatrixXd::Identity(nf, nf);
        } else {
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(a.transpose());
            const Eigen::MatrixXd q = qr.householderQ();
            z = q.rightCols(nf - m);
        }
        Eigen::MatrixXd hz = df.asDiagonal() * z;
        if (uf.cols() > 0) hz.noalias() += uf * (uf.transpose() * z);
        Eigen::MatrixXd hr = z.transpose() * hz;
        hr = 0.5 * (hr + hr.transpose());
        const Eigen::VectorXd gz = z.transpose() * gf;

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hr);
        const Eigen::VectorXd& lam = es.eigenvalues();
        const Eigen::MatrixXd& v = es.eigenvectors();
        const double cutoff = 1e-10 * std::max(lam.maxCoeff(), 0.0) + 1e-300;
        const Eigen::VectorXd q = v.transpose() * gz;

        Eigen::VectorXd ray = Eigen::VectorXd::Zero(q.size());
        for (Eigen::Index i = 0; i < q.size(); ++i)
            if (lam(i) <= cutoff) ray(i) = q(i);
        const double gscale = 1.0 + gf.cwiseAbs().maxCoeff();
        if (ray.norm() > 1e-11 * gscale) {
            pf = -(z * (v * ray));
            return true;
        }
        Eigen::VectorXd pz = Eigen::VectorXd::Zero(q.size());
        for (Eigen::Index i = 0; i < q.size(); ++i)
            if (lam(i) > cutoff) pz(i) = -q(i) / lam(i);
        pf = z * (v * pz);
        return false;
    }

    void take_step(const Step& step) {
        const auto n = p_.size();
        double alpha = step.ray ? kInf : 1.0;
        Eigen::Index block = -1;  // variable j, or n + inequality row
        Bound block_side = Bound::free;

        for (Eigen::Index j = 0; j < n; ++j) {
            if (state_[static_cast<std::size_t>(j)] != Bound::free) continue;
            const double pj = step.p(j);
            if (pj < 0.0 && std::isfinite(p_.lower(j))) {
                const double r = std::max(0.0, (p_.lower(j) - x_(j)) / pj);
                if (r < alpha) {
                    alpha = r;
                    block = j;
                    block_side = Bound::lower;
                }
            } else if (pj > 0.0 && std::isfinite(p_.upper(j))) {
                const double r = std::max(0.0, (p_.upper(j) - x_(j)) / pj);
                if (r < alpha) {
                    alpha = r;
                    block = j;
                    block_side = Bound::upper;
                }
            }
        }
        const double pscale = step.p.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < p_.ineq.rows(); ++i) {
            if (ineq_active_[static_cast<std::size_t>(i)]) continue;
            const double ap = p_.ineq.row(i).dot(step.p);
            if (ap <= 1e-14 * (1.0 + pscale)) continue;
            const double r = std::max(0.0, (p_.ineq_rhs(i) - p_.ineq.row(i).dot(x_)) / ap);
            if (r < alpha) {
                alpha = r;
                block = n + i;
            }
        }
        if (!std::isfinite(alpha)) throw Error(kModule, "Unbounded", "objective is unbounded below on the feasible set");

        x_ += alpha * step.p;
        if (block < 0) return;
        if (block < n) {
            state_[static_cast<std::size_t>(block)] = block_side;
            x_(block) = block_side == Bound::lower ? p_.lower(block) : p_.upper(block);
        } else {
            ineq_active_[static_cast<std::size_t>(block - n)] = true;
        }
    }

    Multipliers multipliers(const Eigen::VectorXd& g) const {
        const auto n = p_.size();
        Multipliers mu;
        mu.eq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(eq_rows_.size()));
        mu.ineq = Eigen::VectorXd::Zero(p_.ineq.rows());
        mu.lower = Eigen::VectorXd::Zero(n);
        mu.upper = Eigen::VectorXd::Zero(n);

        const auto free = free_vars();
        const Eigen::MatrixXd aw = working_rows();
        Eigen::VectorXd lam = Eigen::VectorXd::Zero(aw.rows());
        if (aw.rows() > 0 && !free.empty()) {
            const Eigen::MatrixXd a = columns(aw, free);
            Eigen::VectorXd gf(static_cast<Eigen::Index>(free.size()));
            for (std::size_t j = 0; j < free.size(); ++j) gf(static_cast<Eigen::Index>(j)) = g(free[j]);
            lam = a.transpose().colPivHouseholderQr().solve(-gf);
        }
        const Eigen::VectorXd r = g + aw.transpose() * lam;  // fixed components carry bound multipliers
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto st = state_[static_cast<std::size_t>(j)];
            if (st == Bound::lower) mu.lower(j) = r(j);
            else if (st == Bound::upper) mu.upper(j) = -r(j);
        }
        mu.stationarity = r;
        for (Eigen::Index j = 0; j < n; ++j)
            if (state_[static_cast<std::size_t>(j)] != Bound::free) mu.stationarity(j) = 0.0;

        Eigen::Index k = 0;
        for (; k < static_cast<Eigen::Index>(eq_rows_.size()); ++k) mu.eq(k) = lam(k);
        for (std::size_t i = 0; i < ineq_active_.size(); ++i)
            if (ineq_active_[i]) mu.ineq(static_cast<Eigen::Index>(i)) = lam(k++);
        return mu;
    }

    /// Releases the constraint with the most negative multiplier; false when none is below -tol.
    bool drop_most_negative(double tol) {
        const auto n = p_.size();
        double worst = -tol;
        Eigen::Index which = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto st = state_[static_cast<std::size_t>(j)];
            const double v = st == Bound::lower ? mult_.lower(j) : st == Bound::upper ? mult_.upper(j) : 0.0;
            if (st != Bound::free && v < worst) {
                worst = v;
                which = j;
            }
        }
        for (Eigen::Index i = 0; i < p_.ineq.rows(); ++i) {
            if (ineq_active_[static_cast<std::size_t>(i)] && mult_.ineq(i) < worst) {
                worst = mult_.ineq(i);
                which = n + i;
            }
        }
        if (which < 0) return false;
        if (which < n) state_[static_cast<std::size_t>(which)] = Bound::free;
        else ineq_active_[static_cast<std::size_t>(which - n)] = false;
        return true;
    }

    const Problem& p_;
    std::vector<Eigen::Index> eq_rows_;
    Eigen::VectorXd x_;
    std::vector<Bound> state_;
    std::vector<bool> ineq_active_;
    Multipliers mult_;
    int iterations_ = 0;
};

double dual_tolerance(const Problem& p) {
    return 1e-10 * (1.0 + p.c.cwiseAbs().maxCoeff());
}

/// Feasible point via an LP that minimizes the sum of artificial variables.
std::optional<Eigen::VectorXd> phase_one(const Problem& p, const Tolerances& tol, int* iterations) {
    const auto n = p.size();
    const auto me = p.eq.rows();
    const auto mi = p.ineq.rows();

    Eigen::VectorXd x0(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        x0(j) = 0.0;
        if (std::isfinite(p.lower(j)) && x0(j) < p.lower(j)) x0(j) = p.lower(j);
        if (std::isfinite(p.upper(j)) && x0(j) > p.upper(j)) x0(j) = p.upper(j);
    }
    if (p.max_violation(x0) <= tol.feasibility) return x0;

    const Eigen::VectorXd req = me > 0 ? Eigen::VectorXd(p.eq_rhs - p.eq * x0) : Eigen::VectorXd();
    const Eigen::VectorXd vin = mi > 0 ? Eigen::VectorXd(p.ineq * x0 - p.ineq_rhs) : Eigen::VectorXd();

    Problem lp;
    const auto nt = n + me + mi;
    lp.d = Eigen::VectorXd::Zero(nt);
    lp.u = Eigen::MatrixXd::Zero(nt, 0);
    lp.c = Eigen::VectorXd::Zero(nt);
    lp.c.tail(me + mi).setOnes();
    lp.lower = Eigen::VectorXd::Zero(nt);
    lp.upper = Eigen::VectorXd::Constant(nt, kInf);
    lp.lower.head(n) = p.lower;
    lp.upper.head(n) = p.upper;
    lp.eq = Eigen::MatrixXd::Zero(me, nt);
    lp.eq.leftCols(n) = p.eq;
    lp.eq_rhs = p.eq_rhs;
    lp.ineq = Eigen::MatrixXd::Zero(mi, nt);
    lp.ineq.leftCols(n) = p.ineq;
    lp.ineq_rhs = p.ineq_rhs;

    Eigen::VectorXd start(nt);
    start.head(n) = x0;
    for (Eigen::Index i = 0; i < me; ++i) {
        lp.eq(i, n + i) = req(i) >= 0.0 ? 1.0 : -1.0;
        start(n + i) = std::abs(req(i));
    }
    for (Eigen::Index i = 0; i < mi; ++i) {
        lp.ineq(i, n + me + i) = -1.0;
        start(n + me + i) = std::max(0.0, vin(i));
    }

    std::vector<Eigen::Index> all_eq(static_cast<std::size_t>(me));
    for (Eigen::Index i = 0; i < me; ++i) all_eq[static_cast<std::size_t>(i)] = i;
    ActiveSet solver(lp, all_eq, start);
    solver.run(tol.max_iter_factor * static_cast<int>(nt) + 10, dual_tolerance(lp));
    *iterations = solver.iterations();
    const Eigen::VectorXd x = solver.x().head(n);
    if (p.max_violation(x) > tol.feasibility) return std::nullopt;
    return x;
}

}  // namespace

std::string_view to_string(Status status) {
    switch (status) {
        case Status::optimal: return "optimal";
        case Status::max_iter: return "max_iter";
        case Status::infeasible: return "infeasible";
    }
    return "infeasible";
}

Eigen::VectorXd Problem::hessian_times(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out = d.cwiseProduct(x);
    if (u.cols() > 0) out.noalias() += u * (u.transpose() * x);
    return out;
}

Eigen::MatrixXd Problem::dense_hessian() const {
    Eigen::MatrixXd h = u * u.transpose();
    h.diagonal() += d;
    return h;
}

double Problem::objective(const Eigen::VectorXd& x) const {
    return 0.5 * x.dot(hessian_times(x)) + c.dot(x);
}

double Problem::max_violation(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (std::isfinite(lower(j))) v = std::max(v, lower(j) - x(j));
        if (std::isfinite(upper(j))) v = std::max(v, x(j) - upper(j));
    }
    if (eq.rows() > 0) v = std::max(v, (eq * x - eq_rhs).cwiseAbs().maxCoeff());
    if (ineq.rows() > 0) v = std::max(v, (ineq * x - ineq_rhs).maxCoeff());
    return v;
}

void Problem::validate() const {
    const auto n = c.size();
    if (d.size() != n || u.rows() != n || lower.size() != n || upper.size() != n)
        throw Error(kModule, "DimensionMismatch", "objective and bound sizes differ");
    if (eq.cols() != n && eq.rows() > 0) throw Error(kModule, "DimensionMismatch", "equality rows have the wrong width");
    if (ineq.cols() != n && ineq.rows() > 0) throw Error(kModule, "DimensionMismatch", "inequality rows have the wrong width");
    if (eq.rows() != eq_rhs.size() || ineq.rows() != ineq_rhs.size())
        throw Error(kModule, "DimensionMismatch", "constraint right-hand sides have the wrong length");
    if ((d.array() < 0.0).any()) throw Error(kModule, "NotConvex", "diagonal Hessian part must be non-negative");
    for (Eigen::Index j = 0; j < n; ++j)
        if (lower(j) > upper(j)) throw Error(kModule, "InvalidBounds", "lower bound exceeds upper bound", {{"index", std::to_string(j)}});
    if (start && start->size() != n) throw Error(kModule, "DimensionMismatch", "start point has the wrong length");
}

std::vector<Eigen::Index> independent_rows(const Eigen::MatrixXd& m, double rel_tol) {
    std::vector<Eigen::Index> out;
    if (m.rows() == 0) return out;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.transpose());
    qr.setThreshold(rel_tol);
    const auto rank = qr.rank();
    for (Eigen::Index i = 0; i < rank; ++i) out.push_back(qr.colsPermutation().indices()(i));
    std::sort(out.begin(), out.end());
    return out;
}

Result solve(const Problem& problem, const Tolerances& tol) {
    problem.validate();
    const auto n = problem.size();
    Result res;
    res.eq_multipliers = Eigen::VectorXd::Zero(problem.eq.rows());
    res.ineq_multipliers = Eigen::VectorXd::Zero(problem.ineq.rows());
    res.lower_multipliers = Eigen::VectorXd::Zero(n);
    res.upper_multipliers = Eigen::VectorXd::Zero(n);

    int p1_iters = 0;
    std::optional<Eigen::VectorXd> start;
    if (problem.start && problem.max_violation(*problem.start) <= tol.feasibility) start = problem.start;
    else start = phase_one(problem, tol, &p1_iters);
    if (!start) {
        res.status = Status::infeasible;
        res.iterations = p1_iters;
        res.x = Eigen::VectorXd::Zero(n);
        return res;
    }

    auto eq_rows = independent_rows(problem.eq);
    ActiveSet solver(problem, eq_rows, *start);
    res.status = solver.run(tol.max_iter_factor * static_cast<int>(std::max<Eigen::Index>(n, 1)), dual_tolerance(problem));
    res.iterations = p1_iters + solver.iterations();
    res.x = solver.x();
    res.objective = problem.objective(res.x);

    const auto& mu = solver.mult();
    for (std::size_t k = 0; k < eq_rows.size(); ++k) res.eq_multipliers(eq_rows[k]) = mu.eq(static_cast<Eigen::Index>(k));
    res.ineq_multipliers = mu.ineq;
    res.lower_multipliers = mu.lower;
    res.upper_multipliers = mu.upper;

    for (Eigen::Index j = 0; j < n; ++j) {
        const auto st = solver.state()[static_cast<std::size_t>(j)];
        if (st == Bound::lower) res.active.push_back("lower[" + std::to_string(j) + "]");
        else if (st == Bound::upper) res.active.push_back("upper[" + std::to_string(j) + "]");
    }
    for (std::size_t i = 0; i < solver.ineq_active().size(); ++i)
        if (solver.ineq_active()[i]) res.active.push_back("ineq[" + std::to_string(i) + "]");

    res.stationarity = mu.stationarity.size() > 0 ? mu.stationarity.cwiseAbs().maxCoeff() : 0.0;
    res.feasibility = problem.max_violation(res.x);
    double dual = 0.0, comp = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        dual = std::max({dual, -mu.lower(j), -mu.upper(j)});
        if (mu.lower(j) != 0.0) comp = std::max(comp, std::abs(mu.lower(j) * (res.x(j) - problem.lower(j))));
        if (mu.upper(j) != 0.0) comp = std::max(comp, std::abs(mu.upper(j) * (problem.upper(j) - res.x(j))));
    }
    for (Eigen::Index i = 0; i < problem.ineq.rows(); ++i) {
        dual = std::max(dual, -mu.ineq(i));
        if (mu.ineq(i) != 0.0)
            comp = std::max(comp, std::abs(mu.ineq(i) * (problem.ineq_rhs(i) - problem.ineq.row(i).dot(res.x))));
    }
    res.kkt_residual = std::max({res.stationarity, res.feasibility, dual, comp});
    return res;
}

}  // namespace factorrisk::qp
