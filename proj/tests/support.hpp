#pragma once

// Random fixtures and independent brute-force oracles shared by the unit and acceptance tests.
// The oracles deliberately avoid the library's helpers so they can catch its mistakes.

#include "factorrisk/error.hpp"
#include "factorrisk/panel_store.hpp"
#include "factorrisk/qp.hpp"
#include "factorrisk/risk_model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace factorrisk::testing {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform(double a = 0.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(gen_); }
    double normal(double mean = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mean, sd)(gen_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
    bool chance(double p) { return uniform() < p; }

    Eigen::VectorXd normal_vector(Eigen::Index n, double sd = 1.0) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(0.0, sd);
        return v;
    }
    Eigen::MatrixXd normal_matrix(Eigen::Index r, Eigen::Index c, double sd = 1.0) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(0.0, sd);
        return m;
    }
    /// Lognormal market caps.
    Eigen::VectorXd caps(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = std::exp(normal(0.0, 1.0)) * 1e9;
        return v;
    }

private:
    std::mt19937_64 gen_;
};

/// Code of the factorrisk::Error thrown by `f`, or "" when nothing is thrown.
template <class F>
std::string error_code(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("factorrisk_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path write(const std::string& name, const std::string& text) const {
        const auto p = path_ / name;
        std::filesystem::create_directories(p.parent_path());
        std::ofstream(p) << text;
        return p;
    }

private:
    std::filesystem::path path_;
};

inline Universe numbered_stocks(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("T" + std::to_string(10000 + i));
    return make_universe(ids);
}

/// Raw exposure tensor: named styles (heavy tailed, optional NaN mask), one-hot industries
/// with every industry populated when n >= n_ind, and a country column.
inline ExposureTensor random_tensor(Rng& rng, int n, int n_ind, const std::vector<std::string>& styles,
                                    double nan_rate = 0.0, Date date = Date{2020, 1, 31}) {
    ExposureTensor t;
    t.date = date;
    t.stocks = numbered_stocks(n);
    for (const auto& s : styles) {
        t.factors.push_back(s);
        t.kinds.push_back(FactorKind::style);
    }
    for (int i = 0; i < n_ind; ++i) {
        t.factors.push_back("Ind" + std::to_string(i + 1));
        t.kinds.push_back(FactorKind::industry);
    }
    t.factors.emplace_back("Country");
    t.kinds.push_back(FactorKind::country);
    const auto ns = static_cast<Eigen::Index>(styles.size());
    t.values = Eigen::MatrixXd::Zero(n, ns + n_ind + 1);
    for (int r = 0; r < n; ++r) {
        for (Eigen::Index k = 0; k < ns; ++k) {
            // Student-t(3)-like tails so that clipping does something.
            const double chi = (rng.normal() * rng.normal() + rng.normal() * rng.normal() + rng.normal() * rng.normal()) / 3.0;
            t.values(r, k) = rng.normal() / std::sqrt(std::abs(chi) + 0.05);
            if (rng.chance(nan_rate)) t.values(r, k) = kNaN;
        }
        const int g = r < n_ind ? r : rng.integer(0, n_ind - 1);
        t.values(r, ns + g) = 1.0;
        t.values(r, ns + n_ind) = 1.0;
    }
    // Keep at least two valid entries per style column.
    for (Eigen::Index k = 0; k < ns; ++k)
        for (int r = 0; r < std::min(n, 2); ++r)
            if (!std::isfinite(t.values(r, k))) t.values(r, k) = rng.normal();
    return t;
}

/// Random PSD matrix with the given diagonal scale and a common correlation component.
inline Eigen::MatrixXd random_psd(Rng& rng, int k, double scale, double rank_fraction = 1.0) {
    const int r = std::max(1, static_cast<int>(std::lround(rank_fraction * k)));
    const Eigen::MatrixXd a = rng.normal_matrix(k, r);
    Eigen::MatrixXd m = a * a.transpose() / r;
    m = 0.5 * (m + m.transpose());
    return scale * m;
}

/// Small processed-looking snapshot: standardized styles (first is "Size"), industries, country.
inline RiskModelSnapshot random_snapshot(Rng& rng, int n, int n_ind, int n_style) {
    std::vector<std::string> styles;
    for (int k = 0; k < n_style; ++k) styles.push_back(k == 0 ? "Size" : "Style" + std::to_string(k + 1));
    RiskModelSnapshot s;
    s.date = Date{2020, 2, 3};
    s.exposures = random_tensor(rng, n, n_ind, styles);
    for (int k = 0; k < n_style; ++k) s.exposures.values.col(k) = rng.normal_vector(n);
    const auto kf = static_cast<int>(s.exposures.factors.size());
    s.factor_cov.factors = s.exposures.factors;
    s.factor_cov.matrix = random_psd(rng, kf, 1e-3);
    s.factor_cov.stage = covariance::Stage::monthly;
    s.factor_cov.date = s.date;
    s.delta.date = s.date;
    s.delta.stocks = s.exposures.stocks;
    s.delta.variances.resize(n);
    for (int i = 0; i < n; ++i) s.delta.variances(i) = std::pow(rng.uniform(0.03, 0.15), 2);
    return s;
}

/// Dense V = X F X' + diag(delta).
inline Eigen::MatrixXd oracle_dense_v(const RiskModelSnapshot& s) {
    const auto& x = s.exposures.values;
    Eigen::MatrixXd v = x * s.factor_cov.matrix * x.transpose();
    for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, i) += s.delta.variances(i);
    return v;
}

// ---------------------------------------------------------------------------
// Oracles

inline double oracle_median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Clip valid entries to median +/- k * MAD; a zero MAD leaves the column unchanged.
inline Eigen::VectorXd oracle_depolarise(const Eigen::VectorXd& col, double k) {
    std::vector<double> valid;
    for (Eigen::Index i = 0; i < col.size(); ++i)
        if (!std::isnan(col(i))) valid.push_back(col(i));
    const double med = oracle_median(valid);
    std::vector<double> dev;
    for (double v : valid) dev.push_back(std::fabs(v - med));
    const double mad = oracle_median(dev);
    Eigen::VectorXd out = col;
    if (mad == 0.0) return out;
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        if (std::isnan(out(i))) continue;
        if (out(i) < med - k * mad) out(i) = med - k * mad;
        if (out(i) > med + k * mad) out(i) = med + k * mad;
    }
    return out;
}

/// Direct weighted-covariance loop over the last window + 1 observations,
/// jointly valid entries only, weight exp(-ln2 * age / half_life).
inline double oracle_ewma_cov(const std::vector<double>& a, const std::vector<double>& b, int window, double half_life) {
    const std::size_t n = a.size();
    const std::size_t first = n > static_cast<std::size_t>(window) + 1 ? n - window - 1 : 0;
    double sw = 0.0, ma = 0.0, mb = 0.0;
    for (std::size_t t = first; t < n; ++t) {
        if (std::isnan(a[t]) || std::isnan(b[t])) continue;
        const double lam = std::exp(-std::log(2.0) * static_cast<double>(n - 1 - t) / half_life);
        sw += lam;
        ma += lam * a[t];
        mb += lam * b[t];
    }
    ma /= sw;
    mb /= sw;
    double c = 0.0;
    for (std::size_t t = first; t < n; ++t) {
        if (std::isnan(a[t]) || std::isnan(b[t])) continue;
        const double lam = std::exp(-std::log(2.0) * static_cast<double>(n - 1 - t) / half_life);
        c += lam * (a[t] - ma) * (b[t] - mb);
    }
    return c / sw;
}

/// min sum_n w_n (r_n - x_n'f)^2  s.t.  g'f = 0, via the bordered KKT system.
inline Eigen::VectorXd oracle_constrained_wls(const Eigen::MatrixXd& x, const Eigen::VectorXd& r, const Eigen::VectorXd& w,
                                              const Eigen::VectorXd& g) {
    const auto k = x.cols();
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
    kkt.topLeftCorner(k, k) = 2.0 * x.transpose() * w.asDiagonal() * x;
    kkt.block(0, k, k, 1) = g;
    kkt.block(k, 0, 1, k) = g.transpose();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
    rhs.head(k) = 2.0 * x.transpose() * (w.asDiagonal() * r);
    return Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs).head(k);
}

struct EnumerationResult {
    bool feasible = false;
    double objective = kInf;
    Eigen::VectorXd x;
};

/// Exhaustive active-set search for small QPs: every variable is free, at its lower
/// bound or at its upper bound, and every subset of inequality rows is tight. Each
/// candidate minimizes the objective on its affine set; the best feasible one wins.
/// Exact for convex problems whose reduced Hessians are positive definite.
inline EnumerationResult oracle_qp_enumerate(const qp::Problem& p, double feas_tol = 1e-9) {
    const auto n = p.size();
    const Eigen::MatrixXd h = p.dense_hessian();
    const auto m_in = p.ineq.rows();
    EnumerationResult best;

    std::vector<int> state(static_cast<std::size_t>(n), 0);  // 0 free, 1 lower, 2 upper
    auto advance = [&]() {
        for (Eigen::Index j = 0; j < n; ++j) {
            int& s = state[static_cast<std::size_t>(j)];
            do {
                ++s;
            } while (s <= 2 && !std::isfinite(s == 1 ? p.lower(j) : p.upper(j)));
            if (s <= 2) return true;
            s = 0;
        }
        return false;
    };

    do {
        Eigen::VectorXd fixed = Eigen::VectorXd::Zero(n);
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < n; ++j) {
            const int s = state[static_cast<std::size_t>(j)];
            if (s == 0) free.push_back(j);
            else fixed(j) = s == 1 ? p.lower(j) : p.upper(j);
        }
        const auto nf = static_cast<Eigen::Index>(free.size());
        for (long mask = 0; mask < (1L << m_in); ++mask) {
            Eigen::Index rows = p.eq.rows();
            for (Eigen::Index i = 0; i < m_in; ++i)
                if (mask & (1L << i)) ++rows;
            Eigen::MatrixXd a(rows, nf);
            Eigen::VectorXd b(rows);
            Eigen::Index r = 0;
            auto add = [&](const Eigen::RowVectorXd& row, double rhs) {
                for (Eigen::Index c = 0; c < nf; ++c) a(r, c) = row(free[static_cast<std::size_t>(c)]);
                b(r) = rhs - row.dot(fixed);
                ++r;
            };
            for (Eigen::Index i = 0; i < p.eq.rows(); ++i) add(p.eq.row(i), p.eq_rhs(i));
            for (Eigen::Index i = 0; i < m_in; ++i)
                if (mask & (1L << i)) add(p.ineq.row(i), p.ineq_rhs(i));

            Eigen::MatrixXd hf(nf, nf);
            Eigen::VectorXd cf(nf);
            for (Eigen::Index i = 0; i < nf; ++i) {
                const auto gi = free[static_cast<std::size_t>(i)];
                cf(i) = p.c(gi) + h.row(gi).dot(fixed);
                for (Eigen::Index j = 0; j < nf; ++j) hf(i, j) = h(gi, free[static_cast<std::size_t>(j)]);
            }

            Eigen::VectorXd y(nf);
            if (nf == 0) {
                if (rows > 0 && b.cwiseAbs().maxCoeff() > feas_tol) continue;
            } else if (rows == 0) {
                Eigen::LDLT<Eigen::MatrixXd> ldlt(hf);
                if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 1e-12 * (1.0 + hf.norm())) continue;
                y = ldlt.solve(-cf);
            } else {
                Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
                svd.setThreshold(1e-10);
                const auto rank = svd.rank();
                const Eigen::VectorXd xp = svd.solve(b);
                if ((a * xp - b).cwiseAbs().maxCoeff() > feas_tol) continue;
                const Eigen::MatrixXd z = svd.matrixV().rightCols(nf - rank);
                if (z.cols() == 0) {
                    y = xp;
                } else {
                    const Eigen::MatrixXd hz = z.transpose() * hf * z;
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hz);
                    if (es.eigenvalues().minCoeff() <= 1e-12 * (1.0 + hz.norm())) continue;
                    y = xp + z * es.eigenvectors() *
                                 (es.eigenvectors().transpose() * (-(z.transpose() * (hf * xp + cf))))
                                     .cwiseQuotient(es.eigenvalues());
                }
            }
            Eigen::VectorXd x = fixed;
            for (Eigen::Index i = 0; i < nf; ++i) x(free[static_cast<std::size_t>(i)]) = y(i);
            if (p.max_violation(x) > feas_tol) continue;
            const double obj = p.objective(x);
            if (obj < best.objective) {
                best.feasible = true;
                best.objective = obj;
                best.x = x;
            }
        }
    } while (advance());
    return best;
}

}  // namespace factorrisk::testing
