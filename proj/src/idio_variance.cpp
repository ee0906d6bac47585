#include "factorrisk/idio_variance.hpp"

#include "factorrisk/error.hpp"
#include "factorrisk/factor_covariance.hpp"
#include "factorrisk/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace factorrisk::idio {

namespace {

constexpr const char* kModule = "idio_variance";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct WeightedMoments {
    double mean = 0.0;
    double var = 0.0;
    int count = 0;
};

WeightedMoments ewma_moments(std::span<const double> u, const std::vector<double>& w) {
    WeightedMoments m;
    double sw = 0.0, s1 = 0.0;
    for (std::size_t t = 0; t < u.size(); ++t) {
        if (!std::isfinite(u[t])) continue;
        sw += w[t];
        s1 += w[t] * u[t];
        ++m.count;
    }
    if (m.count < 2) return m;
    m.mean = s1 / sw;
    double acc = 0.0;
    for (std::size_t t = 0; t < u.size(); ++t)
        if (std::isfinite(u[t])) acc += w[t] * (u[t] - m.mean) * (u[t] - m.mean);
    m.var = acc / sw;
    return m;
}

std::vector<double> weights_for(std::size_t n, double half_life) {
    std::vector<double> w(n);
    for (std::size_t t = 0; t < n; ++t) w[t] = covariance::decay_weight(static_cast<Eigen::Index>(n - 1 - t), half_life);
    return w;
}

}  // namespace

void IdioConfig::validate() const {
    if (window < 2) throw Error(kModule, "InvalidConfig", "window must be >= 2");
    if (!(half_life > 0.0)) throw Error(kModule, "InvalidConfig", "half_life must be positive");
    if (nw_lags < 0 || nw_lags >= window) throw Error(kModule, "InvalidConfig", "nw_lags must satisfy 0 <= D < window");
    if (monthly_scale < 1) throw Error(kModule, "InvalidConfig", "monthly_scale must be >= 1");
    if (floor_fraction < 0.0 || floor_fraction > 1.0) throw Error(kModule, "InvalidConfig", "floor_fraction must lie in [0, 1]");
    if (!(e0 > 0.0)) throw Error(kModule, "InvalidConfig", "e0 must be positive");
    if (min_clean_extra < 0) throw Error(kModule, "InvalidConfig", "min_clean_extra must be >= 0");
}

double idio_ewma_var(std::span<const double> u, double half_life) {
    const auto m = ewma_moments(u, weights_for(u.size(), half_life));
    if (m.count < 2) throw Error(kModule, "InsufficientData", "EWMA variance needs two valid observations");
    return m.var;
}

NeweyWestVar idio_newey_west(std::span<const double> u, const IdioConfig& config) {
    const std::size_t n = u.size();
    const auto lags = static_cast<std::size_t>(config.nw_lags);
    if (n <= lags + 1) throw Error(kModule, "InsufficientData", "series too short for the Newey-West lags");
    const auto w = weights_for(n, config.half_life);
    const auto m = ewma_moments(u, w);
    if (m.count < 2) throw Error(kModule, "InsufficientData", "Newey-West variance needs two valid observations");

    // Same pair weighting as the factor lags: sqrt(lambda_t * lambda_{t+d}) over the lag-0
    // normalizer, so missing days act as zeros and the Bartlett sum cannot go negative.
    double den = 0.0;
    for (std::size_t t = 0; t < n; ++t)
        if (std::isfinite(u[t])) den += w[t];
    double omega = m.var;
    for (std::size_t d = 1; d <= lags; ++d) {
        double num = 0.0;
        for (std::size_t t = 0; t + d < n; ++t) {
            if (!std::isfinite(u[t]) || !std::isfinite(u[t + d])) continue;
            num += std::sqrt(w[t] * w[t + d]) * (u[t] - m.mean) * (u[t + d] - m.mean);
        }
        const double lag_cov = num / den;
        const double bartlett = 1.0 - static_cast<double>(d) / static_cast<double>(lags + 1);
        omega += 2.0 * bartlett * lag_cov;
    }

    NeweyWestVar out;
    out.lag0 = m.var;
    out.variance = config.monthly_scale * omega;
    const double floor = config.floor_fraction * config.monthly_scale * m.var;
    if (out.variance < floor) {
        out.variance = floor;
        out.floored = true;
    }
    return out;
}

double gamma_from(int h, double z) {
    if (!std::isfinite(z)) return 0.0;
    const double v = std::clamp((static_cast<double>(h) - 60.0) / 120.0, 0.0, 1.0);
    return v * std::min(1.0, std::exp(1.0 - z));
}

Coordination coordination_gamma(std::span<const double> u) {
    Coordination c;
    std::vector<double> valid;
    valid.reserve(u.size());
    for (double x : u)
        if (std::isfinite(x)) valid.push_back(x);
    c.h = static_cast<int>(valid.size());
    if (c.h < 2) {
        c.z = kNaN;
        return c;
    }
    c.sigma = stats::sample_std(valid);
    c.robust_sigma = (stats::quantile_linear(valid, 0.75) - stats::quantile_linear(valid, 0.25)) / 1.35;
    if (!(c.robust_sigma > 0.0)) {
        c.z = std::numeric_limits<double>::infinity();
        return c;
    }
    c.z = std::abs((c.sigma - c.robust_sigma) / c.robust_sigma);
    c.gamma = gamma_from(c.h, c.z);
    return c;
}

StructuralFit structural_fit(const Eigen::VectorXd& sigma_ts, const Eigen::MatrixXd& regressors,
                             const Eigen::VectorXd& caps, const Eigen::VectorXd& gamma, double e0,
                             int min_clean_extra) {
    const auto n = sigma_ts.size();
    if (regressors.rows() != n || caps.size() != n || gamma.size() != n)
        throw Error(kModule, "DimensionMismatch", "structural fit inputs differ in length");
    const auto k = regressors.cols();

    std::vector<Eigen::Index> clean;
    for (Eigen::Index i = 0; i < n; ++i)
        if (gamma(i) == 1.0 && std::isfinite(sigma_ts(i)) && sigma_ts(i) > 0.0 && regressors.row(i).allFinite()) clean.push_back(i);

    StructuralFit out;
    out.n_clean = static_cast<int>(clean.size());
    const auto m = static_cast<Eigen::Index>(clean.size());

    if (m < k + min_clean_extra) {
        out.fallback = true;
        double num = 0.0, den = 0.0;
        for (auto i : clean) {
            num += caps(i) * sigma_ts(i);
            den += caps(i);
        }
        if (den == 0.0) {
            // No clean stock at all: use the cap-weighted mean of whatever is finite.
            for (Eigen::Index i = 0; i < n; ++i) {
                if (std::isfinite(sigma_ts(i))) {
                    num += caps(i) * sigma_ts(i);
                    den += caps(i);
                }
            }
        }
        if (den == 0.0) throw Error(kModule, "InsufficientCleanStocks", "no stock has a usable time-series volatility");
        out.sigma_str = Eigen::VectorXd::Constant(n, num / den);
        return out;
    }

    Eigen::MatrixXd design(m, k + 1);
    Eigen::VectorXd y(m), w(m);
    for (Eigen::Index r = 0; r < m; ++r) {
        const auto i = clean[static_cast<std::size_t>(r)];
        design(r, 0) = 1.0;
        design.row(r).tail(k) = regressors.row(i);
        y(r) = std::log(sigma_ts(i));
        w(r) = caps(i);
    }
    w /= w.sum();
    const Eigen::VectorXd sw = w.cwiseSqrt();
    // Industry dummies plus an intercept are collinear; the minimum-norm solution
    // still gives unique fitted values.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(sw.asDiagonal() * design);
    out.coefficients = cod.solve(sw.cwiseProduct(y));

    out.sigma_str.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!regressors.row(i).allFinite()) {
            out.sigma_str(i) = kNaN;
            continue;
        }
        out.sigma_str(i) = e0 * std::exp(out.coefficients(0) + regressors.row(i).dot(out.coefficients.tail(k)));
    }
    return out;
}

Eigen::VectorXd blend(const Eigen::VectorXd& sigma_ts, const Eigen::VectorXd& sigma_str, const Eigen::VectorXd& gamma) {
    if (sigma_str.size() != sigma_ts.size() || gamma.size() != sigma_ts.size())
        throw Error(kModule, "DimensionMismatch", "blend inputs differ in length");
    Eigen::VectorXd out(sigma_ts.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double g = gamma(i);
        if (g == 1.0) out(i) = sigma_ts(i);
        else if (g == 0.0) out(i) = sigma_str(i);
        else out(i) = g * sigma_ts(i) + (1.0 - g) * sigma_str(i);
    }
    return out;
}

IdioVarianceVector assemble_delta(IdioVarianceVector partial, const Eigen::VectorXd& vols) {
    if (vols.size() != static_cast<Eigen::Index>(partial.stocks.size()))
        throw Error(kModule, "DimensionMismatch", "vols do not match the universe");
    partial.variances = vols.array().square();
    for (Eigen::Index i = 0; i < vols.size(); ++i) {
        if (!std::isfinite(vols(i)) || vols(i) < 0.0)
            throw Error(kModule, "InvalidVolatility", "blended volatility is not a finite non-negative number",
                        {{"stock", partial.stocks[static_cast<std::size_t>(i)].str()}});
        if (vols(i) == 0.0) partial.warnings.push_back("ZeroVariance: " + partial.stocks[static_cast<std::size_t>(i)].str());
    }
    return partial;
}

IdioVarianceVector estimate_idio_variance(const regression::IdioReturnPanel& idio, const Date& as_of,
                                          const ExposureTensor& exposures, const Eigen::VectorXd& caps,
                                          const IdioConfig& config) {
    config.validate();
    const auto n = static_cast<Eigen::Index>(exposures.stocks.size());
    if (caps.size() != n) throw Error(kModule, "DimensionMismatch", "caps do not match the exposure universe");
    const Eigen::MatrixXd window = covariance::trailing_window(idio.dates, idio.values, as_of, config.window);

    std::map<StockId, Eigen::Index> col_of;
    for (std::size_t j = 0; j < idio.stocks.size(); ++j) col_of.emplace(idio.stocks[j], static_cast<Eigen::Index>(j));

    IdioVarianceVector out;
    out.date = as_of;
    out.stocks = exposures.stocks;
    out.stage = config.structural ? Stage::structural : Stage::time_series;
    out.gamma = Eigen::VectorXd::Zero(n);
    out.h = Eigen::VectorXi::Zero(n);
    out.z = Eigen::VectorXd::Constant(n, kNaN);
    out.sigma_ts = Eigen::VectorXd::Constant(n, kNaN);

    int floored = 0;
    std::vector<double> column(static_cast<std::size_t>(window.rows()));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto it = col_of.find(exposures.stocks[static_cast<std::size_t>(i)]);
        if (it == col_of.end() || window.rows() == 0) continue;
        for (Eigen::Index t = 0; t < window.rows(); ++t) column[static_cast<std::size_t>(t)] = window(t, it->second);
        const std::span<const double> u(column);
        const auto c = coordination_gamma(u);
        out.h(i) = c.h;
        out.z(i) = c.z;
        try {
            const auto nw = idio_newey_west(u, config);
            out.sigma_ts(i) = std::sqrt(nw.variance);
            out.gamma(i) = c.gamma;
            floored += nw.floored ? 1 : 0;
        } catch (const Error& e) {
            if (e.code() != "InsufficientData") throw;
        }
    }
    if (floored > 0) out.warnings.push_back("VarianceFloor: " + std::to_string(floored) + " stocks floored");

    // Regressors: every non-country factor column.
    const auto country = exposures.country_column();
    Eigen::MatrixXd regs(n, exposures.values.cols() - 1);
    for (Eigen::Index c = 0, j = 0; c < exposures.values.cols(); ++c)
        if (c != country) regs.col(j++) = exposures.values.col(c);

    const auto fit = structural_fit(out.sigma_ts, regs, caps, out.gamma, config.e0, config.min_clean_extra);
    out.sigma_str = fit.sigma_str;
    out.structural_fallback = fit.fallback;
    if (fit.fallback)
        out.warnings.push_back("InsufficientCleanStocks: " + std::to_string(fit.n_clean) + " clean stocks; using cap-weighted mean");

    Eigen::VectorXd vols;
    if (config.structural) {
        vols = blend(out.sigma_ts.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; }), out.sigma_str, out.gamma);
    } else {
        vols = out.sigma_ts;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!std::isfinite(vols(i))) vols(i) = out.sigma_str(i);
    }
    return assemble_delta(std::move(out), vols);
}

}  // namespace factorrisk::idio
