#include "factorrisk/factor_covariance.hpp"

#include "factorrisk/error.hpp"

#include <cmath>

namespace factorrisk::covariance {

namespace {

constexpr const char* kModule = "factor_covariance";

Eigen::VectorXd age_weights(Eigen::Index n, double half_life) {
    Eigen::VectorXd w(n);
    for (Eigen::Index t = 0; t < n; ++t) w(t) = decay_weight(n - 1 - t, half_life);
    return w;
}

// EWMA mean of one column over its own valid entries; 0 when none.
double column_mean(const Eigen::MatrixXd& panel, Eigen::Index col, const Eigen::VectorXd& w) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index t = 0; t < panel.rows(); ++t) {
        const double v = panel(t, col);
        if (std::isfinite(v)) {
            num += w(t) * v;
            den += w(t);
        }
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace

void EwmaConfig::validate() const {
    if (window < 2) throw Error(kModule, "InvalidConfig", "window must be >= 2");
    if (!(half_life > 0.0)) throw Error(kModule, "InvalidConfig", "half_life must be positive");
    if (nw_lags < 0 || nw_lags >= window) throw Error(kModule, "InvalidConfig", "nw_lags must satisfy 0 <= D < window");
    if (monthly_scale < 1) throw Error(kModule, "InvalidConfig", "monthly_scale must be >= 1");
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::raw: return "raw";
        case Stage::newey_west: return "newey_west";
        case Stage::monthly: return "monthly";
    }
    return "raw";
}

double decay_weight(Eigen::Index age, double half_life) {
    return std::pow(0.5, static_cast<double>(age) / half_life);
}

double ewma_mean(std::span<const double> series, double half_life) {
    const auto n = static_cast<Eigen::Index>(series.size());
    double num = 0.0, den = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double v = series[static_cast<std::size_t>(t)];
        if (!std::isfinite(v)) continue;
        const double w = decay_weight(n - 1 - t, half_life);
        num += w * v;
        den += w;
    }
    if (den == 0.0) throw Error(kModule, "EmptySeries", "no valid observations");
    return num / den;
}

double ewma_cov(std::span<const double> a, std::span<const double> b, const EwmaConfig& config) {
    if (a.size() != b.size()) throw Error(kModule, "DimensionMismatch", "series lengths differ");
    const std::size_t keep = std::min(a.size(), static_cast<std::size_t>(config.window) + 1);
    a = a.last(keep);
    b = b.last(keep);
    const auto n = static_cast<Eigen::Index>(keep);

    double sw = 0.0, sa = 0.0, sb = 0.0;
    int count = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double x = a[static_cast<std::size_t>(t)], y = b[static_cast<std::size_t>(t)];
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        const double w = decay_weight(n - 1 - t, config.half_life);
        sw += w;
        sa += w * x;
        sb += w * y;
        ++count;
    }
    if (count < 2) throw Error(kModule, "InsufficientData", "ewma_cov needs two jointly valid points");
    const double ma = sa / sw, mb = sb / sw;
    double acc = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double x = a[static_cast<std::size_t>(t)], y = b[static_cast<std::size_t>(t)];
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        acc += decay_weight(n - 1 - t, config.half_life) * (x - ma) * (y - mb);
    }
    return acc / sw;
}

Eigen::MatrixXd ewma_cov_matrix(const Eigen::MatrixXd& panel, double half_life) {
    const auto n = panel.rows();
    const auto k = panel.cols();
    if (n < 2) throw Error(kModule, "InsufficientData", "covariance needs at least two observations");
    const Eigen::VectorXd w = age_weights(n, half_life);

    if (panel.allFinite()) {
        const double sw = w.sum();
        const Eigen::RowVectorXd mean = (w.transpose() * panel) / sw;
        const Eigen::MatrixXd centred = panel.rowwise() - mean;
        Eigen::MatrixXd cov = centred.transpose() * w.asDiagonal() * centred / sw;
        return 0.5 * (cov + cov.transpose());
    }

    EwmaConfig cfg;
    cfg.half_life = half_life;
    cfg.window = static_cast<int>(n);
    Eigen::MatrixXd cov(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = a; b < k; ++b) {
            const Eigen::VectorXd ca = panel.col(a), cb = panel.col(b);
            double v = 0.0;
            try {
                v = ewma_cov(std::span<const double>(ca.data(), static_cast<std::size_t>(n)),
                             std::span<const double>(cb.data(), static_cast<std::size_t>(n)), cfg);
            } catch (const Error& e) {
                if (e.code() != "InsufficientData") throw;
            }
            cov(a, b) = cov(b, a) = v;
        }
    }
    return cov;
}

Eigen::MatrixXd autocov_lag(const Eigen::MatrixXd& panel, int lag, double half_life, bool demean) {
    const auto n = panel.rows();
    const auto k = panel.cols();
    if (lag < 1) throw Error(kModule, "InvalidArgument", "lag must be >= 1");
    if (n <= lag + 1) throw Error(kModule, "InsufficientData", "panel too short for lag", {{"lag", std::to_string(lag)}});

    const Eigen::VectorXd w = age_weights(n, half_life);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(k);
    if (demean)
        for (Eigen::Index c = 0; c < k; ++c) mean(c) = column_mean(panel, c, w);

    // Pair weight sqrt(lambda_t * lambda_{t+d}) over the full-window normalizer keeps the
    // Bartlett sum a proper autocovariance sequence, hence positive semi-definite.
    const Eigen::Index pairs = n - lag;
    const Eigen::MatrixXd lead = panel.bottomRows(pairs).rowwise() - mean;  // f_{t+d}
    const Eigen::MatrixXd lagged = panel.topRows(pairs).rowwise() - mean;   // f_t
    const Eigen::VectorXd pw = w.tail(pairs) * std::pow(0.5, 0.5 * lag / half_life);

    if (panel.allFinite()) return lagged.transpose() * pw.asDiagonal() * lead / w.sum();

    Eigen::MatrixXd out(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) {
            double num = 0.0, den = 0.0;
            for (Eigen::Index t = 0; t < pairs; ++t) {
                const double x = lagged(t, a), y = lead(t, b);
                if (std::isfinite(x) && std::isfinite(y)) num += pw(t) * x * y;
            }
            for (Eigen::Index t = 0; t < n; ++t)
                if (std::isfinite(panel(t, a)) && std::isfinite(panel(t, b))) den += w(t);
            out(a, b) = den > 0.0 ? num / den : 0.0;
        }
    }
    return out;
}

bool is_symmetric_psd(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) return false;
    if (m.size() == 0) return true;
    const double scale = std::max(m.cwiseAbs().maxCoeff(), 1e-300);
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    return lo >= -1e-10 * std::max(hi, 0.0);
}

Eigen::MatrixXd newey_west(const Eigen::MatrixXd& f_raw, const std::vector<Eigen::MatrixXd>& lags, int monthly_scale) {
    const auto big_d = static_cast<double>(lags.size());
    Eigen::MatrixXd omega = f_raw;
    for (std::size_t i = 0; i < lags.size(); ++i) {
        const double d = static_cast<double>(i + 1);
        const double bartlett = 1.0 - d / (big_d + 1.0);
        omega += bartlett * (lags[i] + lags[i].transpose());
    }
    Eigen::MatrixXd out = static_cast<double>(monthly_scale) * omega;
    out = 0.5 * (out + out.transpose());
    if (!is_symmetric_psd(out)) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out, Eigen::EigenvaluesOnly);
        throw Error(kModule, "NotPSD", "Newey-West covariance is not positive semi-definite",
                    {{"min_eig", std::to_string(es.eigenvalues().minCoeff())},
                     {"max_eig", std::to_string(es.eigenvalues().maxCoeff())}});
    }
    return out;
}

Eigen::MatrixXd trailing_window(const std::vector<Date>& dates, const Eigen::MatrixXd& values, const Date& as_of,
                                int window) {
    const auto end = static_cast<Eigen::Index>(std::lower_bound(dates.begin(), dates.end(), as_of) - dates.begin());
    const Eigen::Index len = std::min<Eigen::Index>(end, window + 1);
    return values.middleRows(end - len, len);
}

CovarianceEstimate estimate_factor_covariance(const regression::FactorReturnSeries& series, const Date& as_of,
                                              const EwmaConfig& config) {
    config.validate();
    const Eigen::MatrixXd panel = trailing_window(series.dates, series.values, as_of, config.window);
    if (panel.rows() <= config.nw_lags + 1 || panel.rows() < 2) {
        throw Error(kModule, "InsufficientData", "not enough factor-return history",
                    {{"as_of", as_of.str()}, {"rows", std::to_string(panel.rows())}});
    }
    const Eigen::MatrixXd raw = ewma_cov_matrix(panel, config.half_life);
    std::vector<Eigen::MatrixXd> lags;
    for (int d = 1; d <= config.nw_lags; ++d) lags.push_back(autocov_lag(panel, d, config.half_life, config.demean_autocov));

    CovarianceEstimate est;
    est.factors = series.factors;
    est.date = as_of;
    est.stage = Stage::monthly;
    try {
        est.matrix = newey_west(raw, lags, config.monthly_scale);
    } catch (Error& e) {
        auto ctx = e.context();
        ctx["as_of"] = as_of.str();
        throw Error(kModule, e.code(), e.message(), ctx);
    }
    return est;
}

}  // namespace factorrisk::covariance
