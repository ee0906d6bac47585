#include "factorrisk/factor_regression.hpp"

#include "factorrisk/error.hpp"
#include "factorrisk/stats.hpp"

#include <cmath>
#include <limits>

namespace factorrisk::regression {

namespace {

constexpr const char* kModule = "factor_regression";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::map<StockId, Eigen::Index> index_map(const Universe& u) {
    std::map<StockId, Eigen::Index> m;
    for (std::size_t i = 0; i < u.size(); ++i) m.emplace(u[i], static_cast<Eigen::Index>(i));
    return m;
}

}  // namespace

Eigen::VectorXd regression_weights(const Eigen::VectorXd& caps, WeightScheme scheme) {
    Eigen::VectorXd w;
    switch (scheme) {
        case WeightScheme::equal: w = Eigen::VectorXd::Ones(caps.size()); break;
        case WeightScheme::cap: w = caps; break;
        case WeightScheme::sqrt_cap: w = caps.cwiseSqrt(); break;
    }
    return w / w.sum();
}

UnconstrainedFit solve_unconstrained(const Eigen::MatrixXd& design, const Eigen::VectorXd& returns,
                                     const Eigen::VectorXd& weights, double rank_tol) {
    if (design.rows() != returns.size() || weights.size() != returns.size())
        throw Error(kModule, "DimensionMismatch", "design, returns and weights differ in length");
    if (design.rows() < design.cols()) {
        throw Error(kModule, "Underdetermined", "fewer stocks than factors",
                    {{"stocks", std::to_string(design.rows())}, {"factors", std::to_string(design.cols())}});
    }
    UnconstrainedFit fit;
    fit.coefficients = stats::wls(design, returns, weights, kModule, rank_tol);
    fit.residuals = returns - design * fit.coefficients;
    return fit;
}

CountryRecovery recover_country(const Eigen::VectorXd& raw_industry, const Eigen::VectorXd& industry_cap_weights) {
    CountryRecovery out;
    out.country = industry_cap_weights.dot(raw_industry);
    out.industry = raw_industry.array() - out.country;
    return out;
}

CrossSection run_cross_section(const ExposureTensor& exposures, const Eigen::VectorXd& returns,
                               const Eigen::VectorXd& caps, const RegressionConfig& config) {
    const auto n = exposures.values.rows();
    if (returns.size() != n || caps.size() != n) throw Error(kModule, "DimensionMismatch", "cross-section inputs differ in length");

    const auto industries = exposures.columns_of(FactorKind::industry);
    const auto styles = exposures.columns_of(FactorKind::style);
    const auto country = exposures.country_column();

    CrossSection out;
    out.date = exposures.date;
    out.stocks = exposures.stocks;
    out.factor_returns = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(exposures.factors.size()), kNaN);
    out.industry_weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(industries.size()));

    std::vector<std::size_t> live;  // positions within `industries` that have members
    const double total_cap = caps.sum();
    for (std::size_t c = 0; c < industries.size(); ++c) {
        const auto col = exposures.values.col(industries[c]);
        if (col.sum() > 0.0) {
            live.push_back(c);
            out.industry_weights(static_cast<Eigen::Index>(c)) = col.dot(caps) / total_cap;
        } else {
            out.dropped_industries.push_back(exposures.factors[static_cast<std::size_t>(industries[c])]);
        }
    }

    Eigen::MatrixXd design(n, static_cast<Eigen::Index>(live.size() + styles.size()));
    for (std::size_t j = 0; j < live.size(); ++j) design.col(static_cast<Eigen::Index>(j)) = exposures.values.col(industries[live[j]]);
    for (std::size_t j = 0; j < styles.size(); ++j)
        design.col(static_cast<Eigen::Index>(live.size() + j)) = exposures.values.col(styles[j]);
    if (!design.allFinite()) throw Error(kModule, "InvalidInput", "exposures contain missing values", {{"date", exposures.date.str()}});

    const Eigen::VectorXd w = regression_weights(caps, config.weighting);
    UnconstrainedFit fit;
    try {
        fit = solve_unconstrained(design, returns, w, config.rank_tol);
    } catch (Error& e) {
        throw Error(kModule, e.code(), e.message(), {{"date", exposures.date.str()}});
    }

    const auto n_live = static_cast<Eigen::Index>(live.size());
    Eigen::VectorXd live_weights(n_live);
    for (Eigen::Index j = 0; j < n_live; ++j) live_weights(j) = out.industry_weights(static_cast<Eigen::Index>(live[static_cast<std::size_t>(j)]));
    const auto rec = recover_country(fit.coefficients.head(n_live), live_weights);

    out.factor_returns(country) = rec.country;
    for (Eigen::Index j = 0; j < n_live; ++j) out.factor_returns(industries[live[static_cast<std::size_t>(j)]]) = rec.industry(j);
    for (std::size_t j = 0; j < styles.size(); ++j)
        out.factor_returns(styles[j]) = fit.coefficients(n_live + static_cast<Eigen::Index>(j));
    out.residuals = fit.residuals;

    const double mean_w = w.dot(returns);
    const double tss = (w.array() * (returns.array() - mean_w).square()).sum();
    const double rss = (w.array() * fit.residuals.array().square()).sum();
    out.r2 = tss > 0.0 ? 1.0 - rss / tss : 0.0;
    return out;
}

RegressionHistory run_history(const ReturnsPanel& returns, const DatedSeries<ExposureTensor>& processed_exposures,
                              const DatedSeries<StockVector>& caps, const RegressionConfig& config) {
    if (processed_exposures.empty()) throw Error(kModule, "MissingInput", "no exposures");
    const auto& proto = processed_exposures.begin()->second;

    RegressionHistory hist;
    auto& fr = hist.factor_returns;
    fr.factors = proto.factors;
    fr.kinds = proto.kinds;
    hist.idio.stocks = returns.stocks;
    const auto ret_index = index_map(returns.stocks);

    std::vector<Eigen::VectorXd> rows;
    std::vector<Eigen::VectorXd> idio_rows;
    std::vector<double> r2;

    // Cache universe bookkeeping per (exposure, caps) pair; both change rarely.
    const ExposureTensor* last_x = nullptr;
    const StockVector* last_caps = nullptr;
    std::vector<Eigen::Index> x_rows, cap_rows, ret_cols;

    for (std::size_t t = 0; t < returns.dates.size(); ++t) {
        const Date& date = returns.dates[t];
        const auto* x = processed_exposures.latest_before(date);
        const auto* c = caps.latest_before(date);
        if (!x || !c) continue;
        if (x != last_x || c != last_caps) {
            last_x = x;
            last_caps = c;
            x_rows.clear();
            cap_rows.clear();
            ret_cols.clear();
            const auto cap_index = index_map(c->stocks);
            for (std::size_t i = 0; i < x->stocks.size(); ++i) {
                auto ci = cap_index.find(x->stocks[i]);
                auto ri = ret_index.find(x->stocks[i]);
                if (ci == cap_index.end() || ri == ret_index.end()) continue;
                x_rows.push_back(static_cast<Eigen::Index>(i));
                cap_rows.push_back(ci->second);
                ret_cols.push_back(ri->second);
            }
        }

        const auto ti = static_cast<Eigen::Index>(t);
        std::vector<std::size_t> members;
        for (std::size_t k = 0; k < x_rows.size(); ++k)
            if (returns.valid(ti, ret_cols[k])) members.push_back(k);

        ExposureTensor xs;
        xs.date = date;
        xs.factors = x->factors;
        xs.kinds = x->kinds;
        xs.values.resize(static_cast<Eigen::Index>(members.size()), x->values.cols());
        Eigen::VectorXd r(static_cast<Eigen::Index>(members.size()));
        Eigen::VectorXd cap(static_cast<Eigen::Index>(members.size()));
        for (std::size_t m = 0; m < members.size(); ++m) {
            const auto k = members[m];
            const auto mi = static_cast<Eigen::Index>(m);
            xs.stocks.push_back(x->stocks[static_cast<std::size_t>(x_rows[k])]);
            xs.values.row(mi) = x->values.row(x_rows[k]);
            r(mi) = returns.values(ti, ret_cols[k]);
            cap(mi) = c->values(cap_rows[k]);
        }

        const auto cs = run_cross_section(xs, r, cap, config);
        fr.dates.push_back(date);
        rows.push_back(cs.factor_returns);
        r2.push_back(cs.r2);
        if (!cs.dropped_industries.empty()) fr.dropped.emplace(date, cs.dropped_industries);

        Eigen::VectorXd idio = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(returns.stocks.size()), kNaN);
        for (std::size_t m = 0; m < members.size(); ++m) idio(ret_cols[members[m]]) = cs.residuals(static_cast<Eigen::Index>(m));
        idio_rows.push_back(std::move(idio));
    }

    const auto nd = static_cast<Eigen::Index>(rows.size());
    fr.values.resize(nd, static_cast<Eigen::Index>(fr.factors.size()));
    fr.r2.resize(nd);
    hist.idio.dates = fr.dates;
    hist.idio.values.resize(nd, static_cast<Eigen::Index>(returns.stocks.size()));
    for (Eigen::Index i = 0; i < nd; ++i) {
        fr.values.row(i) = rows[static_cast<std::size_t>(i)].transpose();
        fr.r2(i) = r2[static_cast<std::size_t>(i)];
        hist.idio.values.row(i) = idio_rows[static_cast<std::size_t>(i)].transpose();
    }
    hist.idio.valid = hist.idio.values.array().isFinite();
    return hist;
}

}  // namespace factorrisk::regression
