#include "factorrisk/synth.hpp"

#include "factorrisk/csv.hpp"
#include "factorrisk/error.hpp"
#include "factorrisk/risk_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace factorrisk::synth {

namespace {

constexpr const char* kModule = "synth";

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double normal() { return normal_(gen_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
    Eigen::MatrixXd normal(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }
    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

std::string stock_name(int i, int n) {
    const auto width = std::max<std::size_t>(4, std::to_string(n).size());
    std::string digits = std::to_string(i + 1);
    return "S" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

std::string industry_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "Ind%02d", i + 1);
    return buf;
}

Date previous_business_day(Date d) {
    auto s = d.serial() - 1;
    while (Date::from_serial(s).weekday() == 0 || Date::from_serial(s).weekday() == 6) --s;
    return Date::from_serial(s);
}

/// Random correlation matrix: identity blended with a normalized Wishart draw.
Eigen::MatrixXd random_correlation(Rng& rng, Eigen::Index k, double strength) {
    const Eigen::MatrixXd g = rng.normal(k, k + 5) / std::sqrt(static_cast<double>(k + 5));
    Eigen::MatrixXd s = (1.0 - strength) * Eigen::MatrixXd::Identity(k, k) + strength * g * g.transpose();
    const Eigen::VectorXd inv = s.diagonal().cwiseSqrt().cwiseInverse();
    s = inv.asDiagonal() * s * inv.asDiagonal();
    return 0.5 * (s + s.transpose());
}

}  // namespace

void SyntheticMarketSpec::validate() const {
    auto bad = [](const std::string& what) { throw Error(kModule, "InvalidSpec", what); };
    if (n_stocks < 1 || n_style < 0 || n_industries < 1 || n_days < 2) bad("dimensions must be positive");
    if (!(country_vol >= 0.0 && industry_vol >= 0.0 && style_vol >= 0.0)) bad("factor vols must be non-negative");
    if (!(idio_min > 0.0 && idio_min <= idio_median && idio_median <= idio_max)) bad("idio vol range is inconsistent");
    if (!(factor_correlation >= 0.0 && factor_correlation < 1.0)) bad("factor_correlation must lie in [0, 1)");
    if (!(beta_market_correlation > -1.0 && beta_market_correlation < 1.0)) bad("beta_market_correlation must lie in (-1, 1)");
    if (!(exposure_persistence >= 0.0 && exposure_persistence <= 1.0)) bad("exposure_persistence must lie in [0, 1]");
    if (!(defect_fraction >= 0.0 && defect_fraction <= 1.0)) bad("defect_fraction must lie in [0, 1]");
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) bad("outlier_rate must lie in [0, 1]");
    if (missing_run_min < 0 || missing_run_max < missing_run_min) bad("missing run bounds are inconsistent");
    const int end = defect_end < 0 ? n_days : defect_end;
    if (defect_start < 0 || end > n_days || defect_start > end) bad("defect window is outside the sample");
    if (defect_fraction > 0.0 && missing_run_max > end - defect_start) bad("missing runs do not fit in the defect window");
}

std::vector<std::string> style_names(int n_style) {
    static const char* base[] = {"Size",      "Beta",        "Momentum",      "ResidualVolatility", "NonLinearSize",
                                 "BookToPrice", "Liquidity", "EarningsYield", "Growth",             "Leverage"};
    std::vector<std::string> out;
    for (int k = 0; k < n_style; ++k) {
        if (k < 10) out.emplace_back(base[k]);
        else out.push_back("Style" + std::to_string(k + 1));
    }
    return out;
}

std::vector<Date> business_days(Date start, int count) {
    std::vector<Date> out;
    auto s = start.serial();
    while (static_cast<int>(out.size()) < count) {
        const Date d = Date::from_serial(s++);
        if (d.weekday() != 0 && d.weekday() != 6) out.push_back(d);
    }
    return out;
}

SyntheticMarket generate(const SyntheticMarketSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int n = spec.n_stocks;
    const int ns = spec.n_style;
    const int ni = spec.n_industries;
    const int k = ns + ni + 1;
    const auto styles = style_names(ns);

    SyntheticMarket market;
    auto& truth = market.truth;
    for (const auto& s : styles) {
        truth.factors.push_back(s);
        truth.kinds.push_back(FactorKind::style);
    }
    for (int i = 0; i < ni; ++i) {
        truth.factors.push_back(industry_name(i));
        truth.kinds.push_back(FactorKind::industry);
    }
    truth.factors.push_back("Country");
    truth.kinds.push_back(FactorKind::country);

    Universe stocks;
    for (int i = 0; i < n; ++i) stocks.emplace_back(stock_name(i, n));

    // Industry membership: round-robin seeding so every industry has a member when possible.
    std::vector<int> industry(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) industry[static_cast<std::size_t>(i)] = i < ni ? i : rng.uniform_int(0, ni - 1);

    // Latent style drivers and caps.
    Eigen::MatrixXd latent = rng.normal(n, ns);
    Eigen::VectorXd caps(n);
    for (int i = 0; i < n; ++i) caps(i) = std::exp(23.0 + 1.2 * (ns > 0 ? latent(i, 0) : 0.0));
    auto style_values = [&](const Eigen::MatrixXd& l) {
        Eigen::MatrixXd z = l;
        if (ns > 3) z.col(3) = 0.6 * l.col(0) + 0.3 * (ns > 1 ? l.col(1) : l.col(0)) + std::sqrt(0.55) * l.col(3);
        return z;
    };

    // True idio vols depend on the initial exposures.
    truth.idio_vol.resize(n);
    {
        const Eigen::MatrixXd z = style_values(latent);
        for (int i = 0; i < n; ++i) {
            double lv = std::log(spec.idio_median) + spec.idio_dispersion * rng.normal();
            if (ns > 0) lv -= 0.15 * z(i, 0);
            if (ns > 1) lv += 0.1 * z(i, 1);
            if (ns > 3) lv += 0.1 * z(i, 3);
            truth.idio_vol(i) = std::clamp(std::exp(lv), spec.idio_min, spec.idio_max);
        }
    }

    // Daily factor covariance.
    Eigen::VectorXd vols(k);
    for (int j = 0; j < k; ++j) {
        const auto kind = truth.kinds[static_cast<std::size_t>(j)];
        vols(j) = kind == FactorKind::style ? spec.style_vol : kind == FactorKind::industry ? spec.industry_vol : spec.country_vol;
    }
    Eigen::MatrixXd corr = random_correlation(rng, k, spec.factor_correlation);
    if (ns > 1 && spec.beta_market_correlation != 0.0) {
        // Beta factor returns load on the country factor, so market betas vary with Beta exposure.
        const double rho = spec.beta_market_correlation;
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(k, k);
        a(1, 1) = std::sqrt(1.0 - rho * rho);
        a(1, k - 1) = rho;
        corr = a * corr * a.transpose();
        const Eigen::VectorXd inv = corr.diagonal().cwiseSqrt().cwiseInverse();
        corr = inv.asDiagonal() * corr * inv.asDiagonal();
        corr = 0.5 * (corr + corr.transpose());
    }
    const Eigen::MatrixXd f_daily = vols.asDiagonal() * corr * vols.asDiagonal();
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(f_daily).matrixL();

    const auto dates = business_days(spec.start, spec.n_days);
    // Snapshot files: the business day before the sample, then every month end.
    std::vector<int> snap_after;  // snapshot s is used by days > snap_after[s]
    snap_after.push_back(-1);
    for (int t = 0; t + 1 < spec.n_days; ++t)
        if (!dates[static_cast<std::size_t>(t)].same_month(dates[static_cast<std::size_t>(t + 1)])) snap_after.push_back(t);

    const ExposureTensor proto = [&] {
        ExposureTensor x;
        x.stocks = stocks;
        x.factors = truth.factors;
        x.kinds = truth.kinds;
        return x;
    }();
    const RiskModelConfig pipeline_config;

    auto& data = market.data;
    data.returns.dates = dates;
    data.returns.stocks = stocks;
    data.returns.values = Eigen::MatrixXd::Zero(spec.n_days, n);
    truth.factor_returns = Eigen::MatrixXd::Zero(spec.n_days, k);
    truth.factor_cov_daily = Eigen::MatrixXd::Zero(k, k);

    Eigen::MatrixXd processed;
    Eigen::VectorXd drift = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd ind_weights = Eigen::VectorXd::Zero(ni);
    Eigen::MatrixXd proj_cov;
    Eigen::VectorXd prev_e = Eigen::VectorXd::Zero(k);
    std::size_t next_snap = 0;

    for (int t = 0; t < spec.n_days; ++t) {
        // Publish the snapshot dated just before day t, if one is due.
        if (next_snap < snap_after.size() && snap_after[next_snap] == t - 1) {
            const Date d = t == 0 ? previous_business_day(dates[0]) : dates[static_cast<std::size_t>(t - 1)];
            if (next_snap > 0) {
                const double rho = spec.exposure_persistence;
                latent = rho * latent + std::sqrt(1.0 - rho * rho) * rng.normal(n, ns);
            }
            const Eigen::MatrixXd z = style_values(latent);
            ExposureTensor raw = proto;
            raw.date = d;
            raw.values = Eigen::MatrixXd::Zero(n, k);
            for (int j = 0; j < ns; ++j) {
                if (j == 0) raw.values.col(0) = caps.array().log();
                else raw.values.col(j) = (0.1 * j) + (1.0 + 0.5 * j) * z.col(j).array();
            }
            for (int i = 0; i < n; ++i) raw.values(i, ns + industry[static_cast<std::size_t>(i)]) = 1.0;
            raw.values.col(k - 1).setOnes();

            StockVector cap_vec{d, stocks, caps};
            StockVector bench{d, stocks, caps / caps.sum()};
            drift = spec.alpha_scale * rng.normal(n, 1);
            Eigen::VectorXd noise = spec.alpha_noise * rng.normal(n, 1);
            StockVector alpha{d, stocks, drift + noise};

            processed = process_exposures(raw, cap_vec, pipeline_config).values;
            ind_weights.setZero();
            for (int i = 0; i < n; ++i) ind_weights(industry[static_cast<std::size_t>(i)]) += caps(i);
            ind_weights /= caps.sum();

            // Oblique projection enforcing sum_i w_i f_i = 0 on the industry block.
            Eigen::MatrixXd p = Eigen::MatrixXd::Identity(k, k);
            p.block(ns, ns, ni, ni) -= Eigen::VectorXd::Ones(ni) * ind_weights.transpose();
            proj_cov = (1.0 + spec.ma_theta * spec.ma_theta) * p * f_daily * p.transpose();

            data.exposures.insert(d, std::move(raw));
            data.caps.insert(d, std::move(cap_vec));
            data.benchmark.insert(d, std::move(bench));
            data.alpha.insert(d, std::move(alpha));
            ++next_snap;
        }

        const Eigen::VectorXd e = chol * rng.normal(k, 1);
        Eigen::VectorXd f = e + spec.ma_theta * prev_e;
        prev_e = e;
        const double ind_mean = ind_weights.dot(f.segment(ns, ni));
        f.segment(ns, ni).array() -= ind_mean;
        truth.factor_returns.row(t) = f.transpose();
        truth.factor_cov_daily += proj_cov;

        for (int i = 0; i < n; ++i) {
            double r = processed.row(i).dot(f) + truth.idio_vol(i) * rng.normal() + drift(i) / 21.0;
            r = std::clamp(r, -0.949, 0.949);
            data.returns.values(t, i) = r;
            caps(i) *= 1.0 + r;
        }
    }
    truth.factor_cov_daily /= static_cast<double>(spec.n_days);

    // Defects: missing runs and outliers on a random subset of stocks.
    const int n_def = static_cast<int>(std::lround(spec.defect_fraction * n));
    if (n_def > 0) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (int i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
        std::vector<int> chosen(order.begin(), order.begin() + n_def);
        std::sort(chosen.begin(), chosen.end());
        const int end = spec.defect_end < 0 ? spec.n_days : spec.defect_end;
        for (int i : chosen) {
            truth.defective.push_back(stocks[static_cast<std::size_t>(i)]);
            for (int t = spec.defect_start; t < end; ++t) {
                if (rng.uniform() < spec.outlier_rate) {
                    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
                    double& r = data.returns.values(t, i);
                    r = std::clamp(r + sign * spec.outlier_magnitude * truth.idio_vol(i), -0.949, 0.949);
                }
            }
            const int len = rng.uniform_int(spec.missing_run_min, spec.missing_run_max);
            const int s0 = rng.uniform_int(spec.defect_start, end - len);
            for (int t = s0; t < s0 + len; ++t) data.returns.values(t, i) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    data.returns.valid = data.returns.values.array().isFinite();
    return market;
}

void write_market(const std::filesystem::path& dir, const SyntheticMarket& market) {
    const auto& data = market.data;
    std::filesystem::create_directories(dir);
    write_returns(dir / "returns.csv", data.returns);
    for (const auto& [d, x] : data.exposures) write_exposures(dir / "exposures" / (d.str() + ".csv"), x);
    for (const auto& [d, v] : data.caps) write_stock_vector(dir / "caps" / (d.str() + ".csv"), v, "cap");
    for (const auto& [d, v] : data.benchmark) write_stock_vector(dir / "benchmark" / (d.str() + ".csv"), v, "weight");
    for (const auto& [d, v] : data.alpha) write_stock_vector(dir / "alpha" / (d.str() + ".csv"), v, "alpha");

    const auto& truth = market.truth;
    csv::LabeledMatrix f{"factor", truth.factors, truth.factors, truth.factor_cov_daily};
    csv::write(dir / "truth" / "factor_cov_daily.csv", f);

    csv::LabeledMatrix fr;
    fr.corner = "date";
    for (const auto& d : data.returns.dates) fr.row_labels.push_back(d.str());
    fr.col_labels = truth.factors;
    fr.values = truth.factor_returns;
    csv::write(dir / "truth" / "factor_returns.csv", fr);

    csv::LabeledMatrix iv;
    iv.corner = "stock";
    for (const auto& s : data.returns.stocks) iv.row_labels.push_back(s.str());
    iv.col_labels = {"idio_vol", "defective"};
    iv.values.resize(static_cast<Eigen::Index>(data.returns.stocks.size()), 2);
    iv.values.col(0) = truth.idio_vol;
    for (std::size_t i = 0; i < data.returns.stocks.size(); ++i) {
        const bool bad = std::find(truth.defective.begin(), truth.defective.end(), data.returns.stocks[i]) != truth.defective.end();
        iv.values(static_cast<Eigen::Index>(i), 1) = bad ? 1.0 : 0.0;
    }
    csv::write(dir / "truth" / "idio_vol.csv", iv);
}

}  // namespace factorrisk::synth
