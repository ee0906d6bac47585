#include "commands.hpp"

#include "factorrisk/backtester.hpp"
#include "factorrisk/bias.hpp"
#include "factorrisk/csv.hpp"
#include "factorrisk/error.hpp"
#include "factorrisk/panel_store.hpp"
#include "factorrisk/portfolio.hpp"
#include "factorrisk/risk_model.hpp"
#include "factorrisk/svg_plot.hpp"
#include "factorrisk/synth.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

namespace factorrisk::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kModule = "cli";

struct Invocation {
    std::string command;
    fs::path data;
    fs::path out;
    json config;
    std::vector<std::string> outputs;
};

[[noreturn]] void fail(const std::string& code, const std::string& message, Error::Context ctx = {}) {
    throw Error(kModule, code, message, std::move(ctx));
}

json synth_defaults() {
    const synth::SyntheticMarketSpec s;
    return {{"n_stocks", s.n_stocks},
            {"n_style", s.n_style},
            {"n_industries", s.n_industries},
            {"n_days", s.n_days},
            {"seed", s.seed},
            {"start", s.start.str()},
            {"country_vol", s.country_vol},
            {"industry_vol", s.industry_vol},
            {"style_vol", s.style_vol},
            {"factor_correlation", s.factor_correlation},
            {"beta_market_correlation", s.beta_market_correlation},
            {"ma_theta", s.ma_theta},
            {"idio_median", s.idio_median},
            {"idio_dispersion", s.idio_dispersion},
            {"idio_min", s.idio_min},
            {"idio_max", s.idio_max},
            {"exposure_persistence", s.exposure_persistence},
            {"alpha_scale", s.alpha_scale},
            {"alpha_noise", s.alpha_noise},
            {"defect_fraction", s.defect_fraction},
            {"missing_run_min", s.missing_run_min},
            {"missing_run_max", s.missing_run_max},
            {"outlier_rate", s.outlier_rate},
            {"outlier_magnitude", s.outlier_magnitude},
            {"defect_start", s.defect_start},
            {"defect_end", s.defect_end}};
}

/// Recursive merge; every key in `patch` must already exist in `base`.
void merge(json& base, const json& patch, const std::string& prefix) {
    if (!patch.is_object()) fail("InvalidConfig", "configuration must be a JSON object", {{"key", prefix}});
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!base.contains(it.key())) fail("UnknownConfigKey", "unknown configuration key", {{"key", key}});
        json& slot = base[it.key()];
        if (slot.is_object()) merge(slot, it.value(), key);
        else slot = it.value();
    }
}

template <class T>
T get(const json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const json::exception&) {
        fail("InvalidConfig", "configuration value has the wrong type", {{"key", std::string(section) + "." + key}});
    }
}

std::optional<double> get_optional(const json& j, const char* section, const char* key) {
    const auto& v = j.at(section).at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) fail("InvalidConfig", "configuration value must be a number or null", {{"key", std::string(section) + "." + key}});
    return v.get<double>();
}

std::optional<Date> get_date(const json& j, const char* section, const char* key) {
    const auto& v = section ? j.at(section).at(key) : j.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) fail("InvalidConfig", "date must be a YYYY-MM-DD string", {{"key", key}});
    return Date::parse(v.get<std::string>());
}

RiskModelConfig model_config(const json& cfg) {
    RiskModelConfig m;
    m.factor.window = get<int>(cfg, "model", "window");
    m.factor.half_life = get<double>(cfg, "model", "half_life");
    m.factor.nw_lags = get<int>(cfg, "model", "nw_lags");
    m.factor.monthly_scale = get<int>(cfg, "model", "monthly_scale");
    m.idio.window = get<int>(cfg, "model", "idio_window");
    m.idio.half_life = get<double>(cfg, "model", "idio_half_life");
    m.idio.nw_lags = get<int>(cfg, "model", "idio_nw_lags");
    m.idio.monthly_scale = m.factor.monthly_scale;
    m.idio.floor_fraction = get<double>(cfg, "model", "floor_fraction");
    m.idio.e0 = get<double>(cfg, "model", "e0");
    m.idio.structural = get<bool>(cfg, "model", "structural");
    m.pipeline.mad_multiplier = get<double>(cfg, "model", "mad_multiplier");
    const auto std_w = get<std::string>(cfg, "model", "standardization");
    if (std_w == "equal") m.pipeline.standardization_weighting = exposure::StdWeighting::equal;
    else if (std_w == "cap_weighted_mean") m.pipeline.standardization_weighting = exposure::StdWeighting::cap_weighted_mean;
    else fail("InvalidConfig", "model.standardization must be equal or cap_weighted_mean");
    const auto rw = get<std::string>(cfg, "model", "regression_weighting");
    if (rw == "sqrt_cap") m.regression.weighting = regression::WeightScheme::sqrt_cap;
    else if (rw == "cap") m.regression.weighting = regression::WeightScheme::cap;
    else if (rw == "equal") m.regression.weighting = regression::WeightScheme::equal;
    else fail("InvalidConfig", "model.regression_weighting must be sqrt_cap, cap or equal");
    m.default_orthogonalization = get<bool>(cfg, "model", "default_orthogonalization");
    m.factor.validate();
    m.idio.validate();
    return m;
}

synth::SyntheticMarketSpec synth_spec(const json& cfg) {
    synth::SyntheticMarketSpec s;
    s.n_stocks = get<int>(cfg, "synth", "n_stocks");
    s.n_style = get<int>(cfg, "synth", "n_style");
    s.n_industries = get<int>(cfg, "synth", "n_industries");
    s.n_days = get<int>(cfg, "synth", "n_days");
    s.seed = get<std::uint64_t>(cfg, "synth", "seed");
    s.start = *get_date(cfg, "synth", "start");
    s.country_vol = get<double>(cfg, "synth", "country_vol");
    s.industry_vol = get<double>(cfg, "synth", "industry_vol");
    s.style_vol = get<double>(cfg, "synth", "style_vol");
    s.factor_correlation = get<double>(cfg, "synth", "factor_correlation");
    s.beta_market_correlation = get<double>(cfg, "synth", "beta_market_correlation");
    s.ma_theta = get<double>(cfg, "synth", "ma_theta");
    s.idio_median = get<double>(cfg, "synth", "idio_median");
    s.idio_dispersion = get<double>(cfg, "synth", "idio_dispersion");
    s.idio_min = get<double>(cfg, "synth", "idio_min");
    s.idio_max = get<double>(cfg, "synth", "idio_max");
    s.exposure_persistence = get<double>(cfg, "synth", "exposure_persistence");
    s.alpha_scale = get<double>(cfg, "synth", "alpha_scale");
    s.alpha_noise = get<double>(cfg, "synth", "alpha_noise");
    s.defect_fraction = get<double>(cfg, "synth", "defect_fraction");
    s.missing_run_min = get<int>(cfg, "synth", "missing_run_min");
    s.missing_run_max = get<int>(cfg, "synth", "missing_run_max");
    s.outlier_rate = get<double>(cfg, "synth", "outlier_rate");
    s.outlier_magnitude = get<double>(cfg, "synth", "outlier_magnitude");
    s.defect_start = get<int>(cfg, "synth", "defect_start");
    s.defect_end = get<int>(cfg, "synth", "defect_end");
    return s;
}

portfolio::PortfolioProblem problem_template(const json& cfg) {
    portfolio::PortfolioProblem p;
    p.objective = portfolio::parse_objective(get<std::string>(cfg, "portfolio", "objective"));
    p.mode = portfolio::parse_weight_mode(get<std::string>(cfg, "portfolio", "mode"));
    p.lambda = get<double>(cfg, "portfolio", "lambda");
    p.constraints.long_only = get<bool>(cfg, "portfolio", "long_only");
    p.constraints.budget = get<double>(cfg, "portfolio", "budget");
    p.constraints.per_stock_cap = get_optional(cfg, "portfolio", "per_stock_cap");
    p.constraints.industry_neutral = get<bool>(cfg, "portfolio", "industry_neutral");
    p.constraints.size_band = get_optional(cfg, "portfolio", "size_band");
    p.constraints.size_factor = get<std::string>(cfg, "portfolio", "size_factor");
    p.constraints.validate();
    return p;
}

qp::Tolerances tolerances(const json& cfg) {
    qp::Tolerances t;
    t.stationarity = get<double>(cfg, "solver", "stationarity");
    t.feasibility = get<double>(cfg, "solver", "feasibility");
    t.max_iter_factor = get<int>(cfg, "solver", "max_iter_factor");
    return t;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("WriteFailed", "cannot open output file", {{"path", path.string()}});
    out << text;
}

json sanitize(const json& j) {
    if (j.is_number_float() && !std::isfinite(j.get<double>())) return nullptr;
    if (j.is_object() || j.is_array()) {
        json out = j;
        for (auto& v : out) v = sanitize(v);
        return out;
    }
    return j;
}

void emit_json(Invocation& inv, const std::string& name, const json& j) {
    write_text(inv.out / name, sanitize(j).dump(2) + "\n");
    inv.outputs.push_back(name);
}

void emit_csv(Invocation& inv, const std::string& name, const csv::LabeledMatrix& m) {
    csv::write(inv.out / name, m);
    inv.outputs.push_back(name);
}

void emit_manifest(Invocation& inv, json extra) {
    json m;
    m["subcommand"] = inv.command;
    m["config"] = inv.config;
    m["outputs"] = inv.outputs;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    write_text(inv.out / (inv.command + "_manifest.json"), sanitize(m).dump(2) + "\n");
}

json model_parameters(const RiskModelConfig& m) {
    return {{"factor", {{"window", m.factor.window}, {"half_life", m.factor.half_life}, {"nw_lags", m.factor.nw_lags},
                        {"monthly_scale", m.factor.monthly_scale}}},
            {"idio", {{"window", m.idio.window}, {"half_life", m.idio.half_life}, {"nw_lags", m.idio.nw_lags},
                      {"e0", m.idio.e0}, {"structural", m.idio.structural},
                      {"floor_policy", "max(nw_variance, floor_fraction * monthly_scale * lag0_variance)"},
                      {"floor_fraction", m.idio.floor_fraction}}},
            {"mad_multiplier", m.pipeline.mad_multiplier}};
}

Date resolve_as_of(const json& cfg, const MarketData& data) {
    if (auto d = get_date(cfg, nullptr, "as_of")) return *d;
    return data.returns.dates.back();
}

std::vector<std::string> date_labels(const std::vector<Date>& dates) {
    std::vector<std::string> out;
    for (const auto& d : dates) out.push_back(d.str());
    return out;
}

std::vector<std::string> stock_labels(const Universe& u) {
    std::vector<std::string> out;
    for (const auto& s : u) out.push_back(s.str());
    return out;
}

csv::LabeledMatrix factor_matrix(const covariance::CovarianceEstimate& est) {
    return {"factor", est.factors, est.factors, est.matrix};
}

csv::LabeledMatrix idio_table(const idio::IdioVarianceVector& d) {
    csv::LabeledMatrix m;
    m.corner = "stock";
    m.row_labels = stock_labels(d.stocks);
    m.col_labels = {"variance", "gamma", "h_n", "Z_n", "sigma_ts", "sigma_str"};
    const auto n = static_cast<Eigen::Index>(d.stocks.size());
    m.values.resize(n, 6);
    m.values.col(0) = d.variances;
    m.values.col(1) = d.gamma;
    m.values.col(2) = d.h.cast<double>();
    m.values.col(3) = d.z;
    m.values.col(4) = d.sigma_ts;
    m.values.col(5) = d.sigma_str;
    return m;
}

json data_summary(const MarketData& data) {
    return {{"first_date", data.returns.dates.front().str()},
            {"last_date", data.returns.dates.back().str()},
            {"n_dates", data.returns.dates.size()},
            {"n_stocks", data.returns.stocks.size()},
            {"universe_hash", universe_hash(data.returns.stocks)}};
}

// ---------------------------------------------------------------------------

void cmd_synth(Invocation& inv) {
    const auto spec = synth_spec(inv.config);
    const auto market = synth::generate(spec);
    synth::write_market(inv.out, market);
    for (const char* f : {"returns.csv", "exposures/", "caps/", "benchmark/", "alpha/", "truth/"}) inv.outputs.emplace_back(f);
    emit_manifest(inv, {{"data", data_summary(market.data)}, {"defective", stock_labels(market.truth.defective)}});
}

void cmd_ingest(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    json files = {{"exposures", data.exposures.size()}, {"caps", data.caps.size()},
                  {"benchmark", data.benchmark.size()}, {"alpha", data.alpha.size()}};
    const auto valid = data.returns.valid.count();
    json summary = data_summary(data);
    summary["files"] = files;
    summary["valid_cells"] = valid;
    summary["missing_cells"] = data.returns.valid.size() - valid;
    summary["factors"] = data.exposures.begin()->second.factors;
    emit_json(inv, "ingest.json", summary);
    emit_manifest(inv, {{"data", data_summary(data)}});
}

void cmd_exposures(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    std::vector<std::string> warnings;
    for (const auto& [date, raw] : data.exposures) {
        const auto* caps = data.caps.latest_at_or_before(date);
        if (!caps) fail("MissingInput", "no caps on or before exposure date", {{"date", date.str()}});
        const auto x = process_exposures(raw, *caps, model, &warnings);
        const std::string name = "exposures/" + date.str() + ".csv";
        write_exposures(inv.out / name, x);
        inv.outputs.push_back(name);
    }
    emit_manifest(inv, {{"data", data_summary(data)}, {"warnings", warnings}, {"model", model_parameters(model)}});
}

void cmd_regress(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    const RiskModelBuilder builder(data, model);
    const auto& fr = builder.history().factor_returns;
    emit_csv(inv, "factor_returns.csv", {"date", date_labels(fr.dates), fr.factors, fr.values});
    emit_csv(inv, "r2.csv", {"date", date_labels(fr.dates), {"r2"}, fr.r2});
    const auto& idio = builder.history().idio;
    emit_csv(inv, "idio_returns.csv", {"date", date_labels(idio.dates), stock_labels(idio.stocks), idio.values});
    json dropped = json::object();
    for (const auto& [d, names] : fr.dropped) dropped[d.str()] = names;
    emit_manifest(inv, {{"data", data_summary(data)}, {"dropped_industries", dropped}, {"model", model_parameters(model)},
                        {"warnings", builder.warnings()}});
}

void cmd_cov(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    const RiskModelBuilder builder(data, model);
    const Date as_of = resolve_as_of(inv.config, data);
    const auto est = covariance::estimate_factor_covariance(builder.history().factor_returns, as_of, model.factor);
    const auto panel = covariance::trailing_window(builder.history().factor_returns.dates,
                                                   builder.history().factor_returns.values, as_of, model.factor.window);
    covariance::CovarianceEstimate raw{est.factors, covariance::ewma_cov_matrix(panel, model.factor.half_life),
                                       covariance::Stage::raw, as_of};
    emit_csv(inv, "factor_cov.csv", factor_matrix(est));
    emit_csv(inv, "factor_cov_raw.csv", factor_matrix(raw));
    emit_manifest(inv, {{"as_of", as_of.str()},
                        {"stages", {{"factor_cov.csv", covariance::to_string(est.stage)},
                                    {"factor_cov_raw.csv", covariance::to_string(raw.stage)}}},
                        {"window_rows", panel.rows()},
                        {"model", model_parameters(model)}});
}

void cmd_idio(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    const RiskModelBuilder builder(data, model);
    const Date as_of = resolve_as_of(inv.config, data);
    const auto snap = builder.snapshot(as_of);
    emit_csv(inv, "idio_variance.csv", idio_table(snap.delta));
    emit_manifest(inv, {{"as_of", as_of.str()},
                        {"universe_hash", universe_hash(snap.universe())},
                        {"structural_fallback", snap.delta.structural_fallback},
                        {"warnings", snap.delta.warnings},
                        {"model", model_parameters(model)}});
}

void cmd_snapshot(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    const RiskModelBuilder builder(data, model);
    const Date as_of = resolve_as_of(inv.config, data);
    const auto snap = builder.snapshot(as_of);
    write_exposures(inv.out / "exposures.csv", snap.exposures);
    inv.outputs.emplace_back("exposures.csv");
    emit_csv(inv, "factor_cov.csv", factor_matrix(snap.factor_cov));
    emit_csv(inv, "idio_variance.csv", idio_table(snap.delta));
    emit_csv(inv, "stock_vol.csv", {"stock", stock_labels(snap.universe()), {"vol"}, stock_volatilities(snap)});
    emit_manifest(inv, {{"as_of", as_of.str()},
                        {"universe_hash", universe_hash(snap.universe())},
                        {"model", model_parameters(model)},
                        {"warnings", snap.delta.warnings}});
}

void cmd_bias(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    const RiskModelBuilder builder(data, model);
    const auto& cfg = inv.config.at("bias");
    const int horizon = cfg.at("horizon").get<int>();
    const int step = cfg.at("step").get<int>();
    const int groups = cfg.at("groups").get<int>();
    const auto n_dates = static_cast<int>(data.returns.dates.size());
    const int first = cfg.at("first").is_null() ? std::min(model.factor.window + 1, n_dates - 1) : cfg.at("first").get<int>();
    int count = cfg.at("count").is_null() ? (n_dates - first - horizon) / step + 1 : cfg.at("count").get<int>();
    if (count < 2) fail("InsufficientWindows", "fewer than two evaluation windows fit in the sample");

    const auto windows = bias::evaluate_windows(builder, data.returns, bias::window_starts(first, step, count), horizon);
    const auto deciles = bias::decile_bias(windows, groups);
    const auto stocks = bias::per_stock_bias(windows);

    csv::LabeledMatrix dm;
    dm.corner = "group";
    dm.col_labels = {"mean_bias", "n_obs"};
    dm.values.resize(static_cast<Eigen::Index>(deciles.size()), 2);
    for (std::size_t g = 0; g < deciles.size(); ++g) {
        dm.row_labels.push_back(std::to_string(deciles[g].group));
        dm.values(static_cast<Eigen::Index>(g), 0) = deciles[g].mean_bias;
        dm.values(static_cast<Eigen::Index>(g), 1) = deciles[g].n_obs;
    }
    emit_csv(inv, "bias_deciles.csv", dm);

    csv::LabeledMatrix sm;
    sm.corner = "stock";
    sm.col_labels = {"bias"};
    sm.values.resize(static_cast<Eigen::Index>(stocks.size()), 1);
    std::vector<double> b;
    Eigen::Index r = 0;
    for (const auto& [id, v] : stocks) {
        sm.row_labels.push_back(id.str());
        sm.values(r++, 0) = v;
        b.push_back(v);
    }
    emit_csv(inv, "bias_stocks.csv", sm);

    json series = json::array();
    for (const auto& g : deciles) series.push_back({{"group", g.group}, {"mean_bias", g.mean_bias}, {"n_obs", g.n_obs}});
    emit_json(inv, "bias.json", {{"deciles", series}, {"mean_abs_deviation", bias::mean_abs_deviation_from_one(b)},
                                 {"windows", windows.size()}});
    emit_manifest(inv, {{"windows", {{"first_row", first}, {"step", step}, {"count", count}, {"horizon", horizon},
                                     {"overlapping", false}}},
                        {"model", model_parameters(model)}});
}

void cmd_optimize(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    const auto model = model_config(inv.config);
    const RiskModelBuilder builder(data, model);
    const Date as_of = resolve_as_of(inv.config, data);
    const auto snap = builder.snapshot(as_of);
    auto problem = problem_template(inv.config);
    if (const auto* b = data.benchmark.latest_before(as_of)) problem.benchmark = backtest::benchmark_on(*b, snap.universe());
    if (const auto* a = data.alpha.latest_before(as_of)) problem.alpha = a->select(snap.universe());
    const auto tol = tolerances(inv.config);
    const auto sol = portfolio::solve_portfolio(problem, snap, tol);

    json diag = {{"status", qp::to_string(sol.status)}, {"objective_value", sol.objective_value},
                 {"predicted_variance", sol.predicted_variance}, {"predicted_alpha", sol.predicted_alpha},
                 {"kkt_residual", sol.kkt_residual}, {"iterations", sol.iterations},
                 {"active_constraints", sol.active_constraints}};
    emit_json(inv, "solution.json", diag);
    if (sol.status != qp::Status::infeasible) {
        csv::LabeledMatrix w;
        w.corner = "stock";
        w.row_labels = stock_labels(snap.universe());
        w.col_labels = {"weight"};
        w.values = sol.weights;
        if (sol.active_weights.size() == sol.weights.size()) {
            w.col_labels.push_back("active_weight");
            w.values.conservativeResize(Eigen::NoChange, 2);
            w.values.col(1) = sol.active_weights;
        }
        emit_csv(inv, "weights.csv", w);
    }
    emit_manifest(inv, {{"as_of", as_of.str()}, {"universe_hash", universe_hash(snap.universe())},
                        {"tolerances", {{"stationarity", tol.stationarity}, {"feasibility", tol.feasibility},
                                        {"max_iterations", tol.max_iter_factor * static_cast<int>(snap.universe().size())}}},
                        {"model", model_parameters(model)}});
    if (sol.status != qp::Status::optimal)
        throw Error("qp_optimizer", sol.status == qp::Status::infeasible ? "Infeasible" : "MaxIterations",
                    "portfolio problem was not solved to optimality", {{"as_of", as_of.str()}});
}

void cmd_backtest(Invocation& inv) {
    const auto data = load_data_dir(inv.data);
    backtest::BacktestConfig bt;
    bt.model = model_config(inv.config);
    bt.problem = problem_template(inv.config);
    bt.tolerances = tolerances(inv.config);
    bt.strategy = backtest::parse_strategy(get<std::string>(inv.config, "backtest", "strategy"));
    bt.risk_free = get<double>(inv.config, "backtest", "risk_free");
    const auto& dates = data.returns.dates;
    const auto default_start = std::min<std::size_t>(static_cast<std::size_t>(bt.model.factor.window) + 2, dates.size() - 1);
    bt.start = get_date(inv.config, "backtest", "start").value_or(dates[default_start]);
    bt.end = get_date(inv.config, "backtest", "end").value_or(dates.back());

    const auto rep = backtest::run_backtest(bt, data);

    csv::LabeledMatrix nav;
    nav.corner = "date";
    nav.row_labels = date_labels(rep.dates);
    nav.col_labels = {"portfolio", "benchmark", "excess", "drawdown"};
    const auto n = rep.portfolio_nv.size();
    nav.values.resize(n, 4);
    nav.values.col(0) = rep.portfolio_nv;
    nav.values.col(1) = rep.benchmark_nv;
    nav.values.col(2) = rep.excess_nv;
    double peak = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        peak = std::max(peak, rep.portfolio_nv(t));
        nav.values(t, 3) = peak > 0.0 ? 1.0 - rep.portfolio_nv(t) / peak : 0.0;
    }
    emit_csv(inv, "nav.csv", nav);

    const auto& m = rep.metrics;
    json rebal = json::array();
    for (const auto& r : rep.rebalances)
        rebal.push_back({{"date", r.date.str()}, {"status", r.status}, {"iterations", r.iterations},
                         {"kkt_residual", r.kkt_residual}, {"turnover", r.turnover}, {"predicted_vol", r.predicted_vol},
                         {"realized_vol", r.realized_vol}, {"carried_forward", r.carried_forward}, {"message", r.message}});
    emit_json(inv, "report.json",
              {{"metrics", {{"ann_return", m.ann_return}, {"ann_vol", m.ann_vol}, {"sharpe", m.sharpe},
                            {"info_ratio", m.info_ratio}, {"tracking_error", m.tracking_error},
                            {"max_drawdown", m.max_drawdown}, {"success_ratio", m.success_ratio},
                            {"zero_vol", m.zero_vol}, {"days", m.days}, {"months", m.months}}},
               {"final_nv", {{"portfolio", rep.portfolio_nv(n - 1)}, {"benchmark", rep.benchmark_nv(n - 1)},
                             {"excess", rep.excess_nv(n - 1)}}},
               {"zero_filled_stock_days", rep.zero_filled},
               {"rebalances", rebal}});
    emit_manifest(inv, {{"data", data_summary(data)}, {"start", bt.start.str()}, {"end", bt.end.str()},
                        {"model", model_parameters(bt.model)},
                        {"tolerances", {{"stationarity", bt.tolerances.stationarity},
                                        {"feasibility", bt.tolerances.feasibility},
                                        {"max_iter_factor", bt.tolerances.max_iter_factor}}}});
}

void cmd_plot(Invocation& inv) {
    bool any = false;
    const auto nav_path = inv.data / "nav.csv";
    if (fs::exists(nav_path)) {
        const auto nav = csv::read(nav_path, kModule);
        auto column = [&](const std::string& name) {
            auto it = std::find(nav.col_labels.begin(), nav.col_labels.end(), name);
            if (it == nav.col_labels.end()) fail("MalformedInput", "nav.csv lacks a column", {{"column", name}});
            const Eigen::VectorXd c = nav.values.col(it - nav.col_labels.begin());
            return std::vector<double>(c.data(), c.data() + c.size());
        };
        svg::write_file(inv.out / "nav.svg",
                        svg::line_chart("Net value", {{"portfolio", column("portfolio")}, {"benchmark", column("benchmark")},
                                                      {"excess", column("excess")}},
                                        nav.row_labels));
        svg::write_file(inv.out / "drawdown.svg", svg::line_chart("Drawdown", {{"drawdown", column("drawdown")}}, nav.row_labels));
        inv.outputs.insert(inv.outputs.end(), {"nav.svg", "drawdown.svg"});
        any = true;
    }
    const auto bias_path = inv.data / "bias_deciles.csv";
    if (fs::exists(bias_path)) {
        const auto b = csv::read(bias_path, kModule);
        std::vector<double> vals;
        for (Eigen::Index i = 0; i < b.values.rows(); ++i) vals.push_back(b.values(i, 0));
        svg::write_file(inv.out / "bias_deciles.svg", svg::bar_chart("Bias statistic by forecast-vol decile", b.row_labels, vals, 1.0));
        inv.outputs.emplace_back("bias_deciles.svg");
        any = true;
    }
    if (!any) fail("MissingInput", "no nav.csv or bias_deciles.csv in the data directory", {{"dir", inv.data.string()}});
    emit_manifest(inv, json::object());
}

const std::map<std::string, std::function<void(Invocation&)>>& commands() {
    static const std::map<std::string, std::function<void(Invocation&)>> table = {
        {"synth", cmd_synth},       {"ingest", cmd_ingest},   {"exposures", cmd_exposures}, {"regress", cmd_regress},
        {"cov", cmd_cov},           {"idio", cmd_idio},       {"snapshot", cmd_snapshot},   {"bias", cmd_bias},
        {"optimize", cmd_optimize}, {"backtest", cmd_backtest}, {"plot", cmd_plot}};
    return table;
}

void print_error(const std::string& module, const std::string& code, const std::string& message, const Error::Context& ctx) {
    json j = {{"module", module}, {"code", code}, {"message", message}, {"context", ctx}};
    std::cerr << j.dump() << std::endl;
}

}  // namespace

json default_config() {
    return {{"model",
             {{"window", 252},
              {"half_life", 90.0},
              {"nw_lags", 2},
              {"monthly_scale", 21},
              {"idio_window", 252},
              {"idio_half_life", 90.0},
              {"idio_nw_lags", 5},
              {"floor_fraction", 0.25},
              {"e0", 1.05},
              {"structural", true},
              {"mad_multiplier", 3.0},
              {"standardization", "equal"},
              {"regression_weighting", "sqrt_cap"},
              {"default_orthogonalization", true}}},
            {"synth", synth_defaults()},
            {"portfolio",
             {{"objective", "min_risk"},
              {"mode", "absolute"},
              {"lambda", 1.0},
              {"long_only", true},
              {"budget", 1.0},
              {"per_stock_cap", nullptr},
              {"industry_neutral", false},
              {"size_band", nullptr},
              {"size_factor", "Size"}}},
            {"backtest", {{"start", nullptr}, {"end", nullptr}, {"strategy", "optimized"}, {"risk_free", 0.0}}},
            {"bias", {{"first", nullptr}, {"step", 21}, {"count", nullptr}, {"horizon", 21}, {"groups", 10}}},
            {"solver", {{"stationarity", 1e-6}, {"feasibility", 1e-8}, {"max_iter_factor", 10}}},
            {"as_of", nullptr}};
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail("InvalidOverride", "override must look like key.path=value", {{"override", assignment}});
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &config;
    std::size_t pos = 0;
    while (true) {
        const auto dot = path.find('.', pos);
        const std::string key = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (!node->is_object() || !node->contains(key)) fail("UnknownConfigKey", "unknown configuration key", {{"key", path}});
        node = &(*node)[key];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    if (node->is_object()) fail("InvalidOverride", "cannot override a whole section", {{"key", path}});
    *node = value;
}

int run(int argc, char** argv) {
    CLI::App app{"Structured multi-factor equity risk model, portfolio optimizer and backtester"};
    app.require_subcommand(1);
    std::string data_dir, config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;

    for (const auto& [name, fn] : commands()) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--data", data_dir, name == "synth" ? "Output data directory (alias of --out)" : "Input data directory");
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--seed", seed, "Random seed (synthetic market)");
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--set", overrides, "Override a configuration key: section.key=value");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        print_error(kModule, "UsageError", e.what(), {});
        return 2;
    }

    try {
        Invocation inv;
        inv.command = app.get_subcommands().front()->get_name();
        inv.config = default_config();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) fail("FileNotFound", "cannot open config file", {{"path", config_path}});
            json file;
            try {
                file = json::parse(in);
            } catch (const json::exception& e) {
                fail("InvalidConfig", std::string("config is not valid JSON: ") + e.what(), {{"path", config_path}});
            }
            merge(inv.config, file, "");
        }
        for (const auto& o : overrides) apply_override(inv.config, o);
        if (seed) inv.config["synth"]["seed"] = *seed;

        if (inv.command == "synth") {
            const std::string target = !out_dir.empty() ? out_dir : data_dir;
            if (target.empty()) fail("UsageError", "synth needs --out or --data");
            inv.out = target;
        } else {
            if (data_dir.empty()) fail("UsageError", "--data is required");
            inv.data = data_dir;
            inv.out = out_dir.empty() ? fs::path(data_dir) / inv.command : fs::path(out_dir);
        }
        fs::create_directories(inv.out);
        commands().at(inv.command)(inv);
        return 0;
    } catch (const Error& e) {
        print_error(e.module(), e.code(), e.message(), e.context());
        return 1;
    } catch (const std::exception& e) {
        print_error(kModule, "Internal", e.what(), {});
        return 1;
    }
}

}  // namespace factorrisk::cli
