#include "factorrisk/panel_store.hpp"

#include "factorrisk/csv.hpp"
#include "factorrisk/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <numeric>
#include <set>

namespace factorrisk {

namespace {

constexpr const char* kModule = "panel_store";

[[noreturn]] void fail(const std::string& code, const std::string& message, Error::Context ctx = {}) {
    throw Error(kModule, code, message, std::move(ctx));
}

std::chrono::year_month_day to_ymd(const Date& d) {
    return std::chrono::year_month_day{std::chrono::year{d.year}, std::chrono::month{d.month},
                                       std::chrono::day{d.day}};
}

Universe parse_ids(const std::vector<std::string>& labels, const std::filesystem::path& path) {
    Universe ids;
    ids.reserve(labels.size());
    std::set<std::string> seen;
    for (const auto& label : labels) {
        if (label.empty()) fail("MalformedHeader", "empty stock id", {{"path", path.string()}});
        if (!seen.insert(label).second) fail("DuplicateStock", "stock id repeated", {{"path", path.string()}, {"stock", label}});
        ids.emplace_back(label);
    }
    return ids;
}

StockVector ingest_stock_vector(const std::filesystem::path& path, const Date& date, std::string_view value_name) {
    auto m = csv::read(path, kModule);
    if (m.corner != "stock" || m.col_labels.size() != 1 || m.col_labels.front() != value_name) {
        fail("MalformedHeader", "expected header 'stock," + std::string(value_name) + "'", {{"path", path.string()}});
    }
    StockVector out;
    out.date = date;
    out.stocks = parse_ids(m.row_labels, path);
    out.values = m.values.col(0);
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
        if (!std::isfinite(out.values(i))) {
            fail("MalformedCell", "missing or non-finite value",
                 {{"path", path.string()}, {"stock", out.stocks[static_cast<std::size_t>(i)].str()}});
        }
    }
    return out;
}

Date date_from_filename(const std::filesystem::path& p) { return Date::parse(p.stem().string()); }

template <class Fn>
void for_each_dated_file(const std::filesystem::path& dir, Fn&& fn) {
    if (!std::filesystem::is_directory(dir)) return;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) fn(f, date_from_filename(f));
}

}  // namespace

// ---------------------------------------------------------------- Date

Date Date::parse(std::string_view text) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    const std::string s(text);
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3 || s[4] != '-' || s[7] != '-') {
        fail("MalformedDate", "expected YYYY-MM-DD", {{"value", s}});
    }
    Date out{y, m, d};
    if (!to_ymd(out).ok()) fail("MalformedDate", "not a calendar date", {{"value", s}});
    return out;
}

std::string Date::str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", year, month, day);
    return buf;
}

std::int64_t Date::serial() const { return std::chrono::sys_days{to_ymd(*this)}.time_since_epoch().count(); }

Date Date::from_serial(std::int64_t serial) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{serial}}};
    return Date{static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day())};
}

unsigned Date::weekday() const { return std::chrono::weekday{std::chrono::sys_days{to_ymd(*this)}}.c_encoding(); }

// ---------------------------------------------------------------- StockId

StockId::StockId(std::string id) : id_(std::move(id)) {
    if (id_.empty()) fail("EmptyStockId", "stock id must be non-empty");
}

Universe make_universe(const std::vector<std::string>& ids) {
    Universe u;
    u.reserve(ids.size());
    for (const auto& id : ids) u.emplace_back(id);
    return u;
}

// ---------------------------------------------------------------- ReturnsPanel

std::optional<Eigen::Index> ReturnsPanel::date_index(const Date& date) const {
    auto it = std::lower_bound(dates.begin(), dates.end(), date);
    if (it == dates.end() || *it != date) return std::nullopt;
    return static_cast<Eigen::Index>(it - dates.begin());
}

std::optional<Eigen::Index> ReturnsPanel::stock_index(const StockId& id) const {
    auto it = std::find(stocks.begin(), stocks.end(), id);
    if (it == stocks.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - stocks.begin());
}

ReturnsPanel ingest_returns(const std::filesystem::path& path) {
    auto m = csv::read(path, kModule);
    if (m.corner != "date") fail("MalformedHeader", "first column must be 'date'", {{"path", path.string()}});
    if (m.row_labels.empty() || m.col_labels.empty()) fail("EmptyPanel", "returns file has no data", {{"path", path.string()}});

    ReturnsPanel panel;
    panel.stocks = parse_ids(m.col_labels, path);

    std::vector<std::pair<Date, Eigen::Index>> order;
    order.reserve(m.row_labels.size());
    for (std::size_t i = 0; i < m.row_labels.size(); ++i)
        order.emplace_back(Date::parse(m.row_labels[i]), static_cast<Eigen::Index>(i));
    std::sort(order.begin(), order.end());
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i].first == order[i - 1].first)
            fail("DuplicateDate", "date appears twice", {{"path", path.string()}, {"date", order[i].first.str()}});
    }

    const auto nd = static_cast<Eigen::Index>(order.size());
    const auto ns = static_cast<Eigen::Index>(panel.stocks.size());
    panel.values.resize(nd, ns);
    panel.valid.resize(nd, ns);
    for (Eigen::Index i = 0; i < nd; ++i) {
        const auto& [date, src] = order[static_cast<std::size_t>(i)];
        panel.dates.push_back(date);
        for (Eigen::Index j = 0; j < ns; ++j) {
            const double v = m.values(src, j);
            if (std::isnan(v)) {
                panel.valid(i, j) = false;
            } else if (!std::isfinite(v) || std::abs(v) >= 1.0) {
                fail("MalformedCell", "return must be finite with |r| < 1",
                     {{"path", path.string()}, {"date", date.str()}, {"stock", panel.stocks[static_cast<std::size_t>(j)].str()}});
            } else {
                panel.valid(i, j) = true;
            }
            panel.values(i, j) = v;
        }
    }
    return panel;
}

void write_returns(const std::filesystem::path& path, const ReturnsPanel& panel) {
    csv::LabeledMatrix m;
    m.corner = "date";
    for (const auto& d : panel.dates) m.row_labels.push_back(d.str());
    for (const auto& s : panel.stocks) m.col_labels.push_back(s.str());
    m.values = panel.values;
    for (Eigen::Index i = 0; i < m.values.rows(); ++i)
        for (Eigen::Index j = 0; j < m.values.cols(); ++j)
            if (!panel.valid(i, j)) m.values(i, j) = std::numeric_limits<double>::quiet_NaN();
    csv::write(path, m);
}

// ---------------------------------------------------------------- ExposureTensor

std::string_view to_string(FactorKind kind) {
    switch (kind) {
        case FactorKind::style: return "style";
        case FactorKind::industry: return "ind";
        case FactorKind::country: return "country";
    }
    return "style";
}

std::vector<Eigen::Index> ExposureTensor::columns_of(FactorKind kind) const {
    std::vector<Eigen::Index> cols;
    for (std::size_t k = 0; k < kinds.size(); ++k)
        if (kinds[k] == kind) cols.push_back(static_cast<Eigen::Index>(k));
    return cols;
}

Eigen::Index ExposureTensor::country_column() const {
    auto cols = columns_of(FactorKind::country);
    if (cols.size() != 1) fail("NoCountryColumn", "exposures need exactly one country column", {{"date", date.str()}});
    return cols.front();
}

std::optional<Eigen::Index> ExposureTensor::factor_index(std::string_view name) const {
    for (std::size_t k = 0; k < factors.size(); ++k)
        if (factors[k] == name) return static_cast<Eigen::Index>(k);
    return std::nullopt;
}

std::vector<int> ExposureTensor::industry_membership() const {
    const auto ind = columns_of(FactorKind::industry);
    std::vector<int> member(stocks.size(), -1);
    for (std::size_t n = 0; n < stocks.size(); ++n) {
        for (std::size_t c = 0; c < ind.size(); ++c) {
            if (values(static_cast<Eigen::Index>(n), ind[c]) == 1.0) {
                member[n] = static_cast<int>(c);
                break;
            }
        }
    }
    return member;
}

void ExposureTensor::validate() const {
    const Error::Context ctx{{"date", date.str()}};
    if (factors.size() != kinds.size() || values.cols() != static_cast<Eigen::Index>(factors.size()) ||
        values.rows() != static_cast<Eigen::Index>(stocks.size())) {
        fail("DimensionMismatch", "exposure tensor shape is inconsistent", ctx);
    }
    const auto country = columns_of(FactorKind::country);
    if (country.empty()) fail("NoCountryColumn", "no country column", ctx);
    if (country.size() > 1) fail("MalformedHeader", "more than one country column", ctx);
    const auto ind = columns_of(FactorKind::industry);
    for (Eigen::Index n = 0; n < values.rows(); ++n) {
        const std::string stock = stocks[static_cast<std::size_t>(n)].str();
        if (values(n, country.front()) != 1.0) {
            fail("MalformedCell", "country exposure must be 1", {{"date", date.str()}, {"stock", stock}});
        }
        int ones = 0;
        for (auto c : ind) {
            const double v = values(n, c);
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                fail("MalformedCell", "industry exposure must be 0 or 1", {{"date", date.str()}, {"stock", stock}});
            }
        }
        if (ones == 0) fail("MissingIndustry", "stock has no industry", {{"date", date.str()}, {"stock", stock}});
        if (ones > 1) fail("MultipleIndustry", "stock has more than one industry", {{"date", date.str()}, {"stock", stock}});
        for (auto s : columns_of(FactorKind::style)) {
            if (std::isinf(values(n, s))) fail("MalformedCell", "style exposure is infinite", {{"date", date.str()}, {"stock", stock}});
        }
    }
}

ExposureTensor ExposureTensor::restricted_to(const Universe& universe) const {
    ExposureTensor out;
    out.date = date;
    out.stocks = universe;
    out.factors = factors;
    out.kinds = kinds;
    out.values.resize(static_cast<Eigen::Index>(universe.size()), values.cols());
    for (std::size_t i = 0; i < universe.size(); ++i) {
        auto it = std::find(stocks.begin(), stocks.end(), universe[i]);
        if (it == stocks.end()) fail("UnknownStock", "stock not in exposure tensor", {{"stock", universe[i].str()}});
        out.values.row(static_cast<Eigen::Index>(i)) = values.row(it - stocks.begin());
    }
    return out;
}

ExposureTensor ingest_exposures(const std::filesystem::path& path, const Date& date) {
    auto m = csv::read(path, kModule);
    if (m.corner != "stock") fail("MalformedHeader", "first column must be 'stock'", {{"path", path.string()}});
    ExposureTensor t;
    t.date = date;
    t.stocks = parse_ids(m.row_labels, path);
    for (const auto& label : m.col_labels) {
        const auto colon = label.find(':');
        const std::string prefix = colon == std::string::npos ? std::string{} : label.substr(0, colon);
        const std::string name = colon == std::string::npos ? label : label.substr(colon + 1);
        if (prefix == "style") {
            t.kinds.push_back(FactorKind::style);
        } else if (prefix == "ind") {
            t.kinds.push_back(FactorKind::industry);
        } else if (prefix == "country") {
            t.kinds.push_back(FactorKind::country);
        } else {
            fail("MalformedHeader", "column needs a style:, ind: or country: prefix", {{"path", path.string()}, {"column", label}});
        }
        if (name.empty()) fail("MalformedHeader", "empty factor name", {{"path", path.string()}});
        t.factors.push_back(name);
    }
    t.values = m.values;
    for (Eigen::Index n = 0; n < t.values.rows(); ++n) {
        for (std::size_t k = 0; k < t.kinds.size(); ++k) {
            if (t.kinds[k] != FactorKind::style && std::isnan(t.values(n, static_cast<Eigen::Index>(k)))) {
                fail("MalformedCell", "industry and country cells must be present",
                     {{"path", path.string()}, {"stock", t.stocks[static_cast<std::size_t>(n)].str()}, {"column", t.factors[k]}});
            }
        }
    }
    t.validate();
    return t;
}

void write_exposures(const std::filesystem::path& path, const ExposureTensor& tensor) {
    csv::LabeledMatrix m;
    m.corner = "stock";
    for (const auto& s : tensor.stocks) m.row_labels.push_back(s.str());
    for (std::size_t k = 0; k < tensor.factors.size(); ++k)
        m.col_labels.push_back(std::string(to_string(tensor.kinds[k])) + ":" + tensor.factors[k]);
    m.values = tensor.values;
    csv::write(path, m);
}

// ---------------------------------------------------------------- StockVector

std::optional<Eigen::Index> StockVector::index_of(const StockId& id) const {
    auto it = std::find(stocks.begin(), stocks.end(), id);
    if (it == stocks.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - stocks.begin());
}

Eigen::VectorXd StockVector::select(const Universe& universe) const {
    std::map<StockId, Eigen::Index> index;
    for (std::size_t i = 0; i < stocks.size(); ++i) index.emplace(stocks[i], static_cast<Eigen::Index>(i));
    Eigen::VectorXd out(static_cast<Eigen::Index>(universe.size()));
    for (std::size_t i = 0; i < universe.size(); ++i) {
        auto it = index.find(universe[i]);
        if (it == index.end()) fail("UnknownStock", "stock missing from cross-section", {{"stock", universe[i].str()}, {"date", date.str()}});
        out(static_cast<Eigen::Index>(i)) = values(it->second);
    }
    return out;
}

StockVector ingest_caps(const std::filesystem::path& path, const Date& date) {
    auto v = ingest_stock_vector(path, date, "cap");
    for (Eigen::Index i = 0; i < v.values.size(); ++i) {
        if (!(v.values(i) > 0.0)) {
            fail("MalformedCell", "market cap must be positive",
                 {{"path", path.string()}, {"stock", v.stocks[static_cast<std::size_t>(i)].str()}});
        }
    }
    return v;
}

StockVector ingest_benchmark(const std::filesystem::path& path, const Date& date) {
    auto v = ingest_stock_vector(path, date, "weight");
    if ((v.values.array() < 0.0).any()) fail("MalformedCell", "benchmark weights must be non-negative", {{"path", path.string()}});
    if (std::abs(v.values.sum() - 1.0) > 1e-9) fail("BenchmarkNotNormalized", "benchmark weights must sum to 1", {{"path", path.string()}});
    return v;
}

StockVector ingest_alpha(const std::filesystem::path& path, const Date& date) {
    return ingest_stock_vector(path, date, "alpha");
}

void write_stock_vector(const std::filesystem::path& path, const StockVector& vec, std::string_view value_name) {
    csv::LabeledMatrix m;
    m.corner = "stock";
    m.col_labels = {std::string(value_name)};
    for (const auto& s : vec.stocks) m.row_labels.push_back(s.str());
    m.values = vec.values;
    csv::write(path, m);
}

// ---------------------------------------------------------------- directory

MarketData load_data_dir(const std::filesystem::path& dir) {
    MarketData data;
    data.returns = ingest_returns(dir / "returns.csv");
    for_each_dated_file(dir / "exposures", [&](const auto& f, const Date& d) { data.exposures.insert(d, ingest_exposures(f, d)); });
    for_each_dated_file(dir / "caps", [&](const auto& f, const Date& d) { data.caps.insert(d, ingest_caps(f, d)); });
    for_each_dated_file(dir / "benchmark", [&](const auto& f, const Date& d) { data.benchmark.insert(d, ingest_benchmark(f, d)); });
    for_each_dated_file(dir / "alpha", [&](const auto& f, const Date& d) { data.alpha.insert(d, ingest_alpha(f, d)); });
    if (data.exposures.empty()) fail("MissingInput", "no exposure files found", {{"dir", (dir / "exposures").string()}});
    if (data.caps.empty()) fail("MissingInput", "no market cap files found", {{"dir", (dir / "caps").string()}});

    const auto& first = data.exposures.begin()->second;
    for (const auto& [date, t] : data.exposures) {
        if (t.factors != first.factors || t.kinds != first.kinds)
            fail("MalformedHeader", "all exposure files must share the same factor columns", {{"date", date.str()}});
    }
    return data;
}

AlignedUniverse align_universe(const std::vector<Universe>& universes) {
    AlignedUniverse out;
    if (universes.empty()) fail("EmptyIntersection", "no universes to align");
    std::set<StockId> common(universes.front().begin(), universes.front().end());
    for (std::size_t i = 1; i < universes.size(); ++i) {
        std::set<StockId> next(universes[i].begin(), universes[i].end());
        std::set<StockId> both;
        std::set_intersection(common.begin(), common.end(), next.begin(), next.end(), std::inserter(both, both.begin()));
        common = std::move(both);
    }
    if (common.empty()) fail("EmptyIntersection", "inputs share no stocks");
    out.stocks.assign(common.begin(), common.end());
    for (const auto& u : universes) {
        Universe dropped;
        for (const auto& id : u)
            if (!common.count(id)) dropped.push_back(id);
        std::sort(dropped.begin(), dropped.end());
        out.dropped.push_back(std::move(dropped));
    }
    return out;
}

AlignedUniverse align_for_date(const MarketData& data, const Date& date) {
    const auto* x = data.exposures.latest_before(date);
    const auto* caps = data.caps.latest_before(date);
    if (!x || !caps) fail("MissingInput", "no exposures or caps dated before " + date.str(), {{"date", date.str()}});
    return align_universe({data.returns.stocks, x->stocks, caps->stocks});
}

std::string universe_hash(const Universe& universe) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ULL;
    };
    for (const auto& id : universe) {
        for (unsigned char c : id.str()) mix(c);
        mix(0);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace factorrisk
