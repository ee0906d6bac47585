#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace factorrisk {

/// Calendar date, serialized as ISO `YYYY-MM-DD`.
struct Date {
    int year = 1970;
    unsigned month = 1;
    unsigned day = 1;

    static Date parse(std::string_view text);
    std::string str() const;

    /// Days since 1970-01-01.
    std::int64_t serial() const;
    static Date from_serial(std::int64_t serial);
    /// 0 = Sunday ... 6 = Saturday.
    unsigned weekday() const;
    bool same_month(const Date& other) const { return year == other.year && month == other.month; }

    auto operator<=>(const Date&) const = default;
};

/// Opaque stock identifier (e.g. an exchange ticker). Never empty.
class StockId {
public:
    explicit StockId(std::string id);
    const std::string& str() const noexcept { return id_; }
    auto operator<=>(const StockId&) const = default;

private:
    std::string id_;
};

using Universe = std::vector<StockId>;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Dates x stocks daily simple returns. Invalid cells hold NaN and `valid == false`.
struct ReturnsPanel {
    std::vector<Date> dates;
    Universe stocks;
    Eigen::MatrixXd values;
    BoolMatrix valid;

    std::optional<Eigen::Index> date_index(const Date& date) const;
    std::optional<Eigen::Index> stock_index(const StockId& id) const;
    Eigen::Index valid_count() const { return valid.count(); }
};

enum class FactorKind { style, industry, country };

std::string_view to_string(FactorKind kind);

/// Per-date stocks x factors exposure matrix.
///
/// Style cells may be NaN (missing, to be filled by the exposure pipeline);
/// industry columns are one-hot and the single country column is all ones.
struct ExposureTensor {
    Date date;
    Universe stocks;
    std::vector<std::string> factors;
    std::vector<FactorKind> kinds;
    Eigen::MatrixXd values;

    std::vector<Eigen::Index> columns_of(FactorKind kind) const;
    Eigen::Index country_column() const;
    std::optional<Eigen::Index> factor_index(std::string_view name) const;

    /// Position of each stock's industry within `columns_of(industry)`.
    std::vector<int> industry_membership() const;

    /// Throws MissingIndustry, MultipleIndustry, NoCountryColumn, MalformedCell.
    void validate() const;

    ExposureTensor restricted_to(const Universe& universe) const;
};

/// One date's cross-section of a per-stock scalar (caps, benchmark weights, alphas).
struct StockVector {
    Date date;
    Universe stocks;
    Eigen::VectorXd values;

    std::optional<Eigen::Index> index_of(const StockId& id) const;
    /// Values reordered to `universe`; every id must be present.
    Eigen::VectorXd select(const Universe& universe) const;
};

/// Date-keyed step function: a value dated d applies from d until the next entry.
template <class T>
class DatedSeries {
public:
    void insert(Date date, T value) { entries_.insert_or_assign(date, std::move(value)); }

    /// Latest entry dated strictly before `date`, or nullptr.
    const T* latest_before(const Date& date) const {
        auto it = entries_.lower_bound(date);
        if (it == entries_.begin()) return nullptr;
        return &std::prev(it)->second;
    }
    /// Latest entry dated on or before `date`, or nullptr.
    const T* latest_at_or_before(const Date& date) const {
        auto it = entries_.upper_bound(date);
        if (it == entries_.begin()) return nullptr;
        return &std::prev(it)->second;
    }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }

private:
    std::map<Date, T> entries_;
};

struct MarketData {
    ReturnsPanel returns;
    DatedSeries<ExposureTensor> exposures;
    DatedSeries<StockVector> caps;
    DatedSeries<StockVector> benchmark;
    DatedSeries<StockVector> alpha;
};

struct AlignedUniverse {
    Universe stocks;
    /// Per input, the ids that were not in the intersection.
    std::vector<Universe> dropped;
};

// Ingestion. All throw factorrisk::Error with module "panel_store".
ReturnsPanel ingest_returns(const std::filesystem::path& path);
ExposureTensor ingest_exposures(const std::filesystem::path& path, const Date& date);
StockVector ingest_caps(const std::filesystem::path& path, const Date& date);
StockVector ingest_benchmark(const std::filesystem::path& path, const Date& date);
StockVector ingest_alpha(const std::filesystem::path& path, const Date& date);

void write_returns(const std::filesystem::path& path, const ReturnsPanel& panel);
void write_exposures(const std::filesystem::path& path, const ExposureTensor& tensor);
void write_stock_vector(const std::filesystem::path& path, const StockVector& vec, std::string_view value_name);

/// Reads a data directory laid out as
/// `returns.csv`, `exposures/<date>.csv`, `caps/<date>.csv`,
/// `benchmark/<date>.csv` (optional) and `alpha/<date>.csv` (optional).
MarketData load_data_dir(const std::filesystem::path& dir);

/// Sorted intersection of the given universes. Throws EmptyIntersection.
AlignedUniverse align_universe(const std::vector<Universe>& universes);

/// Universe on which a cross-section can be formed at `date`: stocks with
/// exposures and caps dated strictly before `date` and a column in the returns panel.
AlignedUniverse align_for_date(const MarketData& data, const Date& date);

/// Stable 64-bit FNV-1a hash of the ordered ids, as 16 hex digits.
std::string universe_hash(const Universe& universe);

Universe make_universe(const std::vector<std::string>& ids);

}  // namespace factorrisk
