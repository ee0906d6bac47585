#include "factorrisk/stats.hpp"

#include "factorrisk/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace factorrisk::stats {

std::vector<double> valid_values(const Eigen::VectorXd& v) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::isfinite(v(i))) out.push_back(v(i));
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) return std::nan("");
    const std::size_t n = values.size();
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(values.begin(), mid, values.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

double quantile_linear(std::vector<double> values, double q) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    q = std::clamp(q, 0.0, 1.0);
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double mean(const std::vector<double>& values) {
    if (values.empty()) return std::nan("");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_std(const std::vector<double>& values) {
    if (values.size() < 2) return std::nan("");
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

Eigen::VectorXd wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                    const char* module, double rank_tol) {
    const Eigen::VectorXd sw = weights.cwiseSqrt();
    const Eigen::MatrixXd a = sw.asDiagonal() * design;
    const Eigen::VectorXd b = sw.cwiseProduct(y);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(rank_tol);
    if (qr.rank() < design.cols()) {
        throw Error(module, "RankDeficient", "weighted design matrix is rank deficient",
                    {{"rank", std::to_string(qr.rank())}, {"columns", std::to_string(design.cols())}});
    }
    return qr.solve(b);
}

}  // namespace factorrisk::stats
