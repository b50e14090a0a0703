#include "stevo/stability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stevo {

std::string_view to_string(SystemState s) {
    switch (s) {
        case SystemState::Deterministic: return "deterministic";
        case SystemState::Branching: return "branching";
        case SystemState::Cluelessness: return "cluelessness";
        case SystemState::OverconfidentAnomaly: return "overconfident_anomaly";
    }
    return "unknown";
}

double token_entropy(const TokenDistribution& dist) {
    STEVO_REQUIRE(!dist.probs.empty() || dist.residual > 0.0, ErrorCode::InvalidDistribution, "empty distribution");
    STEVO_REQUIRE(std::isfinite(dist.residual) && dist.residual >= 0.0, ErrorCode::InvalidDistribution,
                  "residual mass must be non-negative");
    double total = dist.residual;
    double h = 0.0;
    for (const auto& [token, p] : dist.probs) {
        STEVO_REQUIRE(std::isfinite(p) && p > 0.0, ErrorCode::InvalidDistribution,
                      "token probabilities must be positive");
        total += p;
        h -= p * std::log(p);
    }
    STEVO_REQUIRE(std::abs(total - 1.0) <= 1e-6, ErrorCode::InvalidDistribution,
                  "probabilities sum to " + std::to_string(total));
    if (dist.residual > 0.0) h -= dist.residual * std::log(dist.residual);
    return std::max(h, 0.0);
}

std::vector<double> select_high_entropy(const std::vector<double>& series, double fraction) {
    STEVO_REQUIRE(!series.empty(), ErrorCode::EmptySeries, "entropy series is empty");
    STEVO_REQUIRE(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "fraction must lie in (0, 1]");
    const auto k = std::min(series.size(), static_cast<std::size_t>(std::ceil(fraction * series.size() - 1e-12)));
    std::vector<std::size_t> idx(series.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return series[a] > series[b]; });
    idx.resize(std::max<std::size_t>(k, 1));
    std::sort(idx.begin(), idx.end());
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(series[i]);
    return out;
}

double predictive_entropy(const std::vector<double>& series) {
    STEVO_REQUIRE(!series.empty(), ErrorCode::EmptySeries, "entropy series is empty");
    return std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
}

double varentropy(const std::vector<double>& series) {
    const double mean = predictive_entropy(series);
    const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
    if (*lo == *hi) return 0.0;
    double ss = 0.0;
    for (double h : series) ss += (h - mean) * (h - mean);
    return -std::sqrt(ss / static_cast<double>(series.size()));
}

double stability_reward(double pe, double ve, double alpha, double beta) {
    STEVO_REQUIRE(alpha >= 0.0 && beta >= 0.0, ErrorCode::InvalidArgument, "alpha and beta must be non-negative");
    return -(alpha * pe + beta / (1.0 + std::max(ve, kVarentropyFloor)));
}

SystemState classify_state(double pe, double ve, double pe_threshold, double std_threshold) {
    STEVO_REQUIRE(pe_threshold > 0.0 && std_threshold > 0.0, ErrorCode::InvalidArgument,
                  "thresholds must be positive");
    const bool high_pe = pe >= pe_threshold;
    const bool high_dispersion = -ve >= std_threshold;
    if (high_pe) return high_dispersion ? SystemState::Branching : SystemState::Cluelessness;
    return high_dispersion ? SystemState::OverconfidentAnomaly : SystemState::Deterministic;
}

StabilityScore score_series(const std::vector<double>& entropies, const StabilityConfig& cfg) {
    StabilityScore s;
    if (entropies.empty()) {
        s.pe = 0.0;
        s.ve = kVarentropyFloor;
    } else {
        const auto top = select_high_entropy(entropies, cfg.fraction);
        s.pe = predictive_entropy(top);
        s.ve = varentropy(top);
    }
    s.r_sta = stability_reward(s.pe, s.ve, cfg.alpha, cfg.beta);
    s.state = classify_state(s.pe, s.ve, cfg.pe_threshold, cfg.std_threshold);
    return s;
}

}  // namespace stevo
