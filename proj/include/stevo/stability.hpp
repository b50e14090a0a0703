#pragma once

// Token-entropy based perception of the system state.

#include "stevo/error.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stevo {

struct TokenDistribution {
    std::vector<std::pair<std::string, double>> probs;
    double residual = 0.0;
};

struct StabilityConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double fraction = 0.15;
    double pe_threshold = 0.5;
    double std_threshold = 0.3;
};

enum class SystemState { Deterministic, Branching, Cluelessness, OverconfidentAnomaly };

std::string_view to_string(SystemState s);

struct StabilityScore {
    double pe = 0.0;
    double ve = 0.0;
    double r_sta = 0.0;
    SystemState state = SystemState::Deterministic;
};

inline constexpr double kVarentropyFloor = -0.9;

// -sum p ln p, the residual mass counted as one extra bucket.
double token_entropy(const TokenDistribution& dist);

// ceil(fraction * K) largest entropies, earlier positions first among ties,
// returned in their original order.
std::vector<double> select_high_entropy(const std::vector<double>& series, double fraction);

double predictive_entropy(const std::vector<double>& series);

// Negative population standard deviation.
double varentropy(const std::vector<double>& series);

// -(alpha * pe + beta / (1 + max(ve, -0.9))).
double stability_reward(double pe, double ve, double alpha, double beta);

SystemState classify_state(double pe, double ve, double pe_threshold, double std_threshold);

// Selection, PE, VE, reward and state for one token stream. An empty stream
// scores as maximally unstable: pe = 0 and ve at the floor.
StabilityScore score_series(const std::vector<double>& entropies, const StabilityConfig& cfg);

}  // namespace stevo
