#pragma once

// Spatio-temporal communication topologies: agent identities, per-iteration
// adjacency, and compilation of an adjacency into an executable agent order.

#include "stevo/error.hpp"
#include "stevo/types.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace stevo {

struct Message {
    std::string role;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct AgentSpec {
    int id = 0;
    std::string model_id;
    std::string profile;
    std::vector<std::string> tools;
    std::vector<Message> state;
};

// Throws InvalidArgument unless ids are 0..N-1 in order and every profile is non-empty.
void validate_roster(const std::vector<AgentSpec>& agents);

struct Topology {
    Adjacency adjacency;
    MatrixXd node_features;
    int iteration = 0;
};

struct ExecutionPlan {
    std::vector<int> order;
    std::vector<std::vector<int>> levels;
    std::vector<std::pair<int, int>> removed_edges;
};

struct ScheduleTrajectory {
    std::vector<Topology> topologies;
    std::vector<MatrixXd> edge_probs;
    std::vector<MatrixXd> latents;
    double utility = 0.0;
    double stability = 0.0;
    long long token_cost = 0;

    std::size_t length() const { return topologies.size(); }
};

enum class AnchorKind { Chain, Ring, Star, Tree, Complete, Empty };

std::string_view to_string(AnchorKind kind);
AnchorKind parse_anchor_kind(std::string_view name);

// Throws ShapeMismatch, NonBinaryEntry or SelfLoop; returns the integer adjacency.
Adjacency validate_adjacency(const MatrixXd& a, int n);
void validate_adjacency(const Adjacency& a, int n);
bool is_valid_adjacency(const Adjacency& a, int n) noexcept;

// Canonical presets. Star: hub 0 exchanges messages with every spoke.
// Tree: binary heap layout, parent -> child.
Adjacency anchor_topology(AnchorKind kind, int n);

int edge_count(const Adjacency& a);
std::vector<std::pair<int, int>> edge_list(const Adjacency& a);

// Kahn level-by-level sort. Cycles are broken first by repeatedly deleting the
// in-cycle edge with the lowest logit (ties and missing logits: smallest (i, j)).
ExecutionPlan compile_execution_order(const Adjacency& a, const std::optional<MatrixXd>& edge_logits = std::nullopt);

// The adjacency minus the plan's removed edges.
Adjacency remaining_adjacency(const Adjacency& a, const ExecutionPlan& plan);

// Trim, case-fold and collapse internal whitespace.
std::string normalize_answer(std::string_view text);

// Majority vote over normalized answers; ties go to the answer whose earliest
// supporter comes first in plan.order.
std::string aggregate_answers(const std::vector<std::pair<int, std::string>>& answers, const ExecutionPlan& plan);

}  // namespace stevo
