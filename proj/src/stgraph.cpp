#include "stevo/stgraph.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <tuple>

namespace stevo {

void validate_roster(const std::vector<AgentSpec>& agents) {
    STEVO_REQUIRE(!agents.empty(), ErrorCode::InvalidArgument, "agent roster is empty");
    for (std::size_t i = 0; i < agents.size(); ++i) {
        STEVO_REQUIRE(agents[i].id == static_cast<int>(i), ErrorCode::InvalidArgument,
                      "agent ids must be contiguous 0..N-1, got " + std::to_string(agents[i].id) + " at " +
                          std::to_string(i));
        STEVO_REQUIRE(!agents[i].profile.empty(), ErrorCode::EmptyText,
                      "agent " + std::to_string(i) + " has an empty profile");
    }
}

std::string_view to_string(AnchorKind kind) {
    switch (kind) {
        case AnchorKind::Chain: return "chain";
        case AnchorKind::Ring: return "ring";
        case AnchorKind::Star: return "star";
        case AnchorKind::Tree: return "tree";
        case AnchorKind::Complete: return "complete";
        case AnchorKind::Empty: return "empty";
    }
    return "unknown";
}

AnchorKind parse_anchor_kind(std::string_view name) {
    for (auto k : {AnchorKind::Chain, AnchorKind::Ring, AnchorKind::Star, AnchorKind::Tree, AnchorKind::Complete,
                   AnchorKind::Empty})
        if (to_string(k) == name) return k;
    throw Error(ErrorCode::InvalidArgument, "unknown anchor topology '" + std::string(name) + "'");
}

Adjacency validate_adjacency(const MatrixXd& a, int n) {
    STEVO_REQUIRE(a.rows() == n && a.cols() == n, ErrorCode::ShapeMismatch,
                  "expected " + std::to_string(n) + "x" + std::to_string(n) + ", got " + std::to_string(a.rows()) +
                      "x" + std::to_string(a.cols()));
    Adjacency out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = a(i, j);
            STEVO_REQUIRE(v == 0.0 || v == 1.0, ErrorCode::NonBinaryEntry,
                          "entry (" + std::to_string(i) + "," + std::to_string(j) + ") = " + std::to_string(v));
            out(i, j) = static_cast<int>(v);
        }
        STEVO_REQUIRE(out(i, i) == 0, ErrorCode::SelfLoop, "self-loop at agent " + std::to_string(i));
    }
    return out;
}

void validate_adjacency(const Adjacency& a, int n) {
    STEVO_REQUIRE(a.rows() == n && a.cols() == n, ErrorCode::ShapeMismatch,
                  "expected " + std::to_string(n) + "x" + std::to_string(n) + ", got " + std::to_string(a.rows()) +
                      "x" + std::to_string(a.cols()));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            STEVO_REQUIRE(a(i, j) == 0 || a(i, j) == 1, ErrorCode::NonBinaryEntry,
                          "entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
        STEVO_REQUIRE(a(i, i) == 0, ErrorCode::SelfLoop, "self-loop at agent " + std::to_string(i));
    }
}

bool is_valid_adjacency(const Adjacency& a, int n) noexcept {
    try {
        validate_adjacency(a, n);
        return true;
    } catch (const Error&) {
        return false;
    }
}

Adjacency anchor_topology(AnchorKind kind, int n) {
    STEVO_REQUIRE(n >= 1, ErrorCode::InvalidSize, "anchor topology needs at least one agent");
    Adjacency a = Adjacency::Zero(n, n);
    switch (kind) {
        case AnchorKind::Chain:
            for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = 1;
            break;
        case AnchorKind::Ring:
            if (n >= 2)
                for (int i = 0; i < n; ++i) a(i, (i + 1) % n) = 1;
            break;
        case AnchorKind::Star:
            for (int i = 1; i < n; ++i) a(0, i) = a(i, 0) = 1;
            break;
        case AnchorKind::Tree:
            for (int i = 1; i < n; ++i) a((i - 1) / 2, i) = 1;
            break;
        case AnchorKind::Complete:
            a.setOnes();
            a.diagonal().setZero();
            break;
        case AnchorKind::Empty:
            break;
    }
    return a;
}

int edge_count(const Adjacency& a) { return static_cast<int>(a.sum() - a.diagonal().sum()); }

std::vector<std::pair<int, int>> edge_list(const Adjacency& a) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (i != j && a(i, j)) edges.emplace_back(i, j);
    return edges;
}

namespace {

// reach(i, j) == true iff a non-empty path i -> ... -> j exists.
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> transitive_closure(const Adjacency& a) {
    const auto n = a.rows();
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> reach = (a.array() != 0);
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index i = 0; i < n; ++i)
            if (reach(i, k))
                for (Eigen::Index j = 0; j < n; ++j) reach(i, j) = reach(i, j) || reach(k, j);
    return reach;
}

}  // namespace

ExecutionPlan compile_execution_order(const Adjacency& input, const std::optional<MatrixXd>& edge_logits) {
    const int n = static_cast<int>(input.rows());
    validate_adjacency(input, n);
    if (edge_logits) {
        STEVO_REQUIRE(edge_logits->rows() == n && edge_logits->cols() == n, ErrorCode::ShapeMismatch,
                      "edge logits must be N x N");
    }

    ExecutionPlan plan;
    Adjacency a = input;
    for (;;) {
        const auto reach = transitive_closure(a);
        // An edge i->j lies on a cycle iff j reaches i.
        std::optional<std::tuple<double, int, int>> victim;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (!a(i, j) || !reach(j, i)) continue;
                const double logit = edge_logits ? (*edge_logits)(i, j) : 0.0;
                std::tuple<double, int, int> cand{logit, i, j};
                if (!victim || cand < *victim) victim = cand;
            }
        }
        if (!victim) break;
        const auto [logit, i, j] = *victim;
        a(i, j) = 0;
        plan.removed_edges.emplace_back(i, j);
    }

    std::vector<int> indegree(n, 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) indegree[j] += a(i, j);
    std::vector<bool> done(n, false);
    int scheduled = 0;
    while (scheduled < n) {
        std::vector<int> level;
        for (int v = 0; v < n; ++v)
            if (!done[v] && indegree[v] == 0) level.push_back(v);
        if (level.empty()) throw Error(ErrorCode::SchedulerFailure, "cycle survived cycle breaking");
        for (int v : level) {
            done[v] = true;
            for (int j = 0; j < n; ++j)
                if (a(v, j)) --indegree[j];
        }
        scheduled += static_cast<int>(level.size());
        plan.order.insert(plan.order.end(), level.begin(), level.end());
        plan.levels.push_back(std::move(level));
    }
    return plan;
}

Adjacency remaining_adjacency(const Adjacency& a, const ExecutionPlan& plan) {
    Adjacency out = a;
    for (const auto& [i, j] : plan.removed_edges) out(i, j) = 0;
    return out;
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

std::string aggregate_answers(const std::vector<std::pair<int, std::string>>& answers, const ExecutionPlan& plan) {
    STEVO_REQUIRE(!answers.empty(), ErrorCode::EmptyAnswerSet, "no answers to aggregate");
    std::map<int, std::size_t> pos_of;
    for (std::size_t p = 0; p < plan.order.size(); ++p) pos_of[plan.order[p]] = p;

    struct Tally {
        int count = 0;
        std::size_t first_pos = std::numeric_limits<std::size_t>::max();
    };
    std::map<std::string, Tally> tally;
    for (const auto& [agent, text] : answers) {
        auto& t = tally[normalize_answer(text)];
        ++t.count;
        const auto it = pos_of.find(agent);
        const std::size_t pos = it == pos_of.end() ? std::numeric_limits<std::size_t>::max() : it->second;
        t.first_pos = std::min(t.first_pos, pos);
    }
    const auto best = std::min_element(tally.begin(), tally.end(), [](const auto& x, const auto& y) {
        if (x.second.count != y.second.count) return x.second.count > y.second.count;
        return x.second.first_pos < y.second.first_pos;
    });
    return best->first;
}

}  // namespace stevo
