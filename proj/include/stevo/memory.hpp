#pragma once

// Capacity-bounded store of successful scheduling trajectories, retrieved by
// query similarity and evicted by retention score.

#include "stevo/error.hpp"
#include "stevo/stgraph.hpp"
#include "stevo/types.hpp"

#include <filesystem>
#include <mutex>
#include <shared_mutex>
#include <string_view>
#include <vector>

namespace stevo {

struct ExperienceRecord {
    RowVectorXd key;
    std::vector<MatrixXd> latents;
    double cost = 1.0;
    double uncertainty = 0.0;
    std::uint64_t access_count = 0;
    std::uint64_t sequence = 0;  // insertion order, used for age ties

    // Field-wise, ignoring sequence.
    bool operator==(const ExperienceRecord& o) const;
};

enum class InsertOutcome { Stored, ReplacedWeakest, Rejected };

std::string_view to_string(InsertOutcome o);

struct AdmissionConfig {
    double min_r_sta = -2.0;
    double cost_multiplier = 4.0;
};

inline constexpr char kMemoryMagic[] = "STEVOMEM1\n";

// (1 + ln(access + 1)) / (cost * |uncertainty| + epsilon).
double retention_score(const ExperienceRecord& r, double epsilon);

class MemoryStore {
public:
    explicit MemoryStore(std::size_t capacity = 256, double epsilon = 1e-6);

    MemoryStore(const MemoryStore& other);
    MemoryStore& operator=(const MemoryStore& other);

    std::size_t capacity() const { return capacity_; }
    double epsilon() const { return epsilon_; }
    std::size_t size() const;
    bool empty() const { return size() == 0; }

    // Top-k by dot product, ties by insertion order; bumps access counts.
    std::vector<ExperienceRecord> retrieve(const RowVectorXd& query, std::size_t k);

    // Keys and latents are rounded to single precision on the way in, matching
    // the persisted width.
    InsertOutcome insert(ExperienceRecord record);

    // Evicts minimum-score records (ties: oldest) until size <= capacity.
    void purge(std::size_t capacity);

    // Median cost of the stored records, or +inf when empty.
    double median_cost() const;

    std::vector<ExperienceRecord> records() const;

    void persist(const std::filesystem::path& path) const;
    static MemoryStore load(const std::filesystem::path& path, std::size_t capacity = 256, double epsilon = 1e-6);

    bool operator==(const MemoryStore& other) const;

private:
    std::size_t weakest_index() const;

    std::size_t capacity_;
    double epsilon_;
    std::uint64_t next_sequence_ = 0;
    std::vector<ExperienceRecord> records_;
    mutable std::shared_mutex mutex_;
};

// Success, stability at least min_r_sta, and cost within cost_budget.
bool admission_gate(const ScheduleTrajectory& trajectory, double utility, double r_sta, double cost_budget,
                    const AdmissionConfig& cfg = {});

// cost_multiplier times the store's median cost (+inf when empty).
double default_cost_budget(const MemoryStore& store, const AdmissionConfig& cfg = {});

}  // namespace stevo
