#include "stevo/memory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace stevo {
namespace {

template <typename T>
void put_le(std::string& out, T v) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    template <typename T>
    T get() {
        using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
        if (pos_ + sizeof(T) > data_.size()) throw Error(ErrorCode::CorruptFile, "memory file is truncated");
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    const std::string& data_;
    std::size_t pos_ = sizeof(kMemoryMagic) - 1;
};

template <typename M>
bool same(const M& a, const M& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

}  // namespace

bool ExperienceRecord::operator==(const ExperienceRecord& o) const {
    if (!same(key, o.key) || latents.size() != o.latents.size()) return false;
    for (std::size_t t = 0; t < latents.size(); ++t)
        if (!same(latents[t], o.latents[t])) return false;
    return cost == o.cost && uncertainty == o.uncertainty && access_count == o.access_count;
}

std::string_view to_string(InsertOutcome o) {
    switch (o) {
        case InsertOutcome::Stored: return "stored";
        case InsertOutcome::ReplacedWeakest: return "replaced_weakest";
        case InsertOutcome::Rejected: return "rejected";
    }
    return "unknown";
}

double retention_score(const ExperienceRecord& r, double epsilon) {
    STEVO_REQUIRE(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
    return (1.0 + std::log(static_cast<double>(r.access_count) + 1.0)) / (r.cost * std::abs(r.uncertainty) + epsilon);
}

MemoryStore::MemoryStore(std::size_t capacity, double epsilon) : capacity_(capacity), epsilon_(epsilon) {
    STEVO_REQUIRE(capacity >= 1, ErrorCode::InvalidArgument, "memory capacity must be positive");
    STEVO_REQUIRE(epsilon > 0.0, ErrorCode::InvalidArgument, "epsilon must be positive");
}

MemoryStore::MemoryStore(const MemoryStore& other) {
    std::shared_lock lock(other.mutex_);
    capacity_ = other.capacity_;
    epsilon_ = other.epsilon_;
    next_sequence_ = other.next_sequence_;
    records_ = other.records_;
}

MemoryStore& MemoryStore::operator=(const MemoryStore& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    capacity_ = other.capacity_;
    epsilon_ = other.epsilon_;
    next_sequence_ = other.next_sequence_;
    records_ = other.records_;
    return *this;
}

std::size_t MemoryStore::size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
}

std::vector<ExperienceRecord> MemoryStore::retrieve(const RowVectorXd& query, std::size_t k) {
    STEVO_REQUIRE(k >= 1, ErrorCode::InvalidArgument, "k must be positive");
    std::unique_lock lock(mutex_);
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(records_.size());
    for (std::size_t i = 0; i < records_.size(); ++i) {
        STEVO_REQUIRE(records_[i].key.size() == query.size(), ErrorCode::DimensionMismatch,
                      "query and memory keys differ in dimension");
        scored.emplace_back(records_[i].key.dot(query), i);
    }
    std::stable_sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return records_[a.second].sequence < records_[b.second].sequence;
    });
    scored.resize(std::min(k, scored.size()));
    std::vector<ExperienceRecord> out;
    out.reserve(scored.size());
    for (const auto& [score, i] : scored) {
        ++records_[i].access_count;
        out.push_back(records_[i]);
    }
    return out;
}

std::size_t MemoryStore::weakest_index() const {
    std::size_t best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const double s = retention_score(records_[i], epsilon_);
        if (s < best_score || (s == best_score && records_[i].sequence < records_[best].sequence)) {
            best = i;
            best_score = s;
        }
    }
    return best;
}

InsertOutcome MemoryStore::insert(ExperienceRecord record) {
    STEVO_REQUIRE(!record.latents.empty(), ErrorCode::InvalidArgument, "experience record has no latents");
    STEVO_REQUIRE(record.cost > 0.0, ErrorCode::InvalidArgument, "experience cost must be positive");
    record.key = record.key.cast<float>().cast<double>();
    for (auto& l : record.latents) l = l.cast<float>().cast<double>();
    std::unique_lock lock(mutex_);
    record.sequence = next_sequence_++;
    if (records_.size() < capacity_) {
        records_.push_back(std::move(record));
        return InsertOutcome::Stored;
    }
    const auto weakest = weakest_index();
    if (retention_score(record, epsilon_) > retention_score(records_[weakest], epsilon_)) {
        records_.erase(records_.begin() + static_cast<std::ptrdiff_t>(weakest));
        records_.push_back(std::move(record));
        return InsertOutcome::ReplacedWeakest;
    }
    return InsertOutcome::Rejected;
}

void MemoryStore::purge(std::size_t capacity) {
    std::unique_lock lock(mutex_);
    while (records_.size() > capacity) records_.erase(records_.begin() + static_cast<std::ptrdiff_t>(weakest_index()));
}

double MemoryStore::median_cost() const {
    std::shared_lock lock(mutex_);
    if (records_.empty()) return std::numeric_limits<double>::infinity();
    std::vector<double> costs;
    costs.reserve(records_.size());
    for (const auto& r : records_) costs.push_back(r.cost);
    std::sort(costs.begin(), costs.end());
    const auto n = costs.size();
    return n % 2 ? costs[n / 2] : 0.5 * (costs[n / 2 - 1] + costs[n / 2]);
}

std::vector<ExperienceRecord> MemoryStore::records() const {
    std::shared_lock lock(mutex_);
    return records_;
}

bool MemoryStore::operator==(const MemoryStore& other) const {
    if (this == &other) return true;
    std::shared_lock a(mutex_);
    std::shared_lock b(other.mutex_);
    return records_ == other.records_;
}

// Layout: magic, u64 count, then per record: u64 key length + f32 key,
// u64 T, u64 N, u64 d, T * N * d f32 (row-major), f64 cost, f64 uncertainty,
// u64 access count.
void MemoryStore::persist(const std::filesystem::path& path) const {
    std::unique_lock lock(mutex_);
    std::string out(kMemoryMagic);
    put_le<std::uint64_t>(out, records_.size());
    for (const auto& r : records_) {
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(r.key.size()));
        for (Eigen::Index i = 0; i < r.key.size(); ++i) put_le<float>(out, static_cast<float>(r.key(i)));
        put_le<std::uint64_t>(out, r.latents.size());
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(r.latents.front().rows()));
        put_le<std::uint64_t>(out, static_cast<std::uint64_t>(r.latents.front().cols()));
        for (const auto& l : r.latents) {
            STEVO_REQUIRE(l.rows() == r.latents.front().rows() && l.cols() == r.latents.front().cols(),
                          ErrorCode::ShapeMismatch, "latents within a record differ in shape");
            for (Eigen::Index i = 0; i < l.rows(); ++i)
                for (Eigen::Index j = 0; j < l.cols(); ++j) put_le<float>(out, static_cast<float>(l(i, j)));
        }
        put_le<double>(out, r.cost);
        put_le<double>(out, r.uncertainty);
        put_le<std::uint64_t>(out, r.access_count);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

MemoryStore MemoryStore::load(const std::filesystem::path& path, std::size_t capacity, double epsilon) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string data = ss.str();
    const std::size_t magic_len = sizeof(kMemoryMagic) - 1;
    if (data.size() < magic_len || data.compare(0, magic_len, kMemoryMagic) != 0)
        throw Error(ErrorCode::CorruptFile, path.string() + " is not a memory file");

    Reader in(data);
    const auto count = in.get<std::uint64_t>();
    MemoryStore store(std::max<std::size_t>(capacity, 1), epsilon);
    for (std::uint64_t n = 0; n < count; ++n) {
        ExperienceRecord r;
        const auto klen = in.get<std::uint64_t>();
        if (klen * 4 > in.remaining()) throw Error(ErrorCode::CorruptFile, "memory file is truncated");
        r.key.resize(static_cast<Eigen::Index>(klen));
        for (Eigen::Index i = 0; i < r.key.size(); ++i) r.key(i) = in.get<float>();
        const auto t = in.get<std::uint64_t>();
        const auto rows = in.get<std::uint64_t>();
        const auto cols = in.get<std::uint64_t>();
        if (t == 0 || (rows * cols > 0 && t * rows * cols * 4 > in.remaining()))
            throw Error(ErrorCode::CorruptFile, "memory record has a bad latent block");
        for (std::uint64_t s = 0; s < t; ++s) {
            MatrixXd l(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            for (Eigen::Index i = 0; i < l.rows(); ++i)
                for (Eigen::Index j = 0; j < l.cols(); ++j) l(i, j) = in.get<float>();
            r.latents.push_back(std::move(l));
        }
        r.cost = in.get<double>();
        r.uncertainty = in.get<double>();
        r.access_count = in.get<std::uint64_t>();
        if (!(r.cost > 0.0)) throw Error(ErrorCode::CorruptFile, "memory record has a non-positive cost");
        r.sequence = store.next_sequence_++;
        store.records_.push_back(std::move(r));
    }
    if (in.remaining() != 0) throw Error(ErrorCode::CorruptFile, "trailing bytes after memory records");
    if (store.records_.size() > store.capacity_) store.capacity_ = store.records_.size();
    return store;
}

bool admission_gate(const ScheduleTrajectory& trajectory, double utility, double r_sta, double cost_budget,
                    const AdmissionConfig& cfg) {
    if (trajectory.length() == 0) return false;
    return utility >= 1.0 && r_sta >= cfg.min_r_sta && static_cast<double>(trajectory.token_cost) <= cost_budget;
}

double default_cost_budget(const MemoryStore& store, const AdmissionConfig& cfg) {
    return cfg.cost_multiplier * store.median_cost();
}

}  // namespace stevo
