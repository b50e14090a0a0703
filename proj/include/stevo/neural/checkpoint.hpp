#pragma once

// Portable checkpoint container; the byte layout is described in
// docs/checkpoint_format.md.

#include "stevo/neural/adam.hpp"
#include "stevo/neural/params.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace stevo::neural {

inline constexpr char kCheckpointMagic[] = "STEVO1\n";

struct Checkpoint {
    SchedulerParams<double> params;
    std::optional<AdamState<double>> optimizer;
    nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stevo::neural
