#include "stevo/neural/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

namespace stevo::neural {
namespace {

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

void put_f32(std::string& out, float f) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const std::string& in, std::size_t at) {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return std::bit_cast<float>(bits);
}

template <typename T>
void append_tensor(std::string& payload, nlohmann::json& manifest, const std::string& name, const T& t) {
    manifest.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", payload.size()}});
    // Row-major.
    for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index j = 0; j < t.cols(); ++j) put_f32(payload, static_cast<float>(t(i, j)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::string payload;
    nlohmann::json tensors = nlohmann::json::array();
    visit_tensors([&](const std::string& name, const auto& t) { append_tensor(payload, tensors, name, t); },
                  ckpt.params);
    if (ckpt.optimizer) {
        visit_tensors([&](const std::string& name, const auto& t) { append_tensor(payload, tensors, "adam.m/" + name, t); },
                      ckpt.optimizer->m);
        visit_tensors([&](const std::string& name, const auto& t) { append_tensor(payload, tensors, "adam.v/" + name, t); },
                      ckpt.optimizer->v);
    }
    const auto shape = shape_of(ckpt.params);
    nlohmann::json manifest = {
        {"format", 1},
        {"shape", {{"agents", shape.agents}, {"dim", shape.dim}, {"hidden", shape.hidden}}},
        {"meta", ckpt.meta},
        {"tensors", tensors},
    };
    if (ckpt.optimizer) manifest["adam_step"] = ckpt.optimizer->step;
    const std::string manifest_text = manifest.dump();

    std::string out(kCheckpointMagic);
    put_u64(out, manifest_text.size());
    out += manifest_text;
    out += payload;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string data = ss.str();

    const std::size_t magic_len = sizeof(kCheckpointMagic) - 1;
    if (data.size() < magic_len + 8 || data.compare(0, magic_len, kCheckpointMagic) != 0)
        throw Error(ErrorCode::CorruptFile, path.string() + " is not a checkpoint");
    const std::uint64_t manifest_len = get_u64(data, magic_len);
    const std::size_t payload_start = magic_len + 8 + manifest_len;
    if (manifest_len > data.size() || payload_start > data.size())
        throw Error(ErrorCode::CorruptFile, "truncated checkpoint manifest");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(data.substr(magic_len + 8, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("bad checkpoint manifest: ") + e.what());
    }

    Checkpoint ckpt;
    std::map<std::string, nlohmann::json> index;
    SchedulerShape shape;
    try {
        if (manifest.at("format").get<int>() != 1) throw Error(ErrorCode::CorruptFile, "unsupported checkpoint format");
        shape.agents = manifest.at("shape").at("agents").get<int>();
        shape.dim = manifest.at("shape").at("dim").get<int>();
        shape.hidden = manifest.at("shape").at("hidden").get<int>();
        ckpt.meta = manifest.value("meta", nlohmann::json::object());
        for (const auto& t : manifest.at("tensors")) index[t.at("name").get<std::string>()] = t;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::CorruptFile, std::string("bad checkpoint manifest: ") + e.what());
    }

    auto read_into = [&](const std::string& name, auto& t) {
        const auto it = index.find(name);
        if (it == index.end()) throw Error(ErrorCode::CorruptFile, "checkpoint lacks tensor " + name);
        const auto rows = it->second.at("shape").at(0).get<Eigen::Index>();
        const auto cols = it->second.at("shape").at(1).get<Eigen::Index>();
        if (rows != t.rows() || cols != t.cols())
            throw Error(ErrorCode::CorruptFile, "tensor " + name + " has unexpected shape");
        const std::size_t offset = payload_start + it->second.at("offset").get<std::size_t>();
        if (offset + static_cast<std::size_t>(rows * cols) * 4 > data.size())
            throw Error(ErrorCode::CorruptFile, "tensor " + name + " runs past end of file");
        std::size_t at = offset;
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j, at += 4) t(i, j) = static_cast<double>(get_f32(data, at));
    };

    ckpt.params = allocate_params<double>(shape);
    visit_tensors([&](const std::string& name, auto& t) { read_into(name, t); }, ckpt.params);
    if (manifest.contains("adam_step")) {
        AdamState<double> st = adam_init(ckpt.params);
        st.step = manifest.at("adam_step").get<long long>();
        visit_tensors([&](const std::string& name, auto& t) { read_into("adam.m/" + name, t); }, st.m);
        visit_tensors([&](const std::string& name, auto& t) { read_into("adam.v/" + name, t); }, st.v);
        ckpt.optimizer = std::move(st);
    }
    return ckpt;
}

}  // namespace stevo::neural
