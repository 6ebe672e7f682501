#pragma once

#include "loadcast/digest.hpp"
#include "loadcast/nn/models.hpp"
#include "loadcast/nn/train.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

namespace loadcast::nn {

// Checkpoint container, version 1 (little-endian):
//
//   "LOADCAST-CKPT\0"   14-byte magic
//   u32                 format version
//   u64                 header length N
//   N bytes             JSON header: architecture, shape, train config, tensor
//                       names and shapes
//   f64[C] mean, f64[C] sd, u8[C] constant flags,
//   f64 target_mean, f64 target_sd, u8 target_constant
//   f64[...]            tensor values, row-major, in header order
//
// All doubles are stored as raw IEEE-754 bits so a write/read round trip is
// exact.

inline constexpr std::string_view kCheckpointMagic{"LOADCAST-CKPT\0", 14};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Checkpoint {
    ModelParameters model;
    TrainConfig config;
};

namespace detail {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string_view bytes(std::size_t n) {
        need(n);
        auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string serialize_checkpoint(const ModelParameters& p, const TrainConfig& cfg) {
    nlohmann::json header;
    header["architecture"] = std::string(to_string(p.shape.architecture));
    header["window_hours"] = p.shape.window_hours;
    header["channels"] = p.shape.channels;
    header["horizon"] = p.shape.horizon;
    header["hidden"] = p.shape.hidden;
    header["train"] = cfg;
    header["tensors"] = nlohmann::json::array();
    for (const auto& t : p.tensors) {
        header["tensors"].push_back({{"name", t.name}, {"rows", t.tensor.rows()}, {"cols", t.tensor.cols()}});
    }
    const std::string h = header.dump();

    std::string out(kCheckpointMagic);
    detail::put<std::uint32_t>(out, kCheckpointVersion);
    detail::put<std::uint64_t>(out, h.size());
    out += h;
    const std::size_t C = p.shape.channels;
    if (p.norm.mean.size() != C || p.norm.sd.size() != C || p.norm.constant.size() != C) {
        throw ShapeError("normalization statistics do not match " + std::to_string(C) + " channels");
    }
    for (double v : p.norm.mean) detail::put(out, v);
    for (double v : p.norm.sd) detail::put(out, v);
    for (bool b : p.norm.constant) detail::put<std::uint8_t>(out, b ? 1 : 0);
    detail::put(out, p.norm.target_mean);
    detail::put(out, p.norm.target_sd);
    detail::put<std::uint8_t>(out, p.norm.target_constant ? 1 : 0);
    for (const auto& t : p.tensors) {
        out.append(reinterpret_cast<const char*>(t.tensor.value.data()),
                   static_cast<std::size_t>(t.tensor.size()) * sizeof(double));
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
    detail::Reader in(data);
    if (in.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw ParseError("not a loadcast checkpoint");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = in.get<std::uint64_t>();
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.bytes(static_cast<std::size_t>(header_len)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }

    Checkpoint ck;
    ModelShape shape;
    shape.architecture = architecture_from(header.at("architecture").get<std::string>());
    shape.window_hours = header.at("window_hours").get<std::size_t>();
    shape.channels = header.at("channels").get<std::size_t>();
    shape.horizon = header.at("horizon").get<std::size_t>();
    shape.hidden = header.at("hidden").get<std::vector<std::size_t>>();
    ck.config = header.at("train").get<TrainConfig>();
    ck.model = make_model(shape);

    const auto& tensors = header.at("tensors");
    if (tensors.size() != ck.model.tensors.size()) throw ParseError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& t = ck.model.tensors[i];
        if (tensors[i].at("name") != t.name || tensors[i].at("rows") != t.tensor.rows() ||
            tensors[i].at("cols") != t.tensor.cols()) {
            throw ParseError("checkpoint tensor '" + t.name + "' has unexpected layout");
        }
    }

    const std::size_t C = shape.channels;
    auto& norm = ck.model.norm;
    norm.mean.resize(C);
    norm.sd.resize(C);
    norm.constant.resize(C);
    for (auto& v : norm.mean) v = in.get<double>();
    for (auto& v : norm.sd) v = in.get<double>();
    for (std::size_t c = 0; c < C; ++c) norm.constant[c] = in.get<std::uint8_t>() != 0;
    norm.target_mean = in.get<double>();
    norm.target_sd = in.get<double>();
    norm.target_constant = in.get<std::uint8_t>() != 0;
    for (auto& t : ck.model.tensors) {
        const auto raw = in.bytes(static_cast<std::size_t>(t.tensor.size()) * sizeof(double));
        std::memcpy(t.tensor.value.data(), raw.data(), raw.size());
    }
    if (!in.done()) throw ParseError("trailing bytes after checkpoint payload");
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParameters& p, const TrainConfig& cfg) {
    write_file(path, serialize_checkpoint(p, cfg));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return deserialize_checkpoint(read_file(path));
}

} // namespace loadcast::nn
