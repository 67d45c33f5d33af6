// Model file layout (all integers little-endian):
//   "ODEN" | u32 version | u32 descriptor length | descriptor bytes (UTF-8)
//   u32 layer count | per layer 8 x u32: kind, in, out, weight n, c, h, w, bias length
//   parameters as f64, layer order, weight before bias.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "odenet/error.hpp"
#include "odenet/nn.hpp"

namespace odenet::nn {
namespace {

constexpr char kMagic[4] = {'O', 'D', 'E', 'N'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kShapeWords = 8;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n)
            throw Error(ErrorKind::Truncated, std::string("truncated payload while reading ") + what);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64() {
        need(8, "parameters");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    std::string bytes_;
    std::size_t pos_ = 0;
};

} // namespace

void save_model(const Network& net, const std::filesystem::path& path) {
    std::string out(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(net.descriptor().size()));
    out += net.descriptor();
    put_u32(out, static_cast<std::uint32_t>(net.layers().size()));
    for (const Layer& l : net.layers()) {
        const Shape& ws = l.weight.shape();
        for (std::size_t v : {static_cast<std::size_t>(l.spec.kind), l.spec.in_channels, l.spec.out_channels,
                              ws.n, ws.c, ws.h, ws.w, l.bias.size()})
            put_u32(out, static_cast<std::uint32_t>(v));
    }
    for (const Layer& l : net.layers()) {
        for (double v : l.weight.data()) put_f64(out, v);
        for (double v : l.bias.data()) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::Io, "cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Network load_model(const std::filesystem::path& path, std::optional<std::string_view> expected_descriptor) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Io, "cannot open " + path.string());
    Reader r{std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>())};

    if (r.bytes(4, "magic") != std::string(kMagic, 4))
        throw Error(ErrorKind::BadMagic, "bad magic, expected ODEN in " + path.string());
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw Error(ErrorKind::VersionMismatch, "model format version " + std::to_string(version) +
                                                    " is not supported (expected " + std::to_string(kVersion) + ")");
    const std::uint32_t dlen = r.u32("descriptor length");
    std::string descriptor = r.bytes(dlen, "descriptor");
    if (expected_descriptor && descriptor != *expected_descriptor)
        throw Error(ErrorKind::DescriptorMismatch,
                    "descriptor mismatch: file has '" + descriptor + "', expected '" +
                        std::string(*expected_descriptor) + "'");

    const std::uint32_t count = r.u32("layer count");
    r.need(static_cast<std::size_t>(count) * kShapeWords * 4, "shape table");
    std::vector<LayerSpec> specs;
    std::vector<std::array<std::uint32_t, kShapeWords>> table(count);
    for (auto& row : table)
        for (auto& v : row) v = r.u32("shape table");

    std::size_t param_count = 0;
    for (const auto& row : table) {
        if (row[0] > static_cast<std::uint32_t>(LayerKind::ConcatSkip))
            throw Error(ErrorKind::InconsistentPayload, "unknown layer kind " + std::to_string(row[0]));
        specs.push_back({static_cast<LayerKind>(row[0]), row[1], row[2],
                         row[0] == static_cast<std::uint32_t>(LayerKind::Conv3x3Same) && row[7] != 0});
        param_count += static_cast<std::size_t>(row[3]) * row[4] * row[5] * row[6] + row[7];
    }
    // Validates channel chaining and allocates parameter tensors of the expected shapes.
    Network proto(descriptor, specs);
    for (std::size_t i = 0; i < count; ++i) {
        const Layer& l = proto.layers()[i];
        const Shape& ws = l.weight.shape();
        const auto& row = table[i];
        if (row[3] != ws.n || row[4] != ws.c || row[5] != ws.h || row[6] != ws.w || row[7] != l.bias.size())
            throw Error(ErrorKind::InconsistentPayload,
                        "shape table entry " + std::to_string(i) + " inconsistent with layer kind");
    }
    if (r.remaining() < param_count * 8)
        throw Error(ErrorKind::Truncated, "truncated payload: expected " + std::to_string(param_count * 8) +
                                              " parameter bytes, found " + std::to_string(r.remaining()));
    if (r.remaining() > param_count * 8)
        throw Error(ErrorKind::InconsistentPayload, "shape table inconsistent with payload length (" +
                                                        std::to_string(r.remaining() - param_count * 8) +
                                                        " trailing bytes)");
    std::vector<Layer> layers(proto.layers().begin(), proto.layers().end());
    for (Layer& l : layers) {
        for (double& v : l.weight.data()) v = r.f64();
        for (double& v : l.bias.data()) v = r.f64();
        if (!l.weight.all_finite() || !l.bias.all_finite())
            throw Error(ErrorKind::NonFinite, "model contains non-finite weights");
    }
    return Network(std::move(descriptor), std::move(layers), proto.input_channels());
}

} // namespace odenet::nn
