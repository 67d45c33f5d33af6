// PFM (heights) and 16-bit PGM (images) readers and writers.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include "odenet/error.hpp"
#include "odenet/raster.hpp"

namespace odenet {
namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

// Netpbm-style header scanner: whitespace separated tokens with '#' comments.
class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : bytes_(bytes) {}

    std::string token() {
        skip_space_and_comments();
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !is_space(bytes_[pos_]) && bytes_[pos_] != '#') ++pos_;
        if (start == pos_) throw Error(ErrorKind::BadHeader, "unexpected end of header");
        return bytes_.substr(start, pos_ - start);
    }

    // The payload starts after exactly one whitespace byte following the last token.
    std::size_t payload_offset() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
            throw Error(ErrorKind::Truncated, "missing payload");
        return pos_ + 1;
    }

    const std::optional<double>& spacing() const { return spacing_; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (is_space(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                const std::size_t end = bytes_.find('\n', pos_);
                const std::string line =
                    bytes_.substr(pos_ + 1, (end == std::string::npos ? bytes_.size() : end) - pos_ - 1);
                parse_comment(line);
                pos_ = end == std::string::npos ? bytes_.size() : end + 1;
            } else {
                break;
            }
        }
    }

    void parse_comment(const std::string& line) {
        const auto at = line.find("spacing=");
        if (at == std::string::npos) return;
        std::istringstream ss(line.substr(at + 8));
        double v = 0.0;
        if (ss >> v) spacing_ = v;
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
    std::optional<double> spacing_;
};

std::size_t parse_dim(const std::string& tok) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(tok, &used);
    } catch (const std::exception&) {
        throw Error(ErrorKind::BadDimensions, "invalid dimension '" + tok + "'");
    }
    if (used != tok.size() || v <= 0)
        throw Error(ErrorKind::BadDimensions, "dimensions must be positive, got '" + tok + "'");
    return static_cast<std::size_t>(v);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

HeightGrid load_height_grid(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    HeaderReader header(bytes);
    const std::string magic = header.token();
    if (magic == "PF")
        throw Error(ErrorKind::UnsupportedChannels, "unsupported channel count: color PFM (PF)");
    if (magic != "Pf") throw Error(ErrorKind::BadMagic, "bad magic '" + magic + "', expected Pf");
    const std::size_t w = parse_dim(header.token());
    const std::size_t h = parse_dim(header.token());
    const std::string scale_tok = header.token();
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw Error(ErrorKind::BadHeader, "invalid PFM scale '" + scale_tok + "'");
    }
    if (scale == 0.0 || !std::isfinite(scale))
        throw Error(ErrorKind::BadHeader, "PFM scale must be non-zero");
    const bool little = scale < 0.0;
    const std::size_t offset = header.payload_offset();
    const std::size_t need = w * h * 4;
    if (bytes.size() - offset < need)
        throw Error(ErrorKind::Truncated, "truncated payload: need " + std::to_string(need) +
                                              " bytes, have " + std::to_string(bytes.size() - offset));

    std::vector<double> values(w * h);
    const bool swap = little != (std::endian::native == std::endian::little);
    for (std::size_t row = 0; row < h; ++row) {
        const std::size_t y = h - 1 - row; // bottom row first
        for (std::size_t x = 0; x < w; ++x) {
            std::uint32_t bits;
            std::memcpy(&bits, bytes.data() + offset + (row * w + x) * 4, 4);
            if (swap) bits = __builtin_bswap32(bits);
            const float f = std::bit_cast<float>(bits);
            if (!std::isfinite(f))
                throw Error(ErrorKind::NonFinite, "NaN or Inf in PFM payload at (" +
                                                      std::to_string(x) + ", " + std::to_string(y) + ")");
            values[y * w + x] = static_cast<double>(f);
        }
    }
    return HeightGrid(w, h, header.spacing().value_or(1.0), std::move(values));
}

void save_height_grid(const HeightGrid& grid, const std::filesystem::path& path) {
    grid.check_finite();
    std::string out = "Pf\n# spacing=" + format_double(grid.spacing()) + "\n" +
                      std::to_string(grid.width()) + " " + std::to_string(grid.height()) + "\n-1.0\n";
    const std::size_t w = grid.width(), h = grid.height();
    const std::size_t header = out.size();
    out.resize(header + w * h * 4);
    for (std::size_t row = 0; row < h; ++row) {
        const std::size_t y = h - 1 - row;
        for (std::size_t x = 0; x < w; ++x) {
            auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(grid(x, y)));
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            std::memcpy(out.data() + header + (row * w + x) * 4, &bits, 4);
        }
    }
    write_file(path, out);
}

ImageGrid load_image(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    HeaderReader header(bytes);
    const std::string magic = header.token();
    if (magic != "P5") throw Error(ErrorKind::BadMagic, "bad magic '" + magic + "', expected P5");
    const std::size_t w = parse_dim(header.token());
    const std::size_t h = parse_dim(header.token());
    const std::string max_tok = header.token();
    if (max_tok != "255" && max_tok != "65535")
        throw Error(ErrorKind::BadMaxval, "maxval must be 255 or 65535, got " + max_tok);
    const unsigned maxval = max_tok == "255" ? 255u : 65535u;
    const std::size_t bps = maxval == 255u ? 1 : 2;
    const std::size_t offset = header.payload_offset();
    if (bytes.size() - offset < w * h * bps) throw Error(ErrorKind::Truncated, "truncated payload");

    std::vector<double> values(w * h);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
    for (std::size_t i = 0; i < w * h; ++i) {
        const unsigned s = bps == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
        values[i] = static_cast<double>(s) / static_cast<double>(maxval);
    }
    return ImageGrid(w, h, std::move(values));
}

void save_image(const ImageGrid& image, const std::filesystem::path& path) {
    std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) +
                      "\n65535\n";
    const std::size_t header = out.size();
    out.resize(header + image.size() * 2);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const auto s = static_cast<std::uint16_t>(std::floor(image.values()[i] * 65535.0 + 0.5));
        out[header + 2 * i] = static_cast<char>(s >> 8);
        out[header + 2 * i + 1] = static_cast<char>(s & 0xff);
    }
    write_file(path, out);
}

} // namespace odenet
