#include "egomatch/image_io.hpp"

#include "le_bytes.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace egomatch {

namespace {

using detail::get_le;
using detail::put_le;

static_assert(std::numeric_limits<float>::is_iec559, "float32 must be IEEE-754");

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok += static_cast<char>(bytes[pos++]);
    if (tok.empty()) throw DataError("truncated PPM header");
    return tok;
}

int parse_positive(const std::string& tok, const char* what) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(tok, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != tok.size() || v <= 0) throw DataError(std::string("bad PPM ") + what + ": '" + tok + "'");
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Image& image) {
    const std::string header =
        "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.values.size());
    for (float v : image.values) {
        const long q = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
        out.push_back(static_cast<std::uint8_t>(q));
    }
    return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    if (ppm_token(bytes, pos) != "P6") throw DataError("not a binary PPM (P6)");
    const int w = parse_positive(ppm_token(bytes, pos), "width");
    const int h = parse_positive(ppm_token(bytes, pos), "height");
    if (parse_positive(ppm_token(bytes, pos), "maxval") != 255) throw DataError("PPM maxval must be 255");
    ++pos;  // single whitespace byte before the raster
    const std::size_t n = static_cast<std::size_t>(w) * h * 3;
    if (bytes.size() < pos + n) throw DataError("truncated PPM raster");
    Image img(w, h);
    for (std::size_t i = 0; i < n; ++i) img.values[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
    return img;
}

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + flow.uv.size() * 4);
    put_le(out, kFloMagic);
    put_le(out, static_cast<std::int32_t>(flow.width));
    put_le(out, static_cast<std::int32_t>(flow.height));
    for (double v : flow.uv) put_le(out, static_cast<float>(v));
    return out;
}

FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) throw DataError("truncated .flo header");
    if (get_le<float>(bytes.data()) != kFloMagic) throw DataError(".flo magic mismatch");
    const auto w = get_le<std::int32_t>(bytes.data() + 4);
    const auto h = get_le<std::int32_t>(bytes.data() + 8);
    if (w <= 0 || h <= 0) throw DataError(".flo has non-positive dimensions");
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2;
    if (bytes.size() != 12 + n * 4) throw DataError(".flo payload length does not match its header");
    FlowField flow(w, h);
    for (std::size_t i = 0; i < n; ++i) flow.uv[i] = get_le<float>(bytes.data() + 12 + 4 * i);
    return flow;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

namespace {

template <class Fn>
auto with_path(const std::filesystem::path& path, Fn fn) {
    try {
        return fn();
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Image& image) { write_file_bytes(path, encode_ppm(image)); }

Image read_ppm(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return with_path(path, [&] { return decode_ppm(bytes); });
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) { write_file_bytes(path, encode_flo(flow)); }

FlowField read_flo(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    return with_path(path, [&] { return decode_flo(bytes); });
}

}  // namespace egomatch
