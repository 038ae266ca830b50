#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "leap/error.hpp"
#include "leap/geometry.hpp"
#include "leap/label2d.hpp"
#include "leap/taxonomy.hpp"

namespace leap {

struct PaintedCloud;

/// Writes to a sibling temporary file and renames it over `path`, so readers never
/// observe a truncated file. Creates missing parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
        auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        v = to_little(v);
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.append(p, sizeof(T));
    }
    void put_magic(std::string_view magic) { buf_.append(magic); }
    const std::string& bytes() const { return buf_; }
    void reserve(std::size_t n) { buf_.reserve(n); }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }
    void expect_magic(std::string_view magic) {
        need(magic.size());
        if (bytes_.substr(pos_, magic.size()) != magic) throw FormatError(what_ + ": bad magic");
        pos_ += magic.size();
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    void need(std::size_t n) const {
        if (remaining() < n) throw FormatError(what_ + ": truncated");
    }
    void expect_end() const {
        if (remaining() != 0) throw FormatError(what_ + ": trailing bytes");
    }

private:
    std::string_view bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// SemanticKITTI .bin: little-endian f32 (x, y, z, intensity) per point.
PointCloud read_point_cloud(const std::filesystem::path& path);
void write_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);

// KITTI odometry poses: 12 floats per line, row-major [R | t].
std::vector<RigidTransform> read_poses(const std::filesystem::path& path);
void write_poses(const std::filesystem::path& path, const std::vector<RigidTransform>& poses);

// LPPM: magic, u32 version, u32 H, u32 W, u32 c, H*W coverage bytes, c x f32 per covered pixel.
inline constexpr std::uint32_t kPixelMapVersion = 1;
PixelProbMap read_pixel_prob_map(const std::filesystem::path& path);
void write_pixel_prob_map(const std::filesystem::path& path, const PixelProbMap& map);
std::string encode_pixel_prob_map(const PixelProbMap& map);
PixelProbMap decode_pixel_prob_map(std::string_view bytes);

// SemanticKITTI .label: u32 per point, class id in the lower 16 bits.
/// Throws FormatError when `expected_points` is given and differs from the file.
std::vector<Label> read_labels(const std::filesystem::path& path, std::optional<std::size_t> expected_points = {});
void write_labels(const std::filesystem::path& path, const std::vector<Label>& labels);
/// Companion confidence file: one f32 per point.
std::vector<float> read_confidences(const std::filesystem::path& path,
                                    std::optional<std::size_t> expected_points = {});
void write_confidences(const std::filesystem::path& path, const std::vector<float>& confidences);

// LPCL painted cloud: magic, u32 version, u32 c, u64 n, then per point 3 x f32 xyz,
// u8 labeled flag and, when labeled, c x f32 probabilities.
inline constexpr std::uint32_t kPaintedCloudVersion = 1;
PaintedCloud read_painted_cloud(const std::filesystem::path& path);
void write_painted_cloud(const std::filesystem::path& path, const PaintedCloud& cloud);

using Rgb = std::array<std::uint8_t, 3>;

struct Palette {
    std::vector<Rgb> classes;
    Rgb ignore{0, 0, 0};
};

/// Deterministic, visually distinct colors for `num_classes` classes.
Palette default_palette(std::size_t num_classes);

/// Binary little-endian PLY with x y z (float) and red green blue (uchar).
/// Labels equal to `ignore_label` take the ignore color.
void export_ply(const std::filesystem::path& path, const PointCloud& cloud, const std::vector<Label>& labels,
                const Palette& palette, Label ignore_label = kDefaultIgnoreLabel);

/// Zero-padded six-digit frame file name, KITTI style.
std::string frame_name(std::size_t index, std::string_view extension);

}  // namespace leap
