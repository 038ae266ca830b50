#include "leap/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include <unistd.h>

#include "leap/painting.hpp"

namespace leap {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw FormatError("short write to " + path.string());
        }
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PointCloud read_point_cloud(const fs::path& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() % 16 != 0) throw FormatError(path.string() + ": size is not a multiple of 16 bytes");
    detail::ByteReader in(bytes, path.string());
    PointCloud cloud;
    const std::size_t n = bytes.size() / 16;
    cloud.points.reserve(n);
    cloud.intensity.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float x = in.get<float>();
        const float y = in.get<float>();
        const float z = in.get<float>();
        cloud.points.emplace_back(x, y, z);
        cloud.intensity.push_back(in.get<float>());
    }
    return cloud;
}

void write_point_cloud(const fs::path& path, const PointCloud& cloud) {
    if (!cloud.intensity.empty() && cloud.intensity.size() != cloud.size())
        throw DimensionError("intensity count differs from point count");
    detail::ByteWriter out;
    out.reserve(cloud.size() * 16);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out.put(static_cast<float>(p.x()));
        out.put(static_cast<float>(p.y()));
        out.put(static_cast<float>(p.z()));
        out.put(cloud.intensity.empty() ? 0.0f : cloud.intensity[i]);
    }
    write_file_atomic(path, out.bytes());
}

std::vector<RigidTransform> read_poses(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open poses file " + path.string());
    std::vector<RigidTransform> poses;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        Eigen::Matrix<double, 3, 4> m;
        for (int k = 0; k < 12; ++k) {
            double v = 0.0;
            if (!(ss >> v) || !std::isfinite(v))
                throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 12 finite floats");
            m(k / 4, k % 4) = v;
        }
        std::string extra;
        if (ss >> extra) throw FormatError(path.string() + ":" + std::to_string(line_no) + ": trailing tokens");
        poses.push_back(rigid_from_matrix(m, 1e-3));
    }
    return poses;
}

void write_poses(const fs::path& path, const std::vector<RigidTransform>& poses) {
    std::ostringstream out;
    out << std::setprecision(17);
    for (const auto& pose : poses) {
        const auto m = pose.matrix();
        for (int k = 0; k < 12; ++k) out << (k ? " " : "") << m(k / 4, k % 4);
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

std::string encode_pixel_prob_map(const PixelProbMap& map) {
    detail::ByteWriter out;
    out.put_magic("LPPM");
    out.put<std::uint32_t>(kPixelMapVersion);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(map.height()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(map.width()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(map.num_classes()));
    for (std::uint8_t b : map.coverage().data()) out.put<std::uint8_t>(b);
    for (int v = 0; v < map.height(); ++v)
        for (int u = 0; u < map.width(); ++u) {
            if (!map.covered(u, v)) continue;
            for (double p : map.probs_at(u, v)) out.put(static_cast<float>(p));
        }
    return out.bytes();
}

PixelProbMap decode_pixel_prob_map(std::string_view bytes) {
    detail::ByteReader in(bytes, "LPPM");
    in.expect_magic("LPPM");
    const auto version = in.get<std::uint32_t>();
    if (version != kPixelMapVersion) throw FormatError("LPPM: unsupported version " + std::to_string(version));
    const auto h = in.get<std::uint32_t>();
    const auto w = in.get<std::uint32_t>();
    const auto c = in.get<std::uint32_t>();
    if (h == 0 || w == 0 || h > (1u << 16) || w > (1u << 16)) throw FormatError("LPPM: bad image size");
    in.need(static_cast<std::size_t>(h) * w);
    Bitmap coverage(static_cast<int>(w), static_cast<int>(h));
    std::size_t covered = 0;
    for (auto& b : coverage.data()) {
        b = in.get<std::uint8_t>();
        if (b > 1) throw FormatError("LPPM: coverage bytes must be 0 or 1");
        covered += b;
    }
    if (in.remaining() != covered * c * sizeof(float))
        throw FormatError("LPPM: payload length does not match coverage count");
    if (covered > 0 && c == 0) throw FormatError("LPPM: covered pixels with zero classes");
    std::vector<double> packed(covered * c);
    for (std::size_t px = 0; px < covered; ++px) {
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double p = in.get<float>();
            if (!(p >= 0.0 && p <= 1.0 + 1e-6)) throw FormatError("LPPM: probability outside [0, 1]");
            packed[px * c + k] = p;
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-5) throw FormatError("LPPM: pixel distribution does not sum to one");
    }
    return PixelProbMap::from_packed(coverage, c, std::move(packed));
}

PixelProbMap read_pixel_prob_map(const fs::path& path) { return decode_pixel_prob_map(read_file(path)); }

void write_pixel_prob_map(const fs::path& path, const PixelProbMap& map) {
    write_file_atomic(path, encode_pixel_prob_map(map));
}

std::vector<Label> read_labels(const fs::path& path, std::optional<std::size_t> expected_points) {
    const std::string bytes = read_file(path);
    if (bytes.size() % 4 != 0) throw FormatError(path.string() + ": size is not a multiple of 4 bytes");
    const std::size_t n = bytes.size() / 4;
    if (expected_points && *expected_points != n)
        throw FormatError(path.string() + ": " + std::to_string(n) + " labels for " +
                          std::to_string(*expected_points) + " points");
    detail::ByteReader in(bytes, path.string());
    std::vector<Label> labels(n);
    for (auto& l : labels) l = in.get<std::uint32_t>() & 0xFFFFu;
    return labels;
}

void write_labels(const fs::path& path, const std::vector<Label>& labels) {
    detail::ByteWriter out;
    out.reserve(labels.size() * 4);
    for (Label l : labels) {
        if (l > 0xFFFFu) throw FormatError("label id does not fit in 16 bits");
        out.put<std::uint32_t>(l);
    }
    write_file_atomic(path, out.bytes());
}

std::vector<float> read_confidences(const fs::path& path, std::optional<std::size_t> expected_points) {
    const std::string bytes = read_file(path);
    if (bytes.size() % 4 != 0) throw FormatError(path.string() + ": size is not a multiple of 4 bytes");
    const std::size_t n = bytes.size() / 4;
    if (expected_points && *expected_points != n)
        throw FormatError(path.string() + ": confidence count differs from point count");
    detail::ByteReader in(bytes, path.string());
    std::vector<float> conf(n);
    for (auto& c : conf) c = in.get<float>();
    return conf;
}

void write_confidences(const fs::path& path, const std::vector<float>& confidences) {
    detail::ByteWriter out;
    for (float c : confidences) out.put(c);
    write_file_atomic(path, out.bytes());
}

PaintedCloud read_painted_cloud(const fs::path& path) {
    const std::string bytes = read_file(path);
    detail::ByteReader in(bytes, path.string());
    in.expect_magic("LPCL");
    const auto version = in.get<std::uint32_t>();
    if (version != kPaintedCloudVersion) throw FormatError("LPCL: unsupported version " + std::to_string(version));
    PaintedCloud cloud;
    cloud.num_classes = in.get<std::uint32_t>();
    const auto n = in.get<std::uint64_t>();
    if (n > in.remaining() / 13) throw FormatError("LPCL: point count exceeds payload");
    cloud.points.reserve(n);
    cloud.labels.resize(n);
    std::vector<double> probs(cloud.num_classes);
    for (std::uint64_t i = 0; i < n; ++i) {
        const float x = in.get<float>();
        const float y = in.get<float>();
        const float z = in.get<float>();
        cloud.points.emplace_back(x, y, z);
        const auto flag = in.get<std::uint8_t>();
        if (flag > 1) throw FormatError("LPCL: bad label flag");
        if (!flag) continue;
        for (double& p : probs) p = in.get<float>();
        try {
            cloud.labels[i] = ClassDistribution::from_normalized(probs, 1e-5);
        } catch (const Error&) {
            throw FormatError("LPCL: point " + std::to_string(i) + " carries an invalid distribution");
        }
    }
    in.expect_end();
    return cloud;
}

void write_painted_cloud(const fs::path& path, const PaintedCloud& cloud) {
    if (cloud.labels.size() != cloud.points.size()) throw DimensionError("painted cloud label count mismatch");
    detail::ByteWriter out;
    out.put_magic("LPCL");
    out.put<std::uint32_t>(kPaintedCloudVersion);
    out.put<std::uint32_t>(static_cast<std::uint32_t>(cloud.num_classes));
    out.put<std::uint64_t>(cloud.points.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out.put(static_cast<float>(p.x()));
        out.put(static_cast<float>(p.y()));
        out.put(static_cast<float>(p.z()));
        const auto& label = cloud.labels[i];
        out.put<std::uint8_t>(label ? 1 : 0);
        if (!label) continue;
        if (label->size() != cloud.num_classes) throw DimensionError("painted label has wrong class count");
        for (double v : label->probs()) out.put(static_cast<float>(v));
    }
    write_file_atomic(path, out.bytes());
}

Palette default_palette(std::size_t num_classes) {
    // Golden-angle hue walk in HSV.
    Palette palette;
    palette.ignore = {0, 0, 0};
    for (std::size_t i = 0; i < num_classes; ++i) {
        const double h = std::fmod(static_cast<double>(i) * 137.508, 360.0) / 60.0;
        const double s = 0.75;
        const double v = 0.95;
        const double c = v * s;
        const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
        double r = 0, g = 0, b = 0;
        switch (static_cast<int>(h)) {
            case 0: r = c, g = x; break;
            case 1: r = x, g = c; break;
            case 2: g = c, b = x; break;
            case 3: g = x, b = c; break;
            case 4: r = x, b = c; break;
            default: r = c, b = x; break;
        }
        const double m = v - c;
        auto to8 = [m](double ch) { return static_cast<std::uint8_t>(std::lround((ch + m) * 255.0)); };
        palette.classes.push_back({to8(r), to8(g), to8(b)});
    }
    return palette;
}

void export_ply(const fs::path& path, const PointCloud& cloud, const std::vector<Label>& labels,
                const Palette& palette, Label ignore_label) {
    if (labels.size() != cloud.size()) throw DimensionError("label count differs from point count");
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\n"
           << "element vertex " << cloud.size() << '\n'
           << "property float x\nproperty float y\nproperty float z\n"
           << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
           << "end_header\n";
    detail::ByteWriter out;
    out.put_magic(header.str());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        out.put(static_cast<float>(p.x()));
        out.put(static_cast<float>(p.y()));
        out.put(static_cast<float>(p.z()));
        Rgb rgb = palette.ignore;
        if (labels[i] != ignore_label) {
            if (labels[i] >= palette.classes.size()) throw DimensionError("palette does not cover label " +
                                                                          std::to_string(labels[i]));
            rgb = palette.classes[labels[i]];
        }
        for (auto ch : rgb) out.put<std::uint8_t>(ch);
    }
    write_file_atomic(path, out.bytes());
}

std::string frame_name(std::size_t index, std::string_view extension) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", index);
    return std::string(buf) + std::string(extension);
}

}  // namespace leap
