#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leap/taxonomy.hpp"

namespace leap {

/// Row-major H x W binary image.
class Bitmap {
public:
    Bitmap() = default;
    Bitmap(int width, int height) : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, 0) {}

    int width() const { return width_; }
    int height() const { return height_; }
    bool test(int u, int v) const { return bits_[index(u, v)] != 0; }
    void set(int u, int v, bool on = true) { bits_[index(u, v)] = on ? 1 : 0; }
    std::size_t count() const;
    const std::vector<std::uint8_t>& data() const { return bits_; }
    std::vector<std::uint8_t>& data() { return bits_; }

    friend bool operator==(const Bitmap&, const Bitmap&) = default;

private:
    std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width_ + u; }

    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

/// Alternating zero/one run lengths over the row-major bitmap, starting with zeros.
std::string encode_rle(const Bitmap& mask);
/// Throws FormatError when the runs do not cover exactly width*height pixels.
Bitmap decode_rle(const std::string& rle, int width, int height);

/// A detector box with one logit per prompt (PromptMap order).
struct RegionProposal {
    /// Half-open pixel rectangle [x_min, x_max) x [y_min, y_max).
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;
    std::vector<double> logits;
    /// Segmentation mask from the region file; absent means "use the box".
    std::optional<Bitmap> mask;
};

struct MaskedRegion {
    Bitmap mask;
    ClassDistribution dist;
    /// Maximum prompt similarity of the source region.
    double confidence = 0.0;
};

/// Per-pixel class distributions for covered pixels.
class PixelProbMap {
public:
    PixelProbMap() = default;
    PixelProbMap(int width, int height, std::size_t num_classes);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t num_classes() const { return num_classes_; }

    bool covered(int u, int v) const { return coverage_.test(u, v); }
    const Bitmap& coverage() const { return coverage_; }
    /// Requires covered(u, v).
    ClassDistribution at(int u, int v) const;
    std::span<const double> probs_at(int u, int v) const;
    /// Sets coverage and the distribution of one pixel.
    void set(int u, int v, std::span<const double> probs);
    void clear(int u, int v);

    std::size_t covered_count() const { return coverage_.count(); }

    /// Same size, coverage and per-pixel probabilities.
    friend bool operator==(const PixelProbMap& a, const PixelProbMap& b);

    /// Builds a map from a coverage bitmap and the covered pixels' probabilities in
    /// row-major order (c values each).
    static PixelProbMap from_packed(const Bitmap& coverage, std::size_t num_classes, std::vector<double> packed);

private:
    static constexpr std::uint32_t kNoSlot = 0xFFFFFFFFu;

    std::size_t pixel(int u, int v) const { return static_cast<std::size_t>(v) * width_ + u; }

    int width_ = 0;
    int height_ = 0;
    std::size_t num_classes_ = 0;
    Bitmap coverage_;
    std::vector<std::uint32_t> slot_;
    std::vector<double> probs_;
};

double sigmoid(double x);

/// Maximum over prompts of sigmoid(logit).
double region_confidence(const RegionProposal& region);

/// Keeps regions whose maximum prompt similarity reaches `threshold`, in order.
std::vector<RegionProposal> filter_regions(const std::vector<RegionProposal>& regions, double threshold);

/// Per class, picks the prompt with the highest similarity and softmaxes the c picked
/// raw logits. Returns (distribution, confidence).
std::pair<ClassDistribution, double> region_class_probs(const RegionProposal& region, const PromptMap& prompts);

/// Confidence-weighted average of overlapping masks. `num_classes` = 0 takes the class
/// count from the masks (an empty mask list then yields a map with zero classes).
PixelProbMap rasterize(const std::vector<MaskedRegion>& masked, int width, int height,
                       std::size_t num_classes = 0);

namespace serial {
PixelProbMap rasterize(const std::vector<MaskedRegion>& masked, int width, int height,
                       std::size_t num_classes = 0);
}  // namespace serial

/// Contents of one per-image region file.
struct RegionFile {
    int width = 0;
    int height = 0;
    std::vector<RegionProposal> regions;
};

RegionFile read_region_file(const std::filesystem::path& path);
void write_region_file(const std::filesystem::path& path, const RegionFile& file);

/// Mask of a region: its own segmentation or, when absent, the pixels (u, v) with
/// x_min <= u < x_max and y_min <= v < y_max.
Bitmap region_mask(const RegionProposal& region, int width, int height);

struct Label2dResult {
    std::vector<MaskedRegion> masks;
    PixelProbMap map;
};

/// Filter, class probabilities, masks and rasterization for one image. Regions whose
/// mask is empty are dropped.
Label2dResult assemble_pixel_labels(const RegionFile& file, const PromptMap& prompts, double threshold);

}  // namespace leap
