#include "leap/label2d.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "leap/error.hpp"
#include "leap/io.hpp"

namespace leap {

std::size_t Bitmap::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::string encode_rle(const Bitmap& mask) {
    std::ostringstream out;
    std::uint8_t current = 0;
    std::size_t run = 0;
    bool first = true;
    auto flush = [&] {
        if (!first) out << ' ';
        out << run;
        first = false;
    };
    for (std::uint8_t b : mask.data()) {
        if (b != current) {
            flush();
            current = b;
            run = 0;
        }
        ++run;
    }
    flush();
    return out.str();
}

Bitmap decode_rle(const std::string& rle, int width, int height) {
    if (width <= 0 || height <= 0) throw FormatError("mask size must be positive");
    Bitmap mask(width, height);
    auto& bits = mask.data();
    std::istringstream in(rle);
    std::size_t pos = 0;
    std::uint8_t value = 0;
    long long run = 0;
    while (in >> run) {
        if (run < 0 || pos + static_cast<std::size_t>(run) > bits.size())
            throw FormatError("mask run lengths exceed the image");
        std::fill_n(bits.begin() + static_cast<std::ptrdiff_t>(pos), run, value);
        pos += static_cast<std::size_t>(run);
        value ^= 1;
    }
    if (!in.eof()) throw FormatError("mask_rle must be whitespace-separated integers");
    if (pos != bits.size()) throw FormatError("mask runs cover " + std::to_string(pos) + " of " +
                                              std::to_string(bits.size()) + " pixels");
    return mask;
}

PixelProbMap::PixelProbMap(int width, int height, std::size_t num_classes)
    : width_(width),
      height_(height),
      num_classes_(num_classes),
      coverage_(width, height),
      slot_(static_cast<std::size_t>(width) * height, kNoSlot) {
    if (width <= 0 || height <= 0) throw DimensionError("pixel map size must be positive");
}

ClassDistribution PixelProbMap::at(int u, int v) const {
    const auto p = probs_at(u, v);
    return ClassDistribution::from_normalized(std::vector<double>(p.begin(), p.end()));
}

std::span<const double> PixelProbMap::probs_at(int u, int v) const {
    if (!covered(u, v)) throw DimensionError("pixel is not covered");
    return std::span<const double>(probs_).subspan(slot_[pixel(u, v)] * num_classes_, num_classes_);
}

void PixelProbMap::set(int u, int v, std::span<const double> probs) {
    if (num_classes_ == 0 || probs.size() != num_classes_)
        throw DimensionError("pixel distribution has wrong class count");
    auto& slot = slot_[pixel(u, v)];
    if (slot == kNoSlot) {
        slot = static_cast<std::uint32_t>(probs_.size() / num_classes_);
        probs_.insert(probs_.end(), probs.begin(), probs.end());
    } else {
        std::copy(probs.begin(), probs.end(), probs_.begin() + static_cast<std::ptrdiff_t>(slot * num_classes_));
    }
    coverage_.set(u, v);
}

void PixelProbMap::clear(int u, int v) { coverage_.set(u, v, false); }

PixelProbMap PixelProbMap::from_packed(const Bitmap& coverage, std::size_t num_classes, std::vector<double> packed) {
    PixelProbMap map(coverage.width(), coverage.height(), num_classes);
    if (packed.size() != coverage.count() * num_classes) throw DimensionError("packed payload size mismatch");
    map.coverage_ = coverage;
    std::uint32_t next = 0;
    for (std::size_t i = 0; i < map.slot_.size(); ++i)
        if (coverage.data()[i]) map.slot_[i] = next++;
    map.probs_ = std::move(packed);
    return map;
}

bool operator==(const PixelProbMap& a, const PixelProbMap& b) {
    if (a.width_ != b.width_ || a.height_ != b.height_ || a.num_classes_ != b.num_classes_) return false;
    if (!(a.coverage_ == b.coverage_)) return false;
    for (int v = 0; v < a.height_; ++v)
        for (int u = 0; u < a.width_; ++u) {
            if (!a.covered(u, v)) continue;
            const auto pa = a.probs_at(u, v);
            const auto pb = b.probs_at(u, v);
            if (!std::equal(pa.begin(), pa.end(), pb.begin())) return false;
        }
    return true;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double region_confidence(const RegionProposal& region) {
    if (region.logits.empty()) return 0.0;
    return sigmoid(*std::max_element(region.logits.begin(), region.logits.end()));
}

std::vector<RegionProposal> filter_regions(const std::vector<RegionProposal>& regions, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ParameterError("threshold: similarity threshold must lie in (0, 1)");
    std::vector<RegionProposal> kept;
    for (const auto& r : regions)
        if (region_confidence(r) >= threshold) kept.push_back(r);
    return kept;
}

std::pair<ClassDistribution, double> region_class_probs(const RegionProposal& region, const PromptMap& prompts) {
    if (region.logits.size() != prompts.size())
        throw DimensionError("region has " + std::to_string(region.logits.size()) + " logits for " +
                             std::to_string(prompts.size()) + " prompts");
    const std::size_t c = prompts.num_classes();
    std::vector<double> selected(c);
    for (std::size_t cls = 0; cls < c; ++cls) {
        const auto& idx = prompts.prompts_of(cls);
        if (idx.empty()) throw TaxonomyError("class " + std::to_string(cls) + " has no prompt");
        // sigmoid is monotone, so the most similar prompt carries the largest logit.
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i : idx) best = std::max(best, region.logits[i]);
        selected[cls] = best;
    }
    const double top = *std::max_element(selected.begin(), selected.end());
    for (double& l : selected) l = std::exp(l - top);
    return {normalize(selected), region_confidence(region)};
}

namespace {

void check_masks(const std::vector<MaskedRegion>& masked, int width, int height, std::size_t num_classes) {
    for (const auto& m : masked) {
        if (m.mask.width() != width || m.mask.height() != height)
            throw DimensionError("mask size differs from the image size");
        if (m.dist.size() != num_classes) throw DimensionError("mask distributions disagree on class count");
        if (!(m.confidence > 0.0)) throw ParameterError("mask confidence must be positive");
    }
}

std::size_t infer_classes(const std::vector<MaskedRegion>& masked, std::size_t num_classes) {
    if (num_classes != 0) return num_classes;
    return masked.empty() ? 0 : masked.front().dist.size();
}

// Weighted average at one pixel, written to `out`. Returns false when no mask covers it.
bool blend_pixel(const std::vector<MaskedRegion>& masked, int u, int v, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    double weight = 0.0;
    for (const auto& m : masked) {
        if (!m.mask.test(u, v)) continue;
        const auto p = m.dist.probs();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += m.confidence * p[i];
        weight += m.confidence;
    }
    if (weight == 0.0) return false;
    for (double& x : out) x /= weight;
    detail::normalize_inplace(out);
    return true;
}

}  // namespace

PixelProbMap rasterize(const std::vector<MaskedRegion>& masked, int width, int height, std::size_t num_classes) {
    num_classes = infer_classes(masked, num_classes);
    check_masks(masked, width, height, num_classes);
    const std::size_t pixels = static_cast<std::size_t>(width) * height;

    Bitmap coverage(width, height);
    auto& bits = coverage.data();
    for (const auto& m : masked) {
        const auto& mb = m.mask.data();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pixels); ++i)
            bits[static_cast<std::size_t>(i)] |= mb[static_cast<std::size_t>(i)];
    }

    // Packed slots in row-major order.
    std::vector<std::size_t> row_start(static_cast<std::size_t>(height) + 1, 0);
    for (int v = 0; v < height; ++v) {
        std::size_t n = 0;
        for (int u = 0; u < width; ++u) n += coverage.test(u, v);
        row_start[static_cast<std::size_t>(v) + 1] = row_start[static_cast<std::size_t>(v)] + n;
    }
    std::vector<double> packed(row_start.back() * num_classes);

#pragma omp parallel for schedule(dynamic, 4)
    for (int v = 0; v < height; ++v) {
        std::size_t slot = row_start[static_cast<std::size_t>(v)];
        for (int u = 0; u < width; ++u) {
            if (!coverage.test(u, v)) continue;
            blend_pixel(masked, u, v, std::span<double>(packed).subspan(slot * num_classes, num_classes));
            ++slot;
        }
    }
    return PixelProbMap::from_packed(coverage, num_classes, std::move(packed));
}

namespace serial {

PixelProbMap rasterize(const std::vector<MaskedRegion>& masked, int width, int height, std::size_t num_classes) {
    num_classes = infer_classes(masked, num_classes);
    check_masks(masked, width, height, num_classes);
    PixelProbMap map(width, height, num_classes);
    std::vector<double> buf(num_classes);
    for (int v = 0; v < height; ++v)
        for (int u = 0; u < width; ++u)
            if (blend_pixel(masked, u, v, buf)) map.set(u, v, buf);
    return map;
}

}  // namespace serial

Bitmap region_mask(const RegionProposal& region, int width, int height) {
    if (region.mask) {
        if (region.mask->width() != width || region.mask->height() != height)
            throw DimensionError("region mask size differs from the image size");
        return *region.mask;
    }
    // Pixel (u, v) is centered on integer coordinates, as in projection by rounding.
    Bitmap mask(width, height);
    for (int v = 0; v < height; ++v) {
        if (v < region.y_min || v >= region.y_max) continue;
        for (int u = 0; u < width; ++u)
            if (u >= region.x_min && u < region.x_max) mask.set(u, v);
    }
    return mask;
}

Label2dResult assemble_pixel_labels(const RegionFile& file, const PromptMap& prompts, double threshold) {
    Label2dResult out;
    for (const auto& region : filter_regions(file.regions, threshold)) {
        auto [dist, confidence] = region_class_probs(region, prompts);
        Bitmap mask = region_mask(region, file.width, file.height);
        if (mask.count() == 0) continue;
        out.masks.push_back({std::move(mask), std::move(dist), confidence});
    }
    out.map = rasterize(out.masks, file.width, file.height, prompts.num_classes());
    return out;
}

RegionFile read_region_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open region file " + path.string());
    RegionFile file;
    try {
        nlohmann::json j;
        in >> j;
        file.width = j.at("width").get<int>();
        file.height = j.at("height").get<int>();
        if (file.width <= 0 || file.height <= 0) throw FormatError("region file: image size must be positive");
        for (const auto& r : j.at("regions")) {
            RegionProposal region;
            const auto box = r.at("bbox").get<std::vector<double>>();
            if (box.size() != 4) throw FormatError("region bbox needs 4 values");
            region.x_min = box[0];
            region.y_min = box[1];
            region.x_max = box[2];
            region.y_max = box[3];
            if (!(region.x_min >= 0 && region.x_min < region.x_max && region.x_max <= file.width &&
                  region.y_min >= 0 && region.y_min < region.y_max && region.y_max <= file.height))
                throw FormatError("region bbox outside the image or empty");
            region.logits = r.at("logits").get<std::vector<double>>();
            if (r.contains("mask_rle") && !r.at("mask_rle").get<std::string>().empty())
                region.mask = decode_rle(r.at("mask_rle").get<std::string>(), file.width, file.height);
            file.regions.push_back(std::move(region));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("region file " + path.string() + ": " + e.what());
    }
    return file;
}

void write_region_file(const std::filesystem::path& path, const RegionFile& file) {
    nlohmann::json j;
    j["width"] = file.width;
    j["height"] = file.height;
    j["regions"] = nlohmann::json::array();
    for (const auto& r : file.regions) {
        nlohmann::json jr;
        jr["bbox"] = {r.x_min, r.y_min, r.x_max, r.y_max};
        jr["logits"] = r.logits;
        if (r.mask) jr["mask_rle"] = encode_rle(*r.mask);
        j["regions"].push_back(std::move(jr));
    }
    write_file_atomic(path, j.dump());
}

}  // namespace leap
