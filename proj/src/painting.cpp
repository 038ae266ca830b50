#include "leap/painting.hpp"

#include <algorithm>
#include <numeric>

#include "leap/error.hpp"

namespace leap {

std::size_t PaintedCloud::labeled_count() const {
    return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); }));
}

PaintedCloud paint(const PointCloud& cloud, const PixelProbMap& ppm, const std::vector<ProjectedPoint>& proj) {
    PaintedCloud out;
    out.points = cloud.points;
    out.labels.resize(cloud.size());
    out.num_classes = ppm.num_classes();
    for (const auto& p : proj) {
        if (p.point_index >= cloud.size()) throw DimensionError("projection refers to a missing point");
        if (p.u < 0 || p.v < 0 || p.u >= ppm.width() || p.v >= ppm.height())
            throw DimensionError("projection outside the pixel map; image sizes differ");
        if (ppm.covered(p.u, p.v)) out.labels[p.point_index] = ppm.at(p.u, p.v);
    }
    return out;
}

std::vector<std::size_t> depth_cluster_filter(const MaskedRegion& masked, const std::vector<ProjectedPoint>& proj,
                                              double gap) {
    if (!(gap > 0.0)) throw ParameterError("gap: depth cluster gap must be positive");
    std::vector<const ProjectedPoint*> inside;
    for (const auto& p : proj)
        if (p.u >= 0 && p.v >= 0 && p.u < masked.mask.width() && p.v < masked.mask.height() &&
            masked.mask.test(p.u, p.v))
            inside.push_back(&p);
    if (inside.empty()) return {};

    std::sort(inside.begin(), inside.end(), [](const ProjectedPoint* a, const ProjectedPoint* b) {
        return a->depth != b->depth ? a->depth < b->depth : a->point_index < b->point_index;
    });

    // Clusters are contiguous runs [begin, end) of the sorted depths.
    std::size_t best_begin = 0;
    std::size_t best_end = 0;
    double best_mean = 0.0;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= inside.size(); ++i) {
        if (i < inside.size() && inside[i]->depth - inside[i - 1]->depth <= gap) continue;
        double sum = 0.0;
        for (std::size_t j = begin; j < i; ++j) sum += inside[j]->depth;
        const double mean = sum / static_cast<double>(i - begin);
        const std::size_t size = i - begin;
        const std::size_t best_size = best_end - best_begin;
        if (size > best_size || (size == best_size && mean < best_mean)) {
            best_begin = begin;
            best_end = i;
            best_mean = mean;
        }
        begin = i;
    }

    std::vector<std::size_t> keep;
    keep.reserve(best_end - best_begin);
    for (std::size_t j = best_begin; j < best_end; ++j) keep.push_back(inside[j]->point_index);
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    return keep;
}

PaintedCloud paint_filtered(const PointCloud& cloud, const PixelProbMap& ppm,
                            const std::vector<ProjectedPoint>& proj, const std::vector<MaskedRegion>& masks,
                            double gap) {
    PaintedCloud out = paint(cloud, ppm, proj);
    if (!(gap > 0.0)) throw ParameterError("gap: depth cluster gap must be positive");
    for (const auto& m : masks)
        if (m.mask.width() != ppm.width() || m.mask.height() != ppm.height())
            throw DimensionError("mask size differs from the pixel map");

    const auto n_masks = static_cast<std::ptrdiff_t>(masks.size());
    std::vector<std::vector<std::size_t>> dropped(masks.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t m = 0; m < n_masks; ++m) {
        const auto& mask = masks[static_cast<std::size_t>(m)];
        const auto keep = depth_cluster_filter(mask, proj, gap);
        const std::size_t mask_class = mask.dist.argmax();
        auto& drop = dropped[static_cast<std::size_t>(m)];
        for (const auto& p : proj) {
            if (!mask.mask.test(p.u, p.v)) continue;
            if (std::binary_search(keep.begin(), keep.end(), p.point_index)) continue;
            const auto& label = out.labels[p.point_index];
            if (label && label->argmax() == mask_class) drop.push_back(p.point_index);
        }
    }
    for (const auto& drop : dropped)
        for (std::size_t i : drop) out.labels[i].reset();
    return out;
}

}  // namespace leap
