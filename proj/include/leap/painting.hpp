#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "leap/geometry.hpp"
#include "leap/label2d.hpp"
#include "leap/taxonomy.hpp"

namespace leap {

/// Points with an optional class distribution each.
struct PaintedCloud {
    std::vector<Eigen::Vector3d> points;
    std::vector<std::optional<ClassDistribution>> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return points.size(); }
    std::size_t labeled_count() const;
};

/// Gives every projected point the distribution of its pixel when that pixel is
/// covered. Throws DimensionError when a projection falls outside the map or refers to
/// a point the cloud does not have.
PaintedCloud paint(const PointCloud& cloud, const PixelProbMap& ppm, const std::vector<ProjectedPoint>& proj);

/// Indices (ascending) of the mask's points that belong to its largest depth cluster.
/// Clusters split where consecutive sorted depths differ by more than `gap` meters; ties
/// between equally large clusters go to the one with the smallest mean depth.
std::vector<std::size_t> depth_cluster_filter(const MaskedRegion& masked, const std::vector<ProjectedPoint>& proj,
                                              double gap);

/// `paint` followed by per-mask depth filtering: a point that some mask rejects loses
/// its label when that mask's class is also the argmax of the point's pixel.
PaintedCloud paint_filtered(const PointCloud& cloud, const PixelProbMap& ppm,
                            const std::vector<ProjectedPoint>& proj, const std::vector<MaskedRegion>& masks,
                            double gap);

}  // namespace leap
