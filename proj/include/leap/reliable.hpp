#pragma once

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "leap/geometry.hpp"
#include "leap/painting.hpp"
#include "leap/voxel_grid.hpp"

namespace leap {

struct ReliableLabel {
    std::size_t point_index = 0;
    Label label = 0;
    double confidence = 0.0;

    friend bool operator==(const ReliableLabel&, const ReliableLabel&) = default;
};

/// Per-scan selections (each sorted by point index) and the percentage used.
struct ReliableSelection {
    std::vector<std::vector<ReliableLabel>> scans;
    double percent = 0.0;

    std::size_t total() const;
};

struct Scan {
    PointCloud cloud;
    RigidTransform world_from_sensor;
};

/// Keeps, per class and pooled over all scans, the ceil(P% * count) labeled points whose
/// voxels are most confident. Ties go to the lower (scan, point) index.
ReliableSelection select_reliable(const SparseVoxelGrid& grid, const std::vector<Scan>& scans, double percent);

struct Prediction {
    PaintedCloud cloud;
    RigidTransform world_from_sensor;
};

/// Fuses external per-point predictions with source temperature `params.tau`. Returns
/// the number of fused points.
std::size_t fuse_predictions(SparseVoxelGrid& grid, const std::vector<Prediction>& preds,
                             const FusionParams& params);

/// Full-length label vector for one scan: selected points carry their class, all others
/// `ignore_label`.
std::vector<Label> selection_labels(const std::vector<ReliableLabel>& selected, std::size_t num_points,
                                    Label ignore_label);

/// Label file plus JSON sidecar {"scan", "percent", "indices", "labels", "confidences"}.
void export_selection(const std::filesystem::path& label_path, const std::filesystem::path& sidecar_path,
                      std::size_t scan_index, const ReliableSelection& selection, std::size_t num_points,
                      Label ignore_label);

}  // namespace leap
