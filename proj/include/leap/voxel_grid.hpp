#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "leap/geometry.hpp"
#include "leap/painting.hpp"
#include "leap/taxonomy.hpp"

namespace leap {

struct VoxelKey {
    std::int32_t ix = 0;
    std::int32_t iy = 0;
    std::int32_t iz = 0;

    friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const noexcept {
        return static_cast<std::size_t>(static_cast<std::uint32_t>(k.ix) * 73856093u ^
                                        static_cast<std::uint32_t>(k.iy) * 19349669u ^
                                        static_cast<std::uint32_t>(k.iz) * 83492791u);
    }
};

/// floor(coord / voxel_size) per axis. Throws GeometryError on non-finite input or
/// indices outside the int32 range, ParameterError on a non-positive voxel size.
VoxelKey voxel_key(const Eigen::Vector3d& position, double voxel_size);

struct VoxelRecord {
    ClassDistribution dist;
    std::uint32_t obs_count = 0;
};

/// Bayesian posterior: prior_i * obs_i / sum_j prior_j * obs_j.
ClassDistribution bayes_update(const ClassDistribution& prior, const ClassDistribution& obs);
/// Entries raised to 1/tau, renormalized. Throws ParameterError when tau <= 0.
ClassDistribution apply_temperature(const ClassDistribution& d, double tau);

/// How an observation is conditioned before it enters a voxel.
struct FusionParams {
    /// Source temperature; 1 leaves observations unchanged.
    double tau = 1.0;
    /// Probability floor applied after tempering.
    double eps = kDefaultProbabilityFloor;

    void validate(std::size_t num_classes) const;
};

namespace detail {
void bayes_update_inplace(std::span<double> prior, std::span<const double> obs);
void apply_temperature_inplace(std::span<double> probs, double tau);
/// Temperature then floor, in place.
void condition_observation(std::span<double> probs, const FusionParams& params);
}  // namespace detail

/// Sparse hash grid of fused class distributions. Records live in a dense slot pool;
/// slot order is insertion order and carries no meaning.
class SparseVoxelGrid {
public:
    SparseVoxelGrid(double voxel_size, std::size_t num_classes);

    double voxel_size() const { return voxel_size_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t size() const { return keys_.size(); }
    bool empty() const { return keys_.empty(); }

    std::optional<std::size_t> find(const VoxelKey& key) const;
    std::optional<VoxelRecord> record(const VoxelKey& key) const;

    const VoxelKey& key(std::size_t slot) const { return keys_[slot]; }
    std::span<const double> probs(std::size_t slot) const {
        return std::span<const double>(probs_).subspan(slot * num_classes_, num_classes_);
    }
    std::uint32_t obs_count(std::size_t slot) const { return counts_[slot]; }

    /// Center of a voxel in world meters.
    Eigen::Vector3d center(const VoxelKey& key) const;

    /// Keys in lexicographic order.
    std::vector<VoxelKey> sorted_keys() const;

    /// Inserts or replaces a record. Throws on a class-count mismatch or zero count.
    void set_record(const VoxelKey& key, std::span<const double> probs, std::uint32_t obs_count);

    /// Same voxel size, class count, keys, counts and bit-identical probabilities.
    friend bool operator==(const SparseVoxelGrid& a, const SparseVoxelGrid& b);

private:
    friend class GridMutator;

    std::size_t slot_for(const VoxelKey& key);  // creates an empty slot when missing
    std::span<double> mutable_probs(std::size_t slot) {
        return std::span<double>(probs_).subspan(slot * num_classes_, num_classes_);
    }

    double voxel_size_;
    std::size_t num_classes_;
    std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> index_;
    std::vector<VoxelKey> keys_;
    std::vector<double> probs_;
    std::vector<std::uint32_t> counts_;
};

/// Fuses one observation: tempered and floored, then multiplied into the voxel's
/// distribution (a fresh voxel adopts it, i.e. a uniform prior).
void insert_observation(SparseVoxelGrid& grid, const Eigen::Vector3d& position, const ClassDistribution& obs,
                        const FusionParams& params = {});

/// Flat batch of observations: positions (world frame) and c probabilities each.
struct ObservationBatch {
    std::vector<Eigen::Vector3d> positions;
    std::vector<double> probs;

    std::size_t size() const { return positions.size(); }
};

/// Fuses a batch. Parallel over voxels; each voxel consumes its observations in batch
/// order, so the result is bit-identical to `serial::fuse_batch`.
void fuse_batch(SparseVoxelGrid& grid, const ObservationBatch& batch, const FusionParams& params = {});

/// Transforms labeled points to world and fuses them. Returns the number fused.
std::size_t fuse_painted_cloud(SparseVoxelGrid& grid, const PaintedCloud& cloud,
                               const RigidTransform& world_from_sensor, const FusionParams& params = {});

struct Neighbor {
    VoxelKey key;
    /// Center distance in meters.
    double distance = 0.0;
};

/// k nearest occupied voxels of a query voxel with their softmax(-d) weights.
struct NeighborSet {
    std::vector<Neighbor> neighbors;
    std::vector<double> weights;
};

/// Exact k-nearest-neighbor search over occupied voxel centers. Ties in distance are
/// broken by lexicographic key order.
class VoxelNeighborIndex {
public:
    explicit VoxelNeighborIndex(const SparseVoxelGrid& grid);

    /// The k nearest occupied voxels to `query` (which need not be occupied), including
    /// `query` itself when occupied and `include_self` is set. Fewer than k are returned
    /// only when the grid holds fewer candidates.
    NeighborSet knn(const VoxelKey& query, std::size_t k, bool include_self = true) const;

private:
    const SparseVoxelGrid& grid_;
    std::vector<VoxelKey> keys_;  // sorted
};

/// Distance-weighted k-nearest averaging over the frozen input grid.
SparseVoxelGrid smooth(const SparseVoxelGrid& grid, std::size_t k, bool include_self = true);

struct PointLabel {
    Label label = kDefaultIgnoreLabel;
    double confidence = 0.0;
};

/// Argmax (ties to the smallest class index) and max probability of each point's voxel;
/// points in empty voxels get `ignore_label` and confidence 0.
std::vector<PointLabel> query_labels(const SparseVoxelGrid& grid, const PointCloud& cloud,
                                     const RigidTransform& world_from_sensor,
                                     Label ignore_label = kDefaultIgnoreLabel);

namespace serial {
void fuse_batch(SparseVoxelGrid& grid, const ObservationBatch& batch, const FusionParams& params = {});
SparseVoxelGrid smooth(const SparseVoxelGrid& grid, std::size_t k, bool include_self = true);
std::vector<PointLabel> query_labels(const SparseVoxelGrid& grid, const PointCloud& cloud,
                                     const RigidTransform& world_from_sensor,
                                     Label ignore_label = kDefaultIgnoreLabel);
}  // namespace serial

/// Double nearest to the shortest decimal form of a stored f32 voxel size.
double widen_voxel_size(float stored);

// LVOX: magic, u32 version, f32 voxel_size, u32 c, u64 n, then per voxel 3 x i32 key,
// u32 obs_count, c x f32 probs. Voxels are written in lexicographic key order.
inline constexpr std::uint32_t kGridVersion = 1;
std::string encode_grid(const SparseVoxelGrid& grid);
SparseVoxelGrid decode_grid(std::string_view bytes);
void save_grid(const SparseVoxelGrid& grid, const std::filesystem::path& path);
SparseVoxelGrid load_grid(const std::filesystem::path& path);

}  // namespace leap
