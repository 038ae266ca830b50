#include "leap/voxel_grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "leap/error.hpp"
#include "leap/io.hpp"
#include "leap/parallel.hpp"

namespace leap {

namespace {

constexpr double kInt32Min = static_cast<double>(std::numeric_limits<std::int32_t>::min());
constexpr double kInt32Max = static_cast<double>(std::numeric_limits<std::int32_t>::max());

std::int32_t axis_index(double coord, double voxel_size) {
    if (!std::isfinite(coord)) throw GeometryError("voxel_key: non-finite coordinate");
    const double f = std::floor(coord / voxel_size);
    if (f < kInt32Min || f > kInt32Max) throw GeometryError("voxel_key: coordinate outside the indexable range");
    return static_cast<std::int32_t>(f);
}

}  // namespace

VoxelKey voxel_key(const Eigen::Vector3d& p, double voxel_size) {
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
        throw ParameterError("voxel_size: must be positive and finite");
    return {axis_index(p.x(), voxel_size), axis_index(p.y(), voxel_size), axis_index(p.z(), voxel_size)};
}

namespace detail {

void bayes_update_inplace(std::span<double> prior, std::span<const double> obs) {
    if (prior.size() != obs.size()) throw DimensionError("bayes_update: class count mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < prior.size(); ++i) {
        prior[i] *= obs[i];
        sum += prior[i];
    }
    if (!(sum > 0.0)) throw ZeroMassError("bayes_update: prior and observation share no mass");
    for (double& p : prior) p /= sum;
}

void apply_temperature_inplace(std::span<double> probs, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("tau: temperature must be positive");
    if (tau == 1.0) return;
    const double top = *std::max_element(probs.begin(), probs.end());
    if (!(top > 0.0)) throw ZeroMassError("apply_temperature: zero distribution");
    const double power = 1.0 / tau;
    for (double& p : probs) p = std::pow(p / top, power);
    normalize_inplace(probs);
}

void condition_observation(std::span<double> probs, const FusionParams& params) {
    apply_temperature_inplace(probs, params.tau);
    clamp_floor_inplace(probs, params.eps);
}

}  // namespace detail

ClassDistribution bayes_update(const ClassDistribution& prior, const ClassDistribution& obs) {
    if (prior.size() != obs.size()) throw DimensionError("bayes_update: class count mismatch");
    std::vector<double> p(prior.probs().begin(), prior.probs().end());
    detail::bayes_update_inplace(p, obs.probs());
    return normalize(p);
}

ClassDistribution apply_temperature(const ClassDistribution& d, double tau) {
    std::vector<double> p(d.probs().begin(), d.probs().end());
    detail::apply_temperature_inplace(p, tau);
    return normalize(p);
}

void FusionParams::validate(std::size_t num_classes) const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("tau: temperature must be positive");
    if (!(eps > 0.0) || !(eps < 1.0 / static_cast<double>(num_classes)))
        throw ParameterError("eps: floor must lie in (0, 1/c)");
}

SparseVoxelGrid::SparseVoxelGrid(double voxel_size, std::size_t num_classes)
    : voxel_size_(voxel_size), num_classes_(num_classes) {
    if (!(voxel_size > 0.0) || !std::isfinite(voxel_size))
        throw ParameterError("voxel_size: must be positive and finite");
    if (num_classes == 0) throw DimensionError("grid needs at least one class");
}

std::optional<std::size_t> SparseVoxelGrid::find(const VoxelKey& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::optional<VoxelRecord> SparseVoxelGrid::record(const VoxelKey& key) const {
    const auto slot = find(key);
    if (!slot) return std::nullopt;
    const auto p = probs(*slot);
    return VoxelRecord{ClassDistribution::from_normalized(std::vector<double>(p.begin(), p.end()), 1e-5),
                       counts_[*slot]};
}

Eigen::Vector3d SparseVoxelGrid::center(const VoxelKey& key) const {
    return {(key.ix + 0.5) * voxel_size_, (key.iy + 0.5) * voxel_size_, (key.iz + 0.5) * voxel_size_};
}

std::vector<VoxelKey> SparseVoxelGrid::sorted_keys() const {
    std::vector<VoxelKey> keys = keys_;
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::size_t SparseVoxelGrid::slot_for(const VoxelKey& key) {
    const auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(keys_.size()));
    if (inserted) {
        keys_.push_back(key);
        probs_.resize(probs_.size() + num_classes_, 0.0);
        counts_.push_back(0);
    }
    return it->second;
}

void SparseVoxelGrid::set_record(const VoxelKey& key, std::span<const double> probs, std::uint32_t obs_count) {
    if (probs.size() != num_classes_) throw DimensionError("voxel record has wrong class count");
    if (obs_count == 0) throw ParameterError("voxel record needs at least one observation");
    const auto slot = slot_for(key);
    std::copy(probs.begin(), probs.end(), mutable_probs(slot).begin());
    counts_[slot] = obs_count;
}

bool operator==(const SparseVoxelGrid& a, const SparseVoxelGrid& b) {
    if (a.voxel_size_ != b.voxel_size_ || a.num_classes_ != b.num_classes_ || a.size() != b.size()) return false;
    for (std::size_t slot = 0; slot < a.size(); ++slot) {
        const auto other = b.find(a.keys_[slot]);
        if (!other || a.counts_[slot] != b.counts_[*other]) return false;
        const auto pa = a.probs(slot);
        const auto pb = b.probs(*other);
        if (!std::equal(pa.begin(), pa.end(), pb.begin())) return false;
    }
    return true;
}

class GridMutator {
public:
    static std::size_t slot_for(SparseVoxelGrid& g, const VoxelKey& key) { return g.slot_for(key); }
    static std::span<double> probs(SparseVoxelGrid& g, std::size_t slot) { return g.mutable_probs(slot); }
    static std::uint32_t& count(SparseVoxelGrid& g, std::size_t slot) { return g.counts_[slot]; }

    // Fuses an already-conditioned observation into a slot.
    static void absorb(SparseVoxelGrid& g, std::size_t slot, std::span<const double> obs) {
        auto prior = probs(g, slot);
        auto& n = count(g, slot);
        if (n == 0) {
            std::copy(obs.begin(), obs.end(), prior.begin());
        } else {
            detail::bayes_update_inplace(prior, obs);
        }
        ++n;
    }
};

void insert_observation(SparseVoxelGrid& grid, const Eigen::Vector3d& position, const ClassDistribution& obs,
                        const FusionParams& params) {
    if (obs.size() != grid.num_classes()) throw DimensionError("observation has wrong class count");
    params.validate(grid.num_classes());
    std::vector<double> conditioned(obs.probs().begin(), obs.probs().end());
    detail::condition_observation(conditioned, params);
    const auto key = voxel_key(position, grid.voxel_size());
    GridMutator::absorb(grid, GridMutator::slot_for(grid, key), conditioned);
}

namespace {

void check_batch(const SparseVoxelGrid& grid, const ObservationBatch& batch, const FusionParams& params) {
    if (batch.probs.size() != batch.positions.size() * grid.num_classes())
        throw DimensionError("observation batch has wrong class count");
    params.validate(grid.num_classes());
}

}  // namespace

void fuse_batch(SparseVoxelGrid& grid, const ObservationBatch& batch, const FusionParams& params) {
    check_batch(grid, batch, params);
    const std::size_t c = grid.num_classes();
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
    if (n == 0) return;

    std::vector<VoxelKey> keys(batch.size());
    std::vector<double> conditioned(batch.probs);
    ExceptionSlot errors;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        errors.run([&] {
            const auto idx = static_cast<std::size_t>(i);
            keys[idx] = voxel_key(batch.positions[idx], grid.voxel_size());
            detail::condition_observation(std::span<double>(conditioned).subspan(idx * c, c), params);
        });
    }
    errors.rethrow();

    // Slot assignment is serial; grouping is a stable counting sort by slot.
    std::vector<std::uint32_t> slot_of(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        slot_of[i] = static_cast<std::uint32_t>(GridMutator::slot_for(grid, keys[i]));
    std::vector<std::size_t> start(grid.size() + 1, 0);
    for (auto s : slot_of) ++start[s + 1];
    for (std::size_t s = 0; s < grid.size(); ++s) start[s + 1] += start[s];
    std::vector<std::size_t> order(batch.size());
    {
        std::vector<std::size_t> cursor(start.begin(), start.end() - 1);
        for (std::size_t i = 0; i < batch.size(); ++i) order[cursor[slot_of[i]]++] = i;
    }

    const auto slots = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t s = 0; s < slots; ++s) {
        const auto slot = static_cast<std::size_t>(s);
        for (std::size_t j = start[slot]; j < start[slot + 1]; ++j) {
            const std::size_t i = order[j];
            GridMutator::absorb(grid, slot, std::span<const double>(conditioned).subspan(i * c, c));
        }
    }
}

namespace serial {

void fuse_batch(SparseVoxelGrid& grid, const ObservationBatch& batch, const FusionParams& params) {
    check_batch(grid, batch, params);
    const std::size_t c = grid.num_classes();
    std::vector<double> obs(c);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::copy_n(batch.probs.begin() + static_cast<std::ptrdiff_t>(i * c), c, obs.begin());
        detail::condition_observation(obs, params);
        const auto key = voxel_key(batch.positions[i], grid.voxel_size());
        GridMutator::absorb(grid, GridMutator::slot_for(grid, key), obs);
    }
}

}  // namespace serial

std::size_t fuse_painted_cloud(SparseVoxelGrid& grid, const PaintedCloud& cloud,
                               const RigidTransform& world_from_sensor, const FusionParams& params) {
    if (cloud.labels.size() != cloud.points.size()) throw DimensionError("painted cloud label count mismatch");
    ObservationBatch batch;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& label = cloud.labels[i];
        if (!label) continue;
        if (label->size() != grid.num_classes()) throw DimensionError("painted label has wrong class count");
        batch.positions.push_back(world_from_sensor.apply(cloud.points[i]));
        batch.probs.insert(batch.probs.end(), label->probs().begin(), label->probs().end());
    }
    fuse_batch(grid, batch, params);
    return batch.size();
}

VoxelNeighborIndex::VoxelNeighborIndex(const SparseVoxelGrid& grid) : grid_(grid), keys_(grid.sorted_keys()) {}

NeighborSet VoxelNeighborIndex::knn(const VoxelKey& query, std::size_t k, bool include_self) const {
    NeighborSet out;
    if (k == 0) return out;

    struct Candidate {
        std::int64_t d2;
        VoxelKey key;
        bool operator<(const Candidate& o) const { return d2 != o.d2 ? d2 < o.d2 : key < o.key; }
    };
    std::vector<Candidate> cand;
    auto sq = [](std::int64_t v) { return v * v; };
    auto dist2 = [&](const VoxelKey& a) {
        return sq(std::int64_t{a.ix} - query.ix) + sq(std::int64_t{a.iy} - query.iy) + sq(std::int64_t{a.iz} - query.iz);
    };
    auto admissible = [&](const VoxelKey& key) { return include_self || key != query; };

    const bool self_occupied = grid_.find(query).has_value();
    const std::size_t available = keys_.size() - ((!include_self && self_occupied) ? 1 : 0);
    const std::size_t want = std::min(k, available);

    auto brute_force = [&] {
        cand.clear();
        for (const auto& key : keys_)
            if (admissible(key)) cand.push_back({dist2(key), key});
    };

    if (want == available) {
        brute_force();
    } else {
        // Expand cubic shells of Chebyshev radius r. After shell r every unvisited voxel
        // lies at squared distance >= (r+1)^2, so the k best are final once the k-th
        // best is strictly closer than that.
        for (std::int64_t r = 0;; ++r) {
            const double shell_volume = std::pow(2.0 * static_cast<double>(r) + 1.0, 3);
            if (shell_volume > 4.0 * static_cast<double>(keys_.size())) {
                brute_force();
                break;
            }
            for (std::int64_t dx = -r; dx <= r; ++dx)
                for (std::int64_t dy = -r; dy <= r; ++dy) {
                    const bool edge = std::abs(dx) == r || std::abs(dy) == r;
                    const std::int64_t step = edge ? 1 : std::max<std::int64_t>(2 * r, 1);
                    for (std::int64_t dz = -r; dz <= r; dz += step) {
                        const std::int64_t x = query.ix + dx;
                        const std::int64_t y = query.iy + dy;
                        const std::int64_t z = query.iz + dz;
                        if (x < INT32_MIN || x > INT32_MAX || y < INT32_MIN || y > INT32_MAX || z < INT32_MIN ||
                            z > INT32_MAX)
                            continue;
                        const VoxelKey key{static_cast<std::int32_t>(x), static_cast<std::int32_t>(y),
                                           static_cast<std::int32_t>(z)};
                        if (admissible(key) && grid_.find(key)) cand.push_back({dist2(key), key});
                    }
                }
            if (cand.size() >= want) {
                std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(want - 1), cand.end());
                if (cand[want - 1].d2 < sq(r + 1)) break;
            }
        }
    }

    const auto kth = cand.begin() + static_cast<std::ptrdiff_t>(want);
    std::partial_sort(cand.begin(), kth, cand.end());
    cand.resize(want);

    const double size = grid_.voxel_size();
    out.neighbors.reserve(want);
    for (const auto& c : cand) out.neighbors.push_back({c.key, size * std::sqrt(static_cast<double>(c.d2))});
    if (out.neighbors.empty()) return out;
    // softmax(-d); the nearest neighbor anchors the exponent.
    const double d0 = out.neighbors.front().distance;
    double total = 0.0;
    for (const auto& nb : out.neighbors) {
        out.weights.push_back(std::exp(-(nb.distance - d0)));
        total += out.weights.back();
    }
    for (double& w : out.weights) w /= total;
    return out;
}

namespace {

SparseVoxelGrid smoothed_skeleton(const SparseVoxelGrid& grid, const std::vector<VoxelKey>& keys) {
    SparseVoxelGrid out(grid.voxel_size(), grid.num_classes());
    for (const auto& key : keys) {
        const auto slot = *grid.find(key);
        out.set_record(key, grid.probs(slot), grid.obs_count(slot));
    }
    return out;
}

void smooth_voxel(const SparseVoxelGrid& grid, const VoxelNeighborIndex& index, const VoxelKey& key,
                  std::size_t k, bool include_self, std::span<double> out) {
    const auto nbrs = index.knn(key, k, include_self);
    if (nbrs.neighbors.empty()) return;  // lone voxel without self: keep its own evidence
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t m = 0; m < nbrs.neighbors.size(); ++m) {
        const auto p = grid.probs(*grid.find(nbrs.neighbors[m].key));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += nbrs.weights[m] * p[i];
    }
    detail::normalize_inplace(out);
}

}  // namespace

SparseVoxelGrid smooth(const SparseVoxelGrid& grid, std::size_t k, bool include_self) {
    if (k == 0) throw ParameterError("k: smoothing needs at least one neighbor");
    const auto keys = grid.sorted_keys();
    SparseVoxelGrid out = smoothed_skeleton(grid, keys);
    const VoxelNeighborIndex index(grid);
    const auto n = static_cast<std::ptrdiff_t>(keys.size());
    ExceptionSlot errors;
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        errors.run([&] {
            const auto slot = static_cast<std::size_t>(i);  // skeleton slots follow sorted order
            smooth_voxel(grid, index, keys[slot], k, include_self, GridMutator::probs(out, slot));
        });
    }
    errors.rethrow();
    return out;
}

namespace {

PointLabel label_point(const SparseVoxelGrid& grid, const Eigen::Vector3d& world, Label ignore_label) {
    const auto slot = grid.find(voxel_key(world, grid.voxel_size()));
    if (!slot) return {ignore_label, 0.0};
    const auto p = grid.probs(*slot);
    const auto best = std::max_element(p.begin(), p.end());
    return {static_cast<Label>(best - p.begin()), *best};
}

}  // namespace

std::vector<PointLabel> query_labels(const SparseVoxelGrid& grid, const PointCloud& cloud,
                                     const RigidTransform& world_from_sensor, Label ignore_label) {
    std::vector<PointLabel> out(cloud.size());
    const auto n = static_cast<std::ptrdiff_t>(cloud.size());
    ExceptionSlot errors;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        errors.run([&] {
            const auto idx = static_cast<std::size_t>(i);
            out[idx] = label_point(grid, world_from_sensor.apply(cloud.points[idx]), ignore_label);
        });
    }
    errors.rethrow();
    return out;
}

namespace serial {

SparseVoxelGrid smooth(const SparseVoxelGrid& grid, std::size_t k, bool include_self) {
    if (k == 0) throw ParameterError("k: smoothing needs at least one neighbor");
    const auto keys = grid.sorted_keys();
    SparseVoxelGrid out = smoothed_skeleton(grid, keys);
    const VoxelNeighborIndex index(grid);
    for (std::size_t slot = 0; slot < keys.size(); ++slot)
        smooth_voxel(grid, index, keys[slot], k, include_self, GridMutator::probs(out, slot));
    return out;
}

std::vector<PointLabel> query_labels(const SparseVoxelGrid& grid, const PointCloud& cloud,
                                     const RigidTransform& world_from_sensor, Label ignore_label) {
    std::vector<PointLabel> out;
    out.reserve(cloud.size());
    for (const auto& p : cloud.points) out.push_back(label_point(grid, world_from_sensor.apply(p), ignore_label));
    return out;
}

}  // namespace serial

double widen_voxel_size(float stored) {
    // The shortest decimal that round-trips the f32 is the size the grid was most likely
    // built with (0.2f reads back as 0.2, not 0.20000000298).
    char buf[32];
    const auto written = std::to_chars(buf, buf + sizeof buf, stored);
    double out = static_cast<double>(stored);
    std::from_chars(buf, written.ptr, out);
    return out;
}

std::string encode_grid(const SparseVoxelGrid& grid) {
    detail::ByteWriter out;
    out.put_magic("LVOX");
    out.put<std::uint32_t>(kGridVersion);
    out.put(static_cast<float>(grid.voxel_size()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(grid.num_classes()));
    out.put<std::uint64_t>(grid.size());
    out.reserve(grid.size() * (16 + 4 * grid.num_classes()) + 24);
    for (const auto& key : grid.sorted_keys()) {
        const auto slot = *grid.find(key);
        out.put(key.ix);
        out.put(key.iy);
        out.put(key.iz);
        out.put<std::uint32_t>(grid.obs_count(slot));
        for (double p : grid.probs(slot)) out.put(static_cast<float>(p));
    }
    return out.bytes();
}

SparseVoxelGrid decode_grid(std::string_view bytes) {
    detail::ByteReader in(bytes, "LVOX");
    in.expect_magic("LVOX");
    const auto version = in.get<std::uint32_t>();
    if (version != kGridVersion) throw FormatError("LVOX: unsupported version " + std::to_string(version));
    const float voxel_size = in.get<float>();
    const auto c = in.get<std::uint32_t>();
    const auto n = in.get<std::uint64_t>();
    if (!(voxel_size > 0.0f) || !std::isfinite(voxel_size)) throw FormatError("LVOX: bad voxel size");
    if (c == 0) throw FormatError("LVOX: zero classes");
    const std::size_t record_bytes = 16 + 4 * static_cast<std::size_t>(c);
    if (n > in.remaining() / record_bytes || in.remaining() != n * record_bytes)
        throw FormatError("LVOX: voxel count does not match payload length");

    SparseVoxelGrid grid(widen_voxel_size(voxel_size), c);
    std::vector<double> probs(c);
    for (std::uint64_t i = 0; i < n; ++i) {
        VoxelKey key;
        key.ix = in.get<std::int32_t>();
        key.iy = in.get<std::int32_t>();
        key.iz = in.get<std::int32_t>();
        const auto count = in.get<std::uint32_t>();
        if (count == 0) throw FormatError("LVOX: stored voxel with zero observations");
        double sum = 0.0;
        for (double& p : probs) {
            p = in.get<float>();
            if (!(p >= 0.0 && p <= 1.0 + 1e-6)) throw FormatError("LVOX: probability outside [0, 1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-5) throw FormatError("LVOX: voxel distribution does not sum to one");
        if (grid.find(key)) throw FormatError("LVOX: duplicate voxel key");
        grid.set_record(key, probs, count);
    }
    return grid;
}

void save_grid(const SparseVoxelGrid& grid, const std::filesystem::path& path) {
    write_file_atomic(path, encode_grid(grid));
}

SparseVoxelGrid load_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

}  // namespace leap
