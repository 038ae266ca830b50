#pragma once

// Brute-force reference implementations used to check the optimized kernels. None of
// them share code with the library beyond its public data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "leap/voxel_grid.hpp"

namespace oracle {

using Rng = std::mt19937_64;

inline std::vector<double> normalized(std::vector<double> v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= s;
    return v;
}

/// Random point on the simplex; `spiky` concentrates mass on one class.
inline std::vector<double> random_distribution(Rng& rng, std::size_t c, bool spiky = false) {
    std::gamma_distribution<double> gamma(spiky ? 0.3 : 1.0, 1.0);
    std::vector<double> v(c);
    for (double& x : v) x = gamma(rng) + 1e-12;
    return normalized(v);
}

/// pow(p, 1/tau), renormalized, then every entry raised to eps and renormalized.
inline std::vector<double> condition(const std::vector<double>& obs, double tau, double eps) {
    std::vector<double> v(obs.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(obs[i], 1.0 / tau);
    v = normalized(v);
    for (double& x : v) x = std::max(x, eps);
    return normalized(v);
}

/// Normalized product of likelihoods, accumulated in log space.
inline std::vector<double> log_product(const std::vector<std::vector<double>>& observations) {
    std::vector<double> logs(observations.front().size(), 0.0);
    for (const auto& o : observations)
        for (std::size_t i = 0; i < logs.size(); ++i) logs[i] += std::log(o[i]);
    const double top = *std::max_element(logs.begin(), logs.end());
    std::vector<double> p(logs.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logs[i] - top);
    return normalized(p);
}

struct VoxelEntry {
    leap::VoxelKey key;
    std::vector<double> probs;
};

struct SmoothResult {
    std::vector<leap::VoxelKey> neighbors;  // selection order
    std::vector<double> probs;
};

/// All-pairs kNN over voxel centers with softmax(-d) weights (d in meters). Candidates
/// are ordered by (squared index distance, key).
inline std::map<leap::VoxelKey, SmoothResult> smooth_all_pairs(const std::vector<VoxelEntry>& voxels,
                                                               double voxel_size, std::size_t k,
                                                               bool include_self = true) {
    std::map<leap::VoxelKey, SmoothResult> out;
    for (const auto& q : voxels) {
        std::vector<std::pair<std::int64_t, std::size_t>> cand;
        for (std::size_t j = 0; j < voxels.size(); ++j) {
            const auto& o = voxels[j].key;
            if (!include_self && o == q.key) continue;
            const std::int64_t dx = std::int64_t{o.ix} - q.key.ix;
            const std::int64_t dy = std::int64_t{o.iy} - q.key.iy;
            const std::int64_t dz = std::int64_t{o.iz} - q.key.iz;
            cand.emplace_back(dx * dx + dy * dy + dz * dz, j);
        }
        std::sort(cand.begin(), cand.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return voxels[a.second].key < voxels[b.second].key;
        });
        cand.resize(std::min(k, cand.size()));
        SmoothResult r;
        r.probs.assign(q.probs.size(), 0.0);
        std::vector<double> w;
        for (const auto& [d2, j] : cand) {
            r.neighbors.push_back(voxels[j].key);
            w.push_back(std::exp(-std::sqrt(static_cast<double>(d2)) * voxel_size));
        }
        const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t n = 0; n < cand.size(); ++n)
            for (std::size_t i = 0; i < r.probs.size(); ++i) r.probs[i] += w[n] / wsum * voxels[cand[n].second].probs[i];
        r.probs = normalized(r.probs);
        out.emplace(q.key, std::move(r));
    }
    return out;
}

/// IoU per class from explicit point sets: |A and B| / |A or B| over evaluated points.
/// `unlabeled_counts_wrong` keeps points predicted as `ignore` as misses of their class.
inline std::vector<double> iou_by_sets(const std::vector<std::uint32_t>& gt, const std::vector<std::uint32_t>& pred,
                                       std::size_t c, std::uint32_t ignore, bool unlabeled_counts_wrong,
                                       std::vector<bool>* defined = nullptr) {
    std::vector<double> out(c, 0.0);
    if (defined) defined->assign(c, false);
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t inter = 0;
        std::size_t uni = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] == ignore) continue;
            if (pred[i] == ignore && !unlabeled_counts_wrong) continue;
            const bool a = gt[i] == k;
            const bool b = pred[i] == k;
            inter += a && b;
            uni += a || b;
        }
        if (uni > 0) {
            out[k] = static_cast<double>(inter) / static_cast<double>(uni);
            if (defined) (*defined)[k] = true;
        }
    }
    return out;
}

/// Single-linkage clustering by union-find over every pair within `gap`; returns the
/// members of the largest cluster (ties to the smallest mean depth), ascending.
inline std::vector<std::size_t> largest_depth_cluster(const std::vector<std::pair<std::size_t, double>>& pts,
                                                      double gap) {
    const std::size_t n = pts.size();
    if (n == 0) return {};
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(pts[i].second - pts[j].second) <= gap) parent[find(i)] = find(j);
    std::map<std::size_t, std::vector<std::size_t>> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters[find(i)].push_back(i);
    const std::vector<std::size_t>* best = nullptr;
    double best_mean = 0.0;
    for (const auto& [root, members] : clusters) {
        double mean = 0.0;
        for (auto m : members) mean += pts[m].second;
        mean /= static_cast<double>(members.size());
        if (!best || members.size() > best->size() || (members.size() == best->size() && mean < best_mean)) {
            best = &members;
            best_mean = mean;
        }
    }
    std::vector<std::size_t> out;
    for (auto m : *best) out.push_back(pts[m].first);
    std::sort(out.begin(), out.end());
    return out;
}

/// Nearest hit along a ray by fine marching followed by bisection on an inside test.
/// Only usable for solid primitives (boxes, cylinders) and the ground half-space.
template <typename Inside>
inline double march_to_surface(Inside inside, double max_range, double step = 1e-3) {
    double prev = 0.0;
    for (double t = step; t <= max_range; t += step) {
        if (inside(t)) {
            double lo = prev;
            double hi = t;
            for (int i = 0; i < 60; ++i) {
                const double mid = 0.5 * (lo + hi);
                (inside(mid) ? hi : lo) = mid;
            }
            return hi;
        }
        prev = t;
    }
    return -1.0;
}

}  // namespace oracle
