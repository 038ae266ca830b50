#include "leap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "leap/error.hpp"
#include "leap/io.hpp"

namespace leap::synth {

namespace {

constexpr double kMinRange = 1e-6;

std::optional<double> hit_ground(const Primitive& g, const SceneSpec& scene, const Eigen::Vector3d& o,
                                 const Eigen::Vector3d& d) {
    if (d.z() == 0.0) return std::nullopt;
    const double t = (g.height - o.z()) / d.z();
    if (!(t > kMinRange)) return std::nullopt;
    const Eigen::Vector3d p = o + t * d;
    if (p.x() < scene.bounds_min.x() || p.x() > scene.bounds_max.x() || p.y() < scene.bounds_min.y() ||
        p.y() > scene.bounds_max.y())
        return std::nullopt;
    return t;
}

std::optional<double> hit_box(const Primitive& b, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
            continue;
        }
        double t0 = (b.min[a] - o[a]) / d[a];
        double t1 = (b.max[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far) return std::nullopt;
    if (t_near > kMinRange) return t_near;
    if (t_far > kMinRange) return t_far;  // origin inside the box
    return std::nullopt;
}

std::optional<double> hit_cylinder(const Primitive& c, const Eigen::Vector3d& o, const Eigen::Vector3d& d) {
    std::optional<double> best;
    auto consider = [&](double t) {
        if (t > kMinRange && (!best || t < *best)) best = t;
    };
    const double ox = o.x() - c.center.x();
    const double oy = o.y() - c.center.y();
    const double a = d.x() * d.x() + d.y() * d.y();
    if (a > 0.0) {
        const double b = 2.0 * (ox * d.x() + oy * d.y());
        const double cc = ox * ox + oy * oy - c.radius * c.radius;
        const double disc = b * b - 4.0 * a * cc;
        if (disc >= 0.0) {
            const double s = std::sqrt(disc);
            for (double t : {(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)}) {
                const double z = o.z() + t * d.z();
                if (z >= c.z_min && z <= c.z_max) consider(t);
            }
        }
    }
    if (d.z() != 0.0) {
        for (double zc : {c.z_min, c.z_max}) {
            const double t = (zc - o.z()) / d.z();
            const double x = ox + t * d.x();
            const double y = oy + t * d.y();
            if (x * x + y * y <= c.radius * c.radius) consider(t);
        }
    }
    return best;
}

}  // namespace

Primitive Primitive::ground(double height, Label cls) {
    Primitive p;
    p.shape = Shape::GroundPlane;
    p.height = height;
    p.class_index = cls;
    return p;
}

Primitive Primitive::box(const Eigen::Vector3d& min, const Eigen::Vector3d& max, Label cls) {
    Primitive p;
    p.shape = Shape::Box;
    p.min = min;
    p.max = max;
    p.class_index = cls;
    return p;
}

Primitive Primitive::cylinder(const Eigen::Vector2d& center, double radius, double z_min, double z_max, Label cls) {
    Primitive p;
    p.shape = Shape::Cylinder;
    p.center = center;
    p.radius = radius;
    p.z_min = z_min;
    p.z_max = z_max;
    p.class_index = cls;
    return p;
}

double Primitive::surface_distance(const Eigen::Vector3d& p) const {
    switch (shape) {
        case Shape::GroundPlane:
            return std::abs(p.z() - height);
        case Shape::Box: {
            const Eigen::Vector3d outside = (min - p).cwiseMax(p - max).cwiseMax(0.0);
            if (outside.squaredNorm() > 0.0) return outside.norm();
            const Eigen::Vector3d inside = (p - min).cwiseMin(max - p);
            return inside.minCoeff();
        }
        case Shape::Cylinder: {
            const double radial = std::hypot(p.x() - center.x(), p.y() - center.y()) - radius;
            const double axial = std::max(z_min - p.z(), p.z() - z_max);
            if (radial <= 0.0 && axial <= 0.0) return std::min(-radial, -axial);
            return std::hypot(std::max(radial, 0.0), std::max(axial, 0.0));
        }
    }
    return std::numeric_limits<double>::infinity();
}

void SceneSpec::validate(std::size_t num_classes) const {
    if (!(bounds_min.array() < bounds_max.array()).all()) throw ParameterError("bounds: min must be below max");
    auto inside = [&](const Eigen::Vector3d& p) {
        return (p.array() >= bounds_min.array()).all() && (p.array() <= bounds_max.array()).all();
    };
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto& p = primitives[i];
        const std::string where = "primitives[" + std::to_string(i) + "]";
        if (p.class_index >= num_classes) throw ParameterError(where + ": class index out of range");
        switch (p.shape) {
            case Shape::GroundPlane:
                if (p.height < bounds_min.z() || p.height > bounds_max.z())
                    throw ParameterError(where + ": ground height outside bounds");
                break;
            case Shape::Box:
                if (!(p.min.array() < p.max.array()).all()) throw ParameterError(where + ": degenerate box");
                if (!inside(p.min) || !inside(p.max)) throw ParameterError(where + ": box outside bounds");
                break;
            case Shape::Cylinder:
                if (!(p.radius > 0.0) || !(p.z_min < p.z_max)) throw ParameterError(where + ": degenerate cylinder");
                if (!inside({p.center.x() - p.radius, p.center.y() - p.radius, p.z_min}) ||
                    !inside({p.center.x() + p.radius, p.center.y() + p.radius, p.z_max}))
                    throw ParameterError(where + ": cylinder outside bounds");
                break;
        }
    }
}

void LidarSpec::validate() const {
    if (azimuth_count < 1 || elevation_count < 1) throw ParameterError("lidar: ray counts must be >= 1");
    if (!(max_range > 0.0)) throw ParameterError("lidar: max_range must be positive");
    if (azimuth_min_deg > azimuth_max_deg || elevation_min_deg > elevation_max_deg)
        throw ParameterError("lidar: field of view limits are reversed");
}

std::vector<Eigen::Vector3d> LidarSpec::directions() const {
    std::vector<Eigen::Vector3d> dirs;
    dirs.reserve(static_cast<std::size_t>(azimuth_count) * elevation_count);
    const double deg = std::numbers::pi / 180.0;
    // A full 360 degree sweep must not sample the seam twice.
    const bool full_turn = azimuth_max_deg - azimuth_min_deg >= 360.0;
    const double az_step = azimuth_count > 1
                               ? (azimuth_max_deg - azimuth_min_deg) / (full_turn ? azimuth_count : azimuth_count - 1)
                               : 0.0;
    const double el_step = elevation_count > 1 ? (elevation_max_deg - elevation_min_deg) / (elevation_count - 1) : 0.0;
    for (int e = 0; e < elevation_count; ++e) {
        const double el = (elevation_min_deg + e * el_step) * deg;
        for (int a = 0; a < azimuth_count; ++a) {
            const double az = (azimuth_min_deg + a * az_step) * deg;
            dirs.emplace_back(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        }
    }
    return dirs;
}

void SensorSpec::validate() const {
    lidar.validate();
    camera.validate();
}

RigidTransform forward_camera_mount(const Eigen::Vector3d& offset) {
    Eigen::Matrix3d r;
    // Columns: camera x (right) = -y_lidar, camera y (down) = -z_lidar, camera z = x_lidar.
    r << 0, 0, 1,
        -1, 0, 0,
        0, -1, 0;
    return {r, offset};
}

std::optional<RayHit> cast_ray(const SceneSpec& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                               double max_range) {
    std::optional<RayHit> best;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto& p = scene.primitives[i];
        std::optional<double> t;
        switch (p.shape) {
            case Shape::GroundPlane: t = hit_ground(p, scene, origin, dir); break;
            case Shape::Box: t = hit_box(p, origin, dir); break;
            case Shape::Cylinder: t = hit_cylinder(p, origin, dir); break;
        }
        if (t && *t <= max_range && (!best || *t < best->range)) best = RayHit{*t, i, p.class_index};
    }
    return best;
}

namespace {

struct RayResult {
    bool hit = false;
    RayHit info;
};

SimulatedScan collect(const std::vector<Eigen::Vector3d>& dirs, const std::vector<RayResult>& results) {
    SimulatedScan scan;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        if (!results[i].hit) continue;
        scan.cloud.points.push_back(results[i].info.range * dirs[i]);
        scan.cloud.intensity.push_back(0.0f);
        scan.labels.push_back(results[i].info.class_index);
        scan.primitive.push_back(results[i].info.primitive);
    }
    return scan;
}

RayResult trace(const SceneSpec& scene, const RigidTransform& pose, const Eigen::Vector3d& dir, double range) {
    const auto hit = cast_ray(scene, pose.translation(), pose.rotation() * dir, range);
    return hit ? RayResult{true, *hit} : RayResult{};
}

}  // namespace

SimulatedScan simulate_scan(const SceneSpec& scene, const LidarSpec& lidar, const RigidTransform& world_from_sensor) {
    lidar.validate();
    const auto dirs = lidar.directions();
    std::vector<RayResult> results(dirs.size());
    const auto n = static_cast<std::ptrdiff_t>(dirs.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        results[idx] = trace(scene, world_from_sensor, dirs[idx], lidar.max_range);
    }
    return collect(dirs, results);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over a combined key.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::size_t PixelClasses::flips() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < true_class.size(); ++i)
        if (covered.data()[i] && true_class[i] != chosen_class[i]) ++n;
    return n;
}

namespace {

PixelClasses empty_pixel_classes(const CameraIntrinsics& camera) {
    PixelClasses out;
    out.width = camera.width;
    out.height = camera.height;
    out.covered = Bitmap(camera.width, camera.height);
    const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
    out.true_class.assign(n, 0);
    out.chosen_class.assign(n, 0);
    out.primitive.assign(n, 0);
    return out;
}

void check_pixel_params(std::size_t num_classes, double noise) {
    if (num_classes == 0) throw ParameterError("num_classes: must be positive");
    if (!(noise >= 0.0 && noise <= 1.0)) throw ParameterError("noise: must lie in [0, 1]");
}

void shade_pixel(const SceneSpec& scene, const CameraIntrinsics& camera, const RigidTransform& world_from_camera,
                 std::size_t num_classes, double noise, std::uint64_t seed, std::size_t idx, PixelClasses& out) {
    const int u = static_cast<int>(idx % static_cast<std::size_t>(camera.width));
    const int v = static_cast<int>(idx / static_cast<std::size_t>(camera.width));
    const Eigen::Vector3d ray_cam =
        Eigen::Vector3d((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0).normalized();
    const auto hit = cast_ray(scene, world_from_camera.translation(), world_from_camera.rotation() * ray_cam,
                              std::numeric_limits<double>::infinity());
    if (!hit) return;
    out.covered.data()[idx] = 1;
    out.true_class[idx] = hit->class_index;
    out.primitive[idx] = hit->primitive;
    Label chosen = hit->class_index;
    if (num_classes > 1) {
        const std::uint64_t h = mix(seed, idx);
        if (unit_uniform(h) < noise) {
            // Uniform over the c - 1 wrong classes.
            const auto offset = 1 + mix(h, 1) % (num_classes - 1);
            chosen = static_cast<Label>((hit->class_index + offset) % num_classes);
        }
    }
    out.chosen_class[idx] = chosen;
}

}  // namespace

PixelClasses simulate_pixel_classes(const SceneSpec& scene, const CameraIntrinsics& camera,
                                    const RigidTransform& world_from_camera, std::size_t num_classes, double noise,
                                    std::uint64_t seed) {
    camera.validate();
    check_pixel_params(num_classes, noise);
    PixelClasses out = empty_pixel_classes(camera);
    const auto n = static_cast<std::ptrdiff_t>(out.true_class.size());
#pragma omp parallel for schedule(dynamic, 512)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        shade_pixel(scene, camera, world_from_camera, num_classes, noise, seed, static_cast<std::size_t>(i), out);
    return out;
}

PixelProbMap pixel_probs_from_classes(const PixelClasses& classes, std::size_t num_classes, double peak) {
    const double floor = num_classes > 1 ? 1.0 / static_cast<double>(num_classes) : 0.0;
    if (!(peak > floor && peak <= 1.0)) throw ParameterError("peak: must lie in (1/c, 1]");
    PixelProbMap map(classes.width, classes.height, num_classes);
    const double rest = num_classes > 1 ? (1.0 - peak) / static_cast<double>(num_classes - 1) : 0.0;
    std::vector<double> probs(num_classes);
    for (int v = 0; v < classes.height; ++v)
        for (int u = 0; u < classes.width; ++u) {
            const std::size_t idx = static_cast<std::size_t>(v) * classes.width + u;
            if (!classes.covered.data()[idx]) continue;
            std::fill(probs.begin(), probs.end(), rest);
            probs[classes.chosen_class[idx]] = num_classes > 1 ? peak : 1.0;
            map.set(u, v, probs);
        }
    return map;
}

PixelProbMap simulate_pixel_probs(const SceneSpec& scene, const CameraIntrinsics& camera,
                                  const RigidTransform& world_from_camera, std::size_t num_classes, double noise,
                                  double peak, std::uint64_t seed) {
    return pixel_probs_from_classes(
        simulate_pixel_classes(scene, camera, world_from_camera, num_classes, noise, seed), num_classes, peak);
}

namespace serial {

SimulatedScan simulate_scan(const SceneSpec& scene, const LidarSpec& lidar, const RigidTransform& world_from_sensor) {
    lidar.validate();
    const auto dirs = lidar.directions();
    std::vector<RayResult> results;
    results.reserve(dirs.size());
    for (const auto& d : dirs) results.push_back(trace(scene, world_from_sensor, d, lidar.max_range));
    return collect(dirs, results);
}

PixelClasses simulate_pixel_classes(const SceneSpec& scene, const CameraIntrinsics& camera,
                                    const RigidTransform& world_from_camera, std::size_t num_classes, double noise,
                                    std::uint64_t seed) {
    camera.validate();
    check_pixel_params(num_classes, noise);
    PixelClasses out = empty_pixel_classes(camera);
    for (std::size_t i = 0; i < out.true_class.size(); ++i)
        shade_pixel(scene, camera, world_from_camera, num_classes, noise, seed, i, out);
    return out;
}

}  // namespace serial

RegionFile regions_from_classes(const PixelClasses& classes, const PromptMap& prompts, double peak) {
    const std::size_t c = prompts.num_classes();
    const double floor = c > 1 ? 1.0 / static_cast<double>(c) : 0.0;
    if (!(peak > floor && peak <= 1.0)) throw ParameterError("peak: must lie in (1/c, 1]");
    // softmax over per-class logits gives `peak` when the chosen class leads every other
    // class by ln(peak (c - 1) / (1 - peak)).
    constexpr double kChosenLogit = 3.0;
    double gap = 40.0;
    if (c > 1 && peak < 1.0) gap = std::log(peak * static_cast<double>(c - 1) / (1.0 - peak));

    std::map<std::pair<std::size_t, Label>, std::size_t> group_of;
    RegionFile file;
    file.width = classes.width;
    file.height = classes.height;
    struct Box {
        int x0, y0, x1, y1;
    };
    std::vector<Box> boxes;
    for (int v = 0; v < classes.height; ++v)
        for (int u = 0; u < classes.width; ++u) {
            const std::size_t idx = static_cast<std::size_t>(v) * classes.width + u;
            if (!classes.covered.data()[idx]) continue;
            const auto key = std::make_pair(classes.primitive[idx], classes.chosen_class[idx]);
            auto it = group_of.find(key);
            if (it == group_of.end()) {
                it = group_of.emplace(key, file.regions.size()).first;
                RegionProposal region;
                region.mask = Bitmap(classes.width, classes.height);
                region.logits.resize(prompts.size());
                for (std::size_t p = 0; p < prompts.size(); ++p)
                    region.logits[p] = prompts.prompts()[p].class_index == key.second ? kChosenLogit
                                                                                      : kChosenLogit - gap;
                file.regions.push_back(std::move(region));
                boxes.push_back({u, v, u + 1, v + 1});
            }
            auto& region = file.regions[it->second];
            region.mask->set(u, v);
            auto& b = boxes[it->second];
            b.x0 = std::min(b.x0, u);
            b.y0 = std::min(b.y0, v);
            b.x1 = std::max(b.x1, u + 1);
            b.y1 = std::max(b.y1, v + 1);
        }
    for (std::size_t r = 0; r < file.regions.size(); ++r) {
        file.regions[r].x_min = boxes[r].x0;
        file.regions[r].y_min = boxes[r].y0;
        file.regions[r].x_max = boxes[r].x1;
        file.regions[r].y_max = boxes[r].y1;
    }
    return file;
}

TaxonomyConfig default_taxonomy() {
    const std::vector<std::pair<std::string, int>> prompts = {
        {"road", 0},  {"ground", 0}, {"grass", 0}, {"building", 1}, {"house", 1},  {"car", 2},        {"automobile", 2},
        {"van", 2},   {"pole", 3},   {"post", 3},  {"tree", 4},     {"person", 5}, {"pedestrian", 5},
    };
    nlohmann::json j;
    j["classes"] = {"ground", "building", "vehicle", "pole", "tree", "person"};
    j["prompts"] = nlohmann::json::array();
    for (const auto& [text, cls] : prompts) j["prompts"].push_back(nlohmann::json::array({text, cls}));
    j["categories"] = {{"flat", {0}}, {"construction", {1, 3}}, {"object", {2, 5}}, {"nature", {4}}};
    return taxonomy_from_json(j);
}

SceneSpec default_scene(std::uint64_t seed) {
    SceneSpec scene;
    scene.seed = seed;
    scene.bounds_min = {-40.0, -40.0, -1.0};
    scene.bounds_max = {40.0, 40.0, 20.0};
    scene.primitives.push_back(Primitive::ground(0.0, 0));

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Footprint {
        Eigen::Vector2d c;
        double r;
    };
    std::vector<Footprint> placed;
    // Rejection-sample a footprint center at radius [r_lo, r_hi] from the origin.
    auto place = [&](double r_lo, double r_hi, double radius) -> std::optional<Eigen::Vector2d> {
        for (int attempt = 0; attempt < 200; ++attempt) {
            const double ang = 2.0 * std::numbers::pi * unit(rng);
            const double rad = r_lo + (r_hi - r_lo) * unit(rng);
            const Eigen::Vector2d c(rad * std::cos(ang), rad * std::sin(ang));
            const bool clear = std::none_of(placed.begin(), placed.end(), [&](const Footprint& f) {
                return (f.c - c).norm() < f.r + radius + 1.0;
            });
            if (clear) {
                placed.push_back({c, radius});
                return c;
            }
        }
        return std::nullopt;
    };
    auto add_box = [&](const Eigen::Vector2d& c, double sx, double sy, double h, Label cls) {
        scene.primitives.push_back(
            Primitive::box({c.x() - sx / 2, c.y() - sy / 2, 0.0}, {c.x() + sx / 2, c.y() + sy / 2, h}, cls));
    };

    for (int i = 0; i < 5; ++i) {
        const double sx = 6.0 + 4.0 * unit(rng);
        const double sy = 6.0 + 4.0 * unit(rng);
        if (auto c = place(24.0, 32.0, 0.5 * std::hypot(sx, sy))) add_box(*c, sx, sy, 5.0 + 5.0 * unit(rng), 1);
    }
    for (int i = 0; i < 6; ++i) {
        const bool along_x = unit(rng) < 0.5;
        const double lo = i % 2 ? 19.5 : 9.0;
        if (auto c = place(lo, lo + 1.5, 2.5)) add_box(*c, along_x ? 4.5 : 1.8, along_x ? 1.8 : 4.5, 1.5, 2);
    }
    for (int i = 0; i < 8; ++i) {
        const double lo = i % 2 ? 18.8 : 10.0;
        if (auto c = place(lo, lo + 1.2, 0.2)) scene.primitives.push_back(Primitive::cylinder(*c, 0.2, 0.0, 5.0, 3));
    }
    for (int i = 0; i < 8; ++i) {
        const double r = 0.8 + 0.4 * unit(rng);
        const double lo = i % 2 ? 20.0 : 4.0;
        if (auto c = place(lo, lo + 6.0, r))
            scene.primitives.push_back(Primitive::cylinder(*c, r, 0.0, 4.0 + 3.0 * unit(rng), 4));
    }
    for (int i = 0; i < 6; ++i) {
        const double lo = i % 2 ? 18.5 : 10.5;
        if (auto c = place(lo, lo + 1.0, 0.4)) add_box(*c, 0.6, 0.6, 1.8, 5);
    }
    return scene;
}

SensorSpec default_sensor(std::size_t frames, double loop_radius, double turns) {
    SensorSpec sensor;
    sensor.sensor_from_camera = forward_camera_mount();
    for (std::size_t k = 0; k < frames; ++k) {
        const double phi = 2.0 * std::numbers::pi * turns * static_cast<double>(k) / static_cast<double>(frames);
        sensor.trajectory.push_back(RigidTransform::from_yaw(
            phi + std::numbers::pi / 2.0, {loop_radius * std::cos(phi), loop_radius * std::sin(phi), 1.8}));
    }
    return sensor;
}

namespace {

nlohmann::json vec(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }

Eigen::Vector3d vec3(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ParameterError("expected a 3-vector");
    return {v[0], v[1], v[2]};
}

nlohmann::json pose_json(const RigidTransform& t) {
    const auto m = t.matrix();
    nlohmann::json out = nlohmann::json::array();
    for (int k = 0; k < 12; ++k) out.push_back(m(k / 4, k % 4));
    return out;
}

RigidTransform pose_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 12) throw ParameterError("poses need 12 values");
    Eigen::Matrix<double, 3, 4> m;
    for (int k = 0; k < 12; ++k) m(k / 4, k % 4) = v[static_cast<std::size_t>(k)];
    return rigid_from_matrix(m);
}

}  // namespace

nlohmann::json scene_to_json(const SceneSpec& scene) {
    nlohmann::json j;
    j["bounds"] = {vec(scene.bounds_min), vec(scene.bounds_max)};
    j["seed"] = scene.seed;
    j["primitives"] = nlohmann::json::array();
    for (const auto& p : scene.primitives) {
        nlohmann::json jp;
        jp["class"] = p.class_index;
        switch (p.shape) {
            case Shape::GroundPlane:
                jp["shape"] = "ground";
                jp["height"] = p.height;
                break;
            case Shape::Box:
                jp["shape"] = "box";
                jp["min"] = vec(p.min);
                jp["max"] = vec(p.max);
                break;
            case Shape::Cylinder:
                jp["shape"] = "cylinder";
                jp["center"] = {p.center.x(), p.center.y()};
                jp["radius"] = p.radius;
                jp["z_min"] = p.z_min;
                jp["z_max"] = p.z_max;
                break;
        }
        j["primitives"].push_back(std::move(jp));
    }
    return j;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
    SceneSpec scene;
    try {
        if (j.contains("bounds")) {
            scene.bounds_min = vec3(j.at("bounds").at(0));
            scene.bounds_max = vec3(j.at("bounds").at(1));
        }
        scene.seed = j.value("seed", std::uint64_t{0});
        for (const auto& jp : j.at("primitives")) {
            const auto shape = jp.at("shape").get<std::string>();
            const auto cls = jp.at("class").get<Label>();
            if (shape == "ground") {
                scene.primitives.push_back(Primitive::ground(jp.value("height", 0.0), cls));
            } else if (shape == "box") {
                scene.primitives.push_back(Primitive::box(vec3(jp.at("min")), vec3(jp.at("max")), cls));
            } else if (shape == "cylinder") {
                const auto c = jp.at("center").get<std::vector<double>>();
                if (c.size() != 2) throw ParameterError("cylinder center needs 2 values");
                scene.primitives.push_back(Primitive::cylinder({c[0], c[1]}, jp.at("radius").get<double>(),
                                                               jp.at("z_min").get<double>(),
                                                               jp.at("z_max").get<double>(), cls));
            } else {
                throw ParameterError("unknown primitive shape '" + shape + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("scene json: ") + e.what());
    }
    return scene;
}

nlohmann::json sensor_to_json(const SensorSpec& sensor) {
    const auto& l = sensor.lidar;
    const auto& c = sensor.camera;
    nlohmann::json j;
    j["lidar"] = {{"azimuth_count", l.azimuth_count},     {"elevation_count", l.elevation_count},
                  {"azimuth_min_deg", l.azimuth_min_deg}, {"azimuth_max_deg", l.azimuth_max_deg},
                  {"elevation_min_deg", l.elevation_min_deg}, {"elevation_max_deg", l.elevation_max_deg},
                  {"max_range", l.max_range}};
    j["camera"] = {{"fx", c.fx},       {"fy", c.fy},         {"cx", c.cx},
                   {"cy", c.cy},       {"width", c.width},   {"height", c.height},
                   {"mount", pose_json(sensor.sensor_from_camera)}};
    j["trajectory"] = nlohmann::json::array();
    for (const auto& pose : sensor.trajectory) j["trajectory"].push_back(pose_json(pose));
    return j;
}

SensorSpec sensor_from_json(const nlohmann::json& j) {
    SensorSpec s;
    try {
        const auto& l = j.at("lidar");
        s.lidar.azimuth_count = l.value("azimuth_count", s.lidar.azimuth_count);
        s.lidar.elevation_count = l.value("elevation_count", s.lidar.elevation_count);
        s.lidar.azimuth_min_deg = l.value("azimuth_min_deg", s.lidar.azimuth_min_deg);
        s.lidar.azimuth_max_deg = l.value("azimuth_max_deg", s.lidar.azimuth_max_deg);
        s.lidar.elevation_min_deg = l.value("elevation_min_deg", s.lidar.elevation_min_deg);
        s.lidar.elevation_max_deg = l.value("elevation_max_deg", s.lidar.elevation_max_deg);
        s.lidar.max_range = l.value("max_range", s.lidar.max_range);
        const auto& c = j.at("camera");
        s.camera = {c.at("fx").get<double>(), c.at("fy").get<double>(),  c.at("cx").get<double>(),
                    c.at("cy").get<double>(), c.at("width").get<int>(), c.at("height").get<int>()};
        s.sensor_from_camera = c.contains("mount") ? pose_from(c.at("mount")) : forward_camera_mount();
        for (const auto& p : j.at("trajectory")) s.trajectory.push_back(pose_from(p));
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("sensor json: ") + e.what());
    }
    s.validate();
    return s;
}

void write_dataset(const std::filesystem::path& root, const TaxonomyConfig& taxonomy, const SceneSpec& scene,
                   const SensorSpec& sensor, const DatasetOptions& options) {
    const std::size_t c = taxonomy.taxonomy.num_classes();
    scene.validate(c);
    sensor.validate();
    write_file_atomic(root / "taxonomy.json", taxonomy_to_json(taxonomy).dump(2));
    write_file_atomic(root / "scene.json", scene_to_json(scene).dump(2));
    write_file_atomic(root / "sensor.json", sensor_to_json(sensor).dump(2));

    Calibration calib;
    calib.fx = sensor.camera.fx;
    calib.fy = sensor.camera.fy;
    calib.cx = sensor.camera.cx;
    calib.cy = sensor.camera.cy;
    calib.cam_from_lidar = sensor.cam_from_lidar();
    write_calibration(root / "calib.txt", calib);
    write_poses(root / "poses.txt", sensor.trajectory);

    for (std::size_t f = 0; f < sensor.trajectory.size(); ++f) {
        const auto& pose = sensor.trajectory[f];
        const auto scan = simulate_scan(scene, sensor.lidar, pose);
        write_point_cloud(root / "velodyne" / frame_name(f, ".bin"), scan.cloud);
        write_labels(root / "labels" / frame_name(f, ".label"), scan.labels);
        const auto classes = simulate_pixel_classes(scene, sensor.camera, compose(pose, sensor.sensor_from_camera), c,
                                                    options.noise, mix(options.seed, f));
        write_region_file(root / "regions" / frame_name(f, ".json"),
                          regions_from_classes(classes, taxonomy.prompts, options.peak));
    }
}

}  // namespace leap::synth
