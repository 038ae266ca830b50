#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "leap/geometry.hpp"
#include "leap/label2d.hpp"
#include "leap/taxonomy.hpp"

namespace leap::synth {

enum class Shape { GroundPlane, Box, Cylinder };

/// One labeled solid. Ground planes span the scene bounds at `height`; boxes are
/// axis-aligned [min, max]; cylinders are vertical with `center` (x, y), `radius` and
/// z range [z_min, z_max].
struct Primitive {
    Shape shape = Shape::GroundPlane;
    double height = 0.0;
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double radius = 0.0;
    double z_min = 0.0;
    double z_max = 0.0;
    Label class_index = 0;

    static Primitive ground(double height, Label cls);
    static Primitive box(const Eigen::Vector3d& min, const Eigen::Vector3d& max, Label cls);
    static Primitive cylinder(const Eigen::Vector2d& center, double radius, double z_min, double z_max, Label cls);

    /// Distance from `p` to the primitive's surface (the plane for ground planes).
    double surface_distance(const Eigen::Vector3d& p) const;
};

struct SceneSpec {
    std::vector<Primitive> primitives;
    Eigen::Vector3d bounds_min{-50.0, -50.0, -5.0};
    Eigen::Vector3d bounds_max{50.0, 50.0, 30.0};
    std::uint64_t seed = 0;

    /// Throws ParameterError when a primitive leaves the bounds, is degenerate, or uses a
    /// class index >= num_classes.
    void validate(std::size_t num_classes) const;
};

struct LidarSpec {
    int azimuth_count = 360;
    int elevation_count = 32;
    double azimuth_min_deg = -180.0;
    double azimuth_max_deg = 180.0;
    double elevation_min_deg = -25.0;
    double elevation_max_deg = 10.0;
    double max_range = 40.0;

    void validate() const;
    /// Unit ray directions in the sensor frame (x forward, z up), elevation-major.
    std::vector<Eigen::Vector3d> directions() const;
};

struct SensorSpec {
    LidarSpec lidar;
    CameraIntrinsics camera{160.0, 160.0, 160.0, 80.0, 320, 160};
    /// Camera pose in the LiDAR frame (camera axes: x right, y down, z forward).
    RigidTransform sensor_from_camera;
    /// World-from-LiDAR pose per frame.
    std::vector<RigidTransform> trajectory;

    void validate() const;
    RigidTransform cam_from_lidar() const { return sensor_from_camera.inverse(); }
};

/// Rotation taking camera axes (x right, y down, z forward) to LiDAR axes (x forward,
/// y left, z up), with the given mount offset.
RigidTransform forward_camera_mount(const Eigen::Vector3d& offset = Eigen::Vector3d::Zero());

struct RayHit {
    double range = 0.0;
    std::size_t primitive = 0;
    Label class_index = 0;
};

/// Nearest intersection with t in (0, max_range]. `direction` must be unit length.
std::optional<RayHit> cast_ray(const SceneSpec& scene, const Eigen::Vector3d& origin,
                               const Eigen::Vector3d& direction, double max_range);

struct SimulatedScan {
    PointCloud cloud;  // sensor frame
    std::vector<Label> labels;
    std::vector<std::size_t> primitive;
};

SimulatedScan simulate_scan(const SceneSpec& scene, const LidarSpec& lidar, const RigidTransform& world_from_sensor);

/// Per-pixel ray-cast classes plus the noisy class actually emitted.
struct PixelClasses {
    int width = 0;
    int height = 0;
    Bitmap covered;
    std::vector<Label> true_class;     // per pixel; meaningful where covered
    std::vector<Label> chosen_class;   // after class-flip noise
    std::vector<std::size_t> primitive;

    std::size_t flips() const;
};

/// Ray-casts every pixel center and applies class-flip noise with probability `noise`.
/// The noise stream for pixel i depends only on (seed, i).
PixelClasses simulate_pixel_classes(const SceneSpec& scene, const CameraIntrinsics& camera,
                                    const RigidTransform& world_from_camera, std::size_t num_classes,
                                    double noise, std::uint64_t seed);

/// Soft map with `peak` on the chosen class and (1 - peak) / (c - 1) elsewhere.
PixelProbMap pixel_probs_from_classes(const PixelClasses& classes, std::size_t num_classes, double peak);

PixelProbMap simulate_pixel_probs(const SceneSpec& scene, const CameraIntrinsics& camera,
                                  const RigidTransform& world_from_camera, std::size_t num_classes, double noise,
                                  double peak, std::uint64_t seed);

namespace serial {
SimulatedScan simulate_scan(const SceneSpec& scene, const LidarSpec& lidar, const RigidTransform& world_from_sensor);
PixelClasses simulate_pixel_classes(const SceneSpec& scene, const CameraIntrinsics& camera,
                                    const RigidTransform& world_from_camera, std::size_t num_classes,
                                    double noise, std::uint64_t seed);
}  // namespace serial

/// Detector-style regions reproducing `pixel_probs_from_classes`: one masked region per
/// (primitive, emitted class) group, with logits whose per-class softmax equals the
/// soft label.
RegionFile regions_from_classes(const PixelClasses& classes, const PromptMap& prompts, double peak);

/// Counter-based hash used for all synthetic noise streams.
std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);
/// Uniform in [0, 1) from a hash value.
double unit_uniform(std::uint64_t h);

/// Six-class outdoor taxonomy: ground, building, vehicle, pole, tree, person.
TaxonomyConfig default_taxonomy();
/// Seeded layout of buildings, vehicles, poles, trees and people around a loop road.
SceneSpec default_scene(std::uint64_t seed);
/// Spinning LiDAR with a forward camera driving `frames` poses around a loop of
/// radius `loop_radius` meters (`turns` full turns).
SensorSpec default_sensor(std::size_t frames, double loop_radius = 15.0, double turns = 1.0);

nlohmann::json scene_to_json(const SceneSpec& scene);
SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json sensor_to_json(const SensorSpec& sensor);
SensorSpec sensor_from_json(const nlohmann::json& j);

struct DatasetOptions {
    double noise = 0.0;
    double peak = 1.0;
    std::uint64_t seed = 0;
};

/// Writes taxonomy.json, scene.json, sensor.json, calib.txt, poses.txt and, per frame,
/// velodyne/*.bin, labels/*.label (ground truth) and regions/*.json.
void write_dataset(const std::filesystem::path& root, const TaxonomyConfig& taxonomy, const SceneSpec& scene,
                   const SensorSpec& sensor, const DatasetOptions& options);

}  // namespace leap::synth
