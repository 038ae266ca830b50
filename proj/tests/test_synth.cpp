#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "leap/error.hpp"
#include "leap/io.hpp"
#include "leap/label2d.hpp"
#include "leap/synth.hpp"
#include "oracles.hpp"

using namespace leap;
using namespace leap::synth;

namespace {

bool inside(const SceneSpec& scene, const Primitive& p, const Eigen::Vector3d& x) {
    switch (p.shape) {
        case Shape::GroundPlane:
            return x.z() <= p.height && x.x() >= scene.bounds_min.x() && x.x() <= scene.bounds_max.x() &&
                   x.y() >= scene.bounds_min.y() && x.y() <= scene.bounds_max.y();
        case Shape::Box:
            return (x.array() >= p.min.array()).all() && (x.array() <= p.max.array()).all();
        case Shape::Cylinder:
            return std::hypot(x.x() - p.center.x(), x.y() - p.center.y()) <= p.radius && x.z() >= p.z_min &&
                   x.z() <= p.z_max;
    }
    return false;
}

bool inside_any(const SceneSpec& scene, const Eigen::Vector3d& x) {
    for (const auto& p : scene.primitives)
        if (inside(scene, p, x)) return true;
    return false;
}

SceneSpec random_scene(oracle::Rng& rng) {
    SceneSpec s;
    s.bounds_min = {-10, -10, -1};
    s.bounds_max = {10, 10, 8};
    std::uniform_real_distribution<double> xy(-8.0, 8.0);
    std::uniform_real_distribution<double> size(0.3, 3.0);
    s.primitives.push_back(Primitive::ground(0.0, 0));
    for (int i = 0; i < 4; ++i) {
        const Eigen::Vector3d lo(xy(rng), xy(rng), 0.0);
        s.primitives.push_back(Primitive::box(lo, lo + Eigen::Vector3d(size(rng), size(rng), size(rng)), 1));
        s.primitives.push_back(Primitive::cylinder({xy(rng), xy(rng)}, 0.2 * size(rng), 0.0, 2.0 * size(rng), 2));
    }
    return s;
}

Eigen::Vector3d random_unit(oracle::Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    return Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
}

bool same_scan(const SimulatedScan& a, const SimulatedScan& b) {
    return a.cloud.points == b.cloud.points && a.labels == b.labels && a.primitive == b.primitive;
}

}  // namespace

TEST_CASE("ray casting examples") {
    SceneSpec empty;
    const LidarSpec lidar;
    CHECK(simulate_scan(empty, lidar, RigidTransform::identity()).cloud.empty());

    SceneSpec ground;
    ground.primitives.push_back(Primitive::ground(0.0, 0));
    const auto down = cast_ray(ground, {1.0, 2.0, 1.7}, {0, 0, -1}, 40.0);
    REQUIRE(down);
    CHECK(down->range == doctest::Approx(1.7).epsilon(1e-15));
    CHECK(down->class_index == 0);
    CHECK_FALSE(cast_ray(ground, {0, 0, 1.7}, {0, 0, 1}, 40.0));
    CHECK_FALSE(cast_ray(ground, {0, 0, 1.7}, {0, 0, -1}, 1.0));

    // A box between the sensor and the ground takes the hit.
    SceneSpec scene = ground;
    scene.primitives.push_back(Primitive::box({4, -1, 0}, {6, 1, 2}, 1));
    const Eigen::Vector3d dir = Eigen::Vector3d(10.0, 0.0, -1.7).normalized();
    const auto hit = cast_ray(scene, {0, 0, 1.7}, dir, 40.0);
    REQUIRE(hit);
    CHECK(hit->class_index == 1);
    CHECK(hit->primitive == 1);
    CHECK(hit->range == doctest::Approx(4.0 / dir.x()).epsilon(1e-12));

    scene.primitives.push_back(Primitive::cylinder({-5, 0}, 0.5, 0.0, 3.0, 3));
    const auto pole = cast_ray(scene, {0, 0, 1.7}, {-1, 0, 0}, 40.0);
    REQUIRE(pole);
    CHECK(pole->class_index == 3);
    CHECK(pole->range == doctest::Approx(4.5).epsilon(1e-12));
    const auto cap = cast_ray(scene, {-5, 0, 5}, {0, 0, -1}, 40.0);
    REQUIRE(cap);
    CHECK(cap->range == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ray casting matches a marching oracle") {
    oracle::Rng rng(71);
    std::size_t compared = 0;
    std::size_t grazing = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto scene = random_scene(rng);
        std::uniform_real_distribution<double> pos(-9.0, 9.0);
        std::uniform_real_distribution<double> height(0.1, 6.0);
        for (int r = 0; r < 40; ++r) {
            Eigen::Vector3d origin;
            do origin = {pos(rng), pos(rng), height(rng)};
            while (inside_any(scene, origin));
            const Eigen::Vector3d dir = random_unit(rng);
            const double max_range = 25.0;
            const auto hit = cast_ray(scene, origin, dir, max_range);
            const double ref =
                oracle::march_to_surface([&](double t) { return inside_any(scene, origin + t * dir); }, max_range, 2e-3);
            ++compared;
            if (ref >= 0.0) {
                REQUIRE(hit);
                CHECK(hit->range == doctest::Approx(ref).epsilon(1e-9).scale(1.0));
                CHECK(inside(scene, scene.primitives[hit->primitive], origin + (ref + 1e-9) * dir));
            } else if (hit) {
                // The ray only grazes a corner or edge thinner than the marching step.
                const auto& p = scene.primitives[hit->primitive];
                CHECK(p.surface_distance(origin + hit->range * dir) < 1e-9);
                ++grazing;
            }
        }
    }
    CHECK(grazing * 100 < compared);
}

TEST_CASE("simulated points lie on their primitives") {
    const auto scene = default_scene(3);
    const auto sensor = default_sensor(8);
    for (const auto& pose : sensor.trajectory) {
        const auto scan = simulate_scan(scene, sensor.lidar, pose);
        REQUIRE(scan.labels.size() == scan.cloud.size());
        CHECK(scan.cloud.size() > 1000);
        for (std::size_t i = 0; i < scan.cloud.size(); ++i) {
            const auto& prim = scene.primitives[scan.primitive[i]];
            CHECK(prim.surface_distance(pose.apply(scan.cloud.points[i])) < 1e-6);
            CHECK(scan.labels[i] == prim.class_index);
            CHECK(scan.cloud.points[i].norm() <= sensor.lidar.max_range + 1e-9);
        }
    }
}

TEST_CASE("simulation is deterministic and thread independent") {
    const auto scene = default_scene(5);
    const auto sensor = default_sensor(4);
    const auto pose = sensor.trajectory[1];
    const auto a = simulate_scan(scene, sensor.lidar, pose);
    CHECK(same_scan(a, simulate_scan(scene, sensor.lidar, pose)));
    CHECK(same_scan(a, synth::serial::simulate_scan(scene, sensor.lidar, pose)));

    const auto cam = pose * sensor.sensor_from_camera;
    const auto p = simulate_pixel_classes(scene, sensor.camera, cam, 6, 0.3, 99);
    const auto q = synth::serial::simulate_pixel_classes(scene, sensor.camera, cam, 6, 0.3, 99);
    CHECK(p.chosen_class == q.chosen_class);
    CHECK(p.true_class == q.true_class);
    CHECK(p.covered.data() == q.covered.data());
    const auto other = simulate_pixel_classes(scene, sensor.camera, cam, 6, 0.3, 100);
    CHECK(other.true_class == p.true_class);
    CHECK(other.chosen_class != p.chosen_class);

    CHECK(scene_to_json(default_scene(5)) == scene_to_json(scene));
    CHECK(scene_to_json(default_scene(6)) != scene_to_json(scene));
}

TEST_CASE("pixel noise model") {
    const auto scene = default_scene(1);
    const auto sensor = default_sensor(4);
    const auto cam = sensor.trajectory[0] * sensor.sensor_from_camera;
    const std::size_t c = 6;

    const auto clean = simulate_pixel_probs(scene, sensor.camera, cam, c, 0.0, 1.0, 7);
    const auto classes = simulate_pixel_classes(scene, sensor.camera, cam, c, 0.0, 7);
    REQUIRE(clean.covered_count() > 1000);
    CHECK(classes.flips() == 0);
    for (int v = 0; v < clean.height(); ++v)
        for (int u = 0; u < clean.width(); ++u) {
            if (!clean.covered(u, v)) continue;
            const auto idx = static_cast<std::size_t>(v) * clean.width() + u;
            CHECK(clean.at(u, v) == ClassDistribution::one_hot(c, classes.true_class[idx]));
        }

    SceneSpec two = scene;
    for (auto& p : two.primitives) p.class_index = p.class_index % 2;
    const auto forced = simulate_pixel_classes(two, sensor.camera, cam, 2, 1.0, 7);
    CHECK(forced.flips() == forced.covered.count());

    const auto noisy = simulate_pixel_classes(scene, sensor.camera, cam, c, 0.3, 12345);
    const double n = static_cast<double>(noisy.covered.count());
    const double sigma = std::sqrt(n * 0.3 * 0.7);
    CHECK(std::abs(static_cast<double>(noisy.flips()) - 0.3 * n) < 3.0 * sigma);
    // Flipped pixels spread evenly over the wrong classes.
    std::vector<double> offsets(c, 0.0);
    for (std::size_t i = 0; i < noisy.true_class.size(); ++i)
        if (noisy.covered.data()[i] && noisy.chosen_class[i] != noisy.true_class[i])
            offsets[(noisy.chosen_class[i] + c - noisy.true_class[i]) % c] += 1.0;
    CHECK(offsets[0] == 0.0);
    const double per = static_cast<double>(noisy.flips()) / static_cast<double>(c - 1);
    for (std::size_t k = 1; k < c; ++k) CHECK(std::abs(offsets[k] - per) < 4.0 * std::sqrt(per));

    const auto soft = pixel_probs_from_classes(noisy, c, 0.7);
    for (int v = 0; v < soft.height(); v += 7)
        for (int u = 0; u < soft.width(); u += 5) {
            if (!soft.covered(u, v)) continue;
            const auto idx = static_cast<std::size_t>(v) * soft.width() + u;
            const auto d = soft.at(u, v);
            CHECK(d[noisy.chosen_class[idx]] == doctest::Approx(0.7));
            CHECK(d[(noisy.chosen_class[idx] + 1) % c] == doctest::Approx(0.06));
        }
    CHECK_THROWS_AS(pixel_probs_from_classes(noisy, c, 1.0 / 6.0), ParameterError);
    CHECK_THROWS_AS(pixel_probs_from_classes(noisy, c, 1.01), ParameterError);
    CHECK_THROWS_AS(simulate_pixel_classes(scene, sensor.camera, cam, c, 1.5, 0), ParameterError);
}

TEST_CASE("camera and lidar agree") {
    const auto scene = default_scene(2);
    const auto sensor = default_sensor(6);
    std::size_t visible = 0;
    std::size_t agree_pixel = 0;
    for (const auto& pose : sensor.trajectory) {
        const auto scan = simulate_scan(scene, sensor.lidar, pose);
        const auto world_from_camera = pose * sensor.sensor_from_camera;
        const auto classes = simulate_pixel_classes(scene, sensor.camera, world_from_camera, 6, 0.0, 0);
        const auto proj = project(scan.cloud, sensor.cam_from_lidar(), sensor.camera);
        for (const auto& p : proj) {
            const Eigen::Vector3d world = pose.apply(scan.cloud.points[p.point_index]);
            const Eigen::Vector3d origin = world_from_camera.translation();
            const double dist = (world - origin).norm();
            const auto hit = cast_ray(scene, origin, (world - origin) / dist, dist + 1e-3);
            if (!hit || std::abs(hit->range - dist) > 1e-6) continue;  // occluded from the camera
            ++visible;
            // Along the exact line of sight the camera sees the point's own class.
            CHECK(hit->class_index == scan.labels[p.point_index]);
            const auto idx = static_cast<std::size_t>(p.v) * classes.width + p.u;
            if (classes.covered.data()[idx] && classes.true_class[idx] == scan.labels[p.point_index]) ++agree_pixel;
        }
    }
    REQUIRE(visible > 1000);
    // Pixel centers differ from the exact line of sight only at object borders.
    CHECK(static_cast<double>(agree_pixel) / static_cast<double>(visible) > 0.97);
}

TEST_CASE("detector regions reproduce the pixel map") {
    const auto config = default_taxonomy();
    const auto scene = default_scene(4);
    const auto sensor = default_sensor(4);
    const auto cam = sensor.trajectory[2] * sensor.sensor_from_camera;
    for (double peak : {1.0, 0.7, 0.4}) {
        const auto classes = simulate_pixel_classes(scene, sensor.camera, cam, 6, 0.3, 17);
        const auto expected = pixel_probs_from_classes(classes, 6, peak);
        const auto regions = regions_from_classes(classes, config.prompts, peak);
        CHECK(regions.width == sensor.camera.width);
        const auto got = assemble_pixel_labels(regions, config.prompts, 0.25).map;
        REQUIRE(got.coverage().data() == expected.coverage().data());
        for (int v = 0; v < got.height(); ++v)
            for (int u = 0; u < got.width(); ++u) {
                if (!got.covered(u, v)) continue;
                const auto a = got.probs_at(u, v);
                const auto b = expected.probs_at(u, v);
                for (std::size_t k = 0; k < 6; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12).scale(1.0));
            }
    }
}

TEST_CASE("scene and sensor specs") {
    const auto taxonomy = default_taxonomy();
    CHECK(taxonomy.taxonomy.num_classes() == 6);
    CHECK(taxonomy.taxonomy.has_categories());

    const auto scene = default_scene(9);
    CHECK_NOTHROW(scene.validate(6));
    CHECK_THROWS_AS(scene.validate(3), ParameterError);
    const auto back = scene_from_json(scene_to_json(scene));
    CHECK(scene_to_json(back) == scene_to_json(scene));

    const auto sensor = default_sensor(12);
    CHECK(sensor.trajectory.size() == 12);
    CHECK_NOTHROW(sensor.validate());
    const auto sback = sensor_from_json(sensor_to_json(sensor));
    CHECK(sensor_to_json(sback) == sensor_to_json(sensor));
    for (std::size_t f = 0; f < sensor.trajectory.size(); ++f)
        CHECK((sback.trajectory[f].translation() - sensor.trajectory[f].translation()).norm() < 1e-12);

    // The sensor drives tangentially around the loop, camera looking ahead.
    const auto& pose = sensor.trajectory[0];
    CHECK(pose.translation().head<2>().norm() == doctest::Approx(15.0));
    const Eigen::Vector3d forward = pose.rotation() * Eigen::Vector3d::UnitX();
    CHECK(std::abs(forward.dot(pose.translation().normalized())) < 1e-12);
    const Eigen::Vector3d cam_forward = (pose * sensor.sensor_from_camera).rotation() * Eigen::Vector3d::UnitZ();
    CHECK((cam_forward - forward).norm() < 1e-12);

    LidarSpec lidar;
    lidar.azimuth_count = 4;
    lidar.elevation_count = 1;
    lidar.elevation_min_deg = lidar.elevation_max_deg = 0.0;
    const auto dirs = lidar.directions();
    REQUIRE(dirs.size() == 4);
    CHECK((dirs[0] - Eigen::Vector3d(-1, 0, 0)).norm() < 1e-12);
    CHECK((dirs[2] - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);
    lidar.max_range = 0.0;
    CHECK_THROWS_AS(lidar.validate(), ParameterError);

    SceneSpec bad;
    bad.primitives.push_back(Primitive::box({0, 0, 0}, {0, 1, 1}, 0));
    CHECK_THROWS_AS(bad.validate(6), ParameterError);
    bad.primitives[0] = Primitive::cylinder({49.9, 0}, 1.0, 0.0, 1.0, 0);
    CHECK_THROWS_AS(bad.validate(6), ParameterError);
}

TEST_CASE("dataset writer") {
    const auto dir = std::filesystem::temp_directory_path() / "leap_test_synth";
    std::filesystem::remove_all(dir);
    const auto scene = default_scene(0);
    const auto sensor = default_sensor(3);
    write_dataset(dir, default_taxonomy(), scene, sensor, {0.2, 0.8, 5});
    for (const char* f : {"taxonomy.json", "scene.json", "sensor.json", "calib.txt", "poses.txt"})
        CHECK(std::filesystem::exists(dir / f));
    const auto poses = read_poses(dir / "poses.txt");
    REQUIRE(poses.size() == 3);
    for (std::size_t f = 0; f < 3; ++f) {
        const auto cloud = read_point_cloud(dir / "velodyne" / frame_name(f, ".bin"));
        const auto labels = read_labels(dir / "labels" / frame_name(f, ".label"), cloud.size());
        const auto scan = simulate_scan(scene, sensor.lidar, sensor.trajectory[f]);
        REQUIRE(cloud.size() == scan.cloud.size());
        CHECK(labels == scan.labels);
        for (std::size_t i = 0; i < cloud.size(); i += 97)
            CHECK((cloud.points[i] - scan.cloud.points[i]).norm() < 1e-5);
        const auto regions = read_region_file(dir / "regions" / frame_name(f, ".json"));
        CHECK(regions.width == sensor.camera.width);
        CHECK_FALSE(regions.regions.empty());
    }
    const auto calib = read_calibration(dir / "calib.txt");
    CHECK((calib.cam_from_lidar.translation() - sensor.cam_from_lidar().translation()).norm() < 1e-9);
    CHECK(calib.fx == sensor.camera.fx);
    std::filesystem::remove_all(dir);
}
