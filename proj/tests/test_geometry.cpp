#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "leap/error.hpp"
#include "leap/geometry.hpp"
#include "oracles.hpp"

using namespace leap;

namespace {

RigidTransform random_rigid(oracle::Rng& rng, double spread = 10.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    const Eigen::Quaterniond q = Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized();
    return {q.toRotationMatrix(), Eigen::Vector3d(n(rng), n(rng), n(rng)) * spread};
}

double max_diff(const RigidTransform& a, const RigidTransform& b) {
    return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("compose applies the right operand first") {
    oracle::Rng rng(1);
    const auto t = random_rigid(rng);
    CHECK(max_diff(compose(RigidTransform::identity(), t), t) == 0.0);
    CHECK(max_diff(compose(t, t.inverse()), RigidTransform::identity()) <= 1e-9);

    const auto a = RigidTransform::translation({1.0, 2.0, 3.0});
    const auto b = RigidTransform::translation({-0.5, 4.0, 0.25});
    CHECK(compose(a, b).translation() == Eigen::Vector3d(0.5, 6.0, 3.25));

    for (int trial = 0; trial < 200; ++trial) {
        const auto x = random_rigid(rng);
        const auto y = random_rigid(rng);
        const auto z = random_rigid(rng);
        const Eigen::Vector3d p = Eigen::Vector3d::Random() * 5.0;
        CHECK(((x * y).apply(p) - x.apply(y.apply(p))).norm() <= 1e-9);
        CHECK(max_diff((x * y) * z, x * (y * z)) <= 1e-9);
    }
}

TEST_CASE("rigid transforms reject non-rotations") {
    Eigen::Matrix3d scale = Eigen::Matrix3d::Identity() * 1.1;
    CHECK_THROWS_AS(RigidTransform(scale, Eigen::Vector3d::Zero()), GeometryError);
    Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
    reflect(2, 2) = -1.0;
    CHECK_THROWS_AS(RigidTransform(reflect, Eigen::Vector3d::Zero()), GeometryError);
    Eigen::Matrix<double, 3, 4> m = Eigen::Matrix<double, 3, 4>::Zero();
    m.leftCols<3>() = Eigen::Matrix3d::Identity();
    m(0, 1) = 5e-4;  // within the snapping tolerance
    const auto snapped = rigid_from_matrix(m);
    const Eigen::Matrix3d r = snapped.rotation();
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
    m(0, 1) = 0.1;
    CHECK_THROWS_AS(rigid_from_matrix(m), GeometryError);
    m(0, 1) = std::nan("");
    CHECK_THROWS_AS(rigid_from_matrix(m), GeometryError);
}

TEST_CASE("from_yaw rotates about z") {
    const auto t = RigidTransform::from_yaw(std::numbers::pi / 2.0, {1.0, 0.0, 0.0});
    CHECK((t.apply({1.0, 0.0, 0.0}) - Eigen::Vector3d(1.0, 1.0, 0.0)).norm() <= 1e-12);
}

TEST_CASE("project follows the pinhole model with rounding") {
    const CameraIntrinsics k{100.0, 100.0, 50.0, 50.0, 101, 100};
    PointCloud cloud;
    cloud.points = {{0.0, 0.0, 5.0}, {0.0, 0.0, -1.0}, {1.0, 0.0, 2.0}, {0.0, 0.0, 0.0}};
    const auto proj = project(cloud, RigidTransform::identity(), k);
    REQUIRE(proj.size() == 2);
    CHECK(proj[0] == ProjectedPoint{0, 50, 50, 5.0});
    CHECK(proj[1] == ProjectedPoint{2, 100, 50, 2.0});

    const CameraIntrinsics narrow{100.0, 100.0, 50.0, 50.0, 100, 100};
    CHECK(project(cloud, RigidTransform::identity(), narrow).size() == 1);
}

TEST_CASE("pixel ties round away from zero") {
    const CameraIntrinsics k{1.0, 1.0, 0.0, 0.0, 10, 10};
    int u = -1;
    int v = -1;
    REQUIRE(project_point({2.5, 0.5, 1.0}, k, u, v));
    CHECK(u == 3);
    CHECK(v == 1);
    // -0.5 rounds to -1, which is off the image.
    CHECK_FALSE(project_point({-0.5, 0.0, 1.0}, k, u, v));
    CHECK(project_point({-0.49, 0.0, 1.0}, k, u, v));
    CHECK(u == 0);
}

TEST_CASE("projection is invariant to scaling along the ray") {
    oracle::Rng rng(9);
    std::uniform_real_distribution<double> xy(-4.0, 4.0);
    std::uniform_real_distribution<double> z(0.5, 20.0);
    std::uniform_real_distribution<double> s(0.1, 10.0);
    const CameraIntrinsics k{320.0, 310.0, 319.5, 239.5, 640, 480};
    int hits = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        // Keep points off exact half-pixel boundaries so rounding cannot flip.
        const Eigen::Vector3d p(xy(rng), xy(rng), z(rng));
        const double fu = k.fx * p.x() / p.z() + k.cx;
        const double fv = k.fy * p.y() / p.z() + k.cy;
        if (std::abs(fu - std::floor(fu) - 0.5) < 1e-6 || std::abs(fv - std::floor(fv) - 0.5) < 1e-6) continue;
        const double lambda = s(rng);
        PointCloud a;
        a.points = {p};
        PointCloud b;
        b.points = {p * lambda};
        const auto pa = project(a, RigidTransform::identity(), k);
        const auto pb = project(b, RigidTransform::identity(), k);
        REQUIRE(pa.size() == pb.size());
        if (pa.empty()) continue;
        ++hits;
        CHECK(pa[0].u == pb[0].u);
        CHECK(pa[0].v == pb[0].v);
        CHECK(std::abs(pb[0].depth - lambda * pa[0].depth) <= 1e-9 * pb[0].depth);
    }
    CHECK(hits > 500);
}

TEST_CASE("parallel projection matches the serial reference") {
    oracle::Rng rng(31);
    std::uniform_real_distribution<double> c(-30.0, 30.0);
    PointCloud cloud;
    for (int i = 0; i < 50000; ++i) cloud.points.emplace_back(c(rng), c(rng), c(rng));
    const auto t = random_rigid(rng, 2.0);
    const CameraIntrinsics k{400.0, 400.0, 320.0, 120.0, 640, 240};
    CHECK(project(cloud, t, k) == serial::project(cloud, t, k));
}

TEST_CASE("intrinsics validation") {
    CHECK_THROWS_AS((CameraIntrinsics{0.0, 1.0, 0.0, 0.0, 4, 4}.validate()), GeometryError);
    CHECK_THROWS_AS((CameraIntrinsics{1.0, 1.0, 4.0, 0.0, 4, 4}.validate()), GeometryError);
    CHECK_THROWS_AS((CameraIntrinsics{1.0, 1.0, 0.0, -1.0, 4, 4}.validate()), GeometryError);
    CHECK_NOTHROW((CameraIntrinsics{1.0, 1.0, 3.5, 0.0, 4, 4}.validate()));
}

TEST_CASE("calibration files round-trip and fold the P2 offset") {
    const auto dir = std::filesystem::temp_directory_path() / "leap_test_calib";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "calib.txt");
        out << "P0: 7 0 6 0 0 7 1 0 0 0 1 0\n"
               "P2: 700 0 600 -350 0 710 180 0 0 0 1 0\n"
               "Tr: 1 0 0 0.5 0 1 0 0 0 0 1 -1\n";
    }
    const auto calib = read_calibration(dir / "calib.txt");
    CHECK(calib.fx == 700.0);
    CHECK(calib.fy == 710.0);
    CHECK(calib.cx == 600.0);
    CHECK(calib.cy == 180.0);
    // K^-1 [-350, 0, 0] = [-0.5, 0, 0], added to Tr's translation.
    CHECK((calib.cam_from_lidar.translation() - Eigen::Vector3d(0.0, 0.0, -1.0)).norm() <= 1e-12);

    write_calibration(dir / "again.txt", calib);
    const auto again = read_calibration(dir / "again.txt");
    CHECK(again.fx == calib.fx);
    CHECK(again.cy == calib.cy);
    CHECK(max_diff(again.cam_from_lidar, calib.cam_from_lidar) == 0.0);

    std::ofstream(dir / "bad.txt") << "P2: 1 2 3\nTr: 1 0 0 0 0 1 0 0 0 0 1 0\n";
    CHECK_THROWS_AS(read_calibration(dir / "bad.txt"), FormatError);
    std::ofstream(dir / "missing.txt") << "P2: 700 0 600 0 0 710 180 0 0 0 1 0\n";
    CHECK_THROWS_AS(read_calibration(dir / "missing.txt"), FormatError);
    CHECK_THROWS_AS(read_calibration(dir / "nope.txt"), FormatError);
    std::filesystem::remove_all(dir);
}
