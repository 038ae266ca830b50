#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace leap {

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    /// Throws GeometryError when focal lengths or principal point are out of range.
    void validate() const;
};

/// Rigid body transform y = R x + t.
class RigidTransform {
public:
    RigidTransform() = default;
    /// Throws GeometryError unless `rotation` is orthonormal with det +1 within `tolerance`.
    RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation, double tolerance = 1e-6);

    static RigidTransform identity() { return {}; }
    static RigidTransform translation(const Eigen::Vector3d& t) { return {Eigen::Matrix3d::Identity(), t}; }
    /// Rotation about the z axis by `yaw` radians followed by translation `t`.
    static RigidTransform from_yaw(double yaw, const Eigen::Vector3d& t);

    const Eigen::Matrix3d& rotation() const { return rotation_; }
    const Eigen::Vector3d& translation() const { return translation_; }

    Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return rotation_ * x + translation_; }
    Eigen::Vector3d operator*(const Eigen::Vector3d& x) const { return apply(x); }
    RigidTransform inverse() const;

    /// Row-major 3x4 [R | t].
    Eigen::Matrix<double, 3, 4> matrix() const;

private:
    Eigen::Matrix3d rotation_ = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation_ = Eigen::Vector3d::Zero();
};

/// (a ∘ b)(x) = a(b(x)).
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) { return compose(a, b); }

/// Builds a rigid transform from a 3x4 matrix, snapping the rotation to the nearest
/// orthonormal matrix when it is within `tolerance` of one. Throws GeometryError otherwise.
RigidTransform rigid_from_matrix(const Eigen::Matrix<double, 3, 4>& m, double tolerance = 1e-3);

struct PointCloud {
    std::vector<Eigen::Vector3d> points;
    /// Either empty or one value per point.
    std::vector<float> intensity;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

struct ProjectedPoint {
    std::size_t point_index = 0;
    int u = 0;
    int v = 0;
    double depth = 0.0;

    friend bool operator==(const ProjectedPoint&, const ProjectedPoint&) = default;
};

/// Pinhole projection of a single camera-frame point. Returns false when the point is
/// behind the camera or its rounded pixel lies outside the image.
bool project_point(const Eigen::Vector3d& camera_point, const CameraIntrinsics& k, int& u, int& v);

/// Projects every point that lands inside the image, in point order. Pixel coordinates
/// are rounded to nearest, ties away from zero.
std::vector<ProjectedPoint> project(const PointCloud& cloud, const RigidTransform& cam_from_lidar,
                                    const CameraIntrinsics& k);

namespace serial {
std::vector<ProjectedPoint> project(const PointCloud& cloud, const RigidTransform& cam_from_lidar,
                                    const CameraIntrinsics& k);
}  // namespace serial

/// Camera model read from a KITTI odometry calib.txt.
struct Calibration {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    /// Camera-from-LiDAR, including the camera's offset encoded in the fourth column of P2.
    RigidTransform cam_from_lidar;

    CameraIntrinsics intrinsics(int width, int height) const;
};

/// Reads `P2:` and `Tr:` lines. Throws FormatError when either is missing or malformed.
Calibration read_calibration(const std::filesystem::path& path);
void write_calibration(const std::filesystem::path& path, const Calibration& calib);

}  // namespace leap
