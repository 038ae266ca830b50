#include "leap/geometry.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "leap/error.hpp"
#include "leap/io.hpp"

namespace leap {

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw GeometryError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw GeometryError("camera image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
        throw GeometryError("camera principal point outside the image");
}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation,
                               double tolerance)
    : rotation_(rotation), translation_(translation) {
    if (!rotation.allFinite() || !translation.allFinite()) throw GeometryError("non-finite transform");
    const double orth = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (orth > tolerance || std::abs(rotation.determinant() - 1.0) > tolerance)
        throw GeometryError("rotation is not orthonormal with determinant +1");
}

RigidTransform RigidTransform::from_yaw(double yaw, const Eigen::Vector3d& t) {
    return {Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix(), t};
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation_ = rotation_.transpose();
    inv.translation_ = -(inv.rotation_ * translation_);
    return inv;
}

Eigen::Matrix<double, 3, 4> RigidTransform::matrix() const {
    Eigen::Matrix<double, 3, 4> m;
    m.leftCols<3>() = rotation_;
    m.col(3) = translation_;
    return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation(), 1e-6};
}

RigidTransform rigid_from_matrix(const Eigen::Matrix<double, 3, 4>& m, double tolerance) {
    if (!m.allFinite()) throw GeometryError("non-finite transform matrix");
    const Eigen::Matrix3d r = m.leftCols<3>();
    const double orth = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (orth > tolerance || std::abs(r.determinant() - 1.0) > tolerance)
        throw GeometryError("matrix is not a rigid transform");
    if (orth <= 1e-12 && std::abs(r.determinant() - 1.0) <= 1e-12) return {r, m.col(3), 1e-9};
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d snapped = svd.matrixU() * svd.matrixV().transpose();
    return {snapped, m.col(3), 1e-9};
}

bool project_point(const Eigen::Vector3d& p, const CameraIntrinsics& k, int& u, int& v) {
    if (!(p.z() > 0.0)) return false;
    const double fu = std::round(k.fx * p.x() / p.z() + k.cx);
    const double fv = std::round(k.fy * p.y() / p.z() + k.cy);
    if (!(fu >= 0.0 && fu < k.width && fv >= 0.0 && fv < k.height)) return false;
    u = static_cast<int>(fu);
    v = static_cast<int>(fv);
    return true;
}

std::vector<ProjectedPoint> project(const PointCloud& cloud, const RigidTransform& cam_from_lidar,
                                    const CameraIntrinsics& k) {
    const auto n = static_cast<std::ptrdiff_t>(cloud.size());
    std::vector<ProjectedPoint> slots(cloud.size());
    std::vector<unsigned char> hit(cloud.size(), 0);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const Eigen::Vector3d p = cam_from_lidar.apply(cloud.points[static_cast<std::size_t>(i)]);
        int u = 0;
        int v = 0;
        if (project_point(p, k, u, v)) {
            slots[static_cast<std::size_t>(i)] = {static_cast<std::size_t>(i), u, v, p.z()};
            hit[static_cast<std::size_t>(i)] = 1;
        }
    }

    std::vector<ProjectedPoint> out;
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (hit[i]) out.push_back(slots[i]);
    return out;
}

namespace serial {

std::vector<ProjectedPoint> project(const PointCloud& cloud, const RigidTransform& cam_from_lidar,
                                    const CameraIntrinsics& k) {
    std::vector<ProjectedPoint> out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Eigen::Vector3d p = cam_from_lidar.apply(cloud.points[i]);
        int u = 0;
        int v = 0;
        if (project_point(p, k, u, v)) out.push_back({i, u, v, p.z()});
    }
    return out;
}

}  // namespace serial

CameraIntrinsics Calibration::intrinsics(int width, int height) const {
    CameraIntrinsics k{fx, fy, cx, cy, width, height};
    k.validate();
    return k;
}

namespace {

std::optional<std::vector<double>> parse_floats(const std::string& rest) {
    std::istringstream ss(rest);
    std::vector<double> values;
    double v = 0.0;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) return std::nullopt;
    return values;
}

}  // namespace

Calibration read_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open calibration file " + path.string());
    std::optional<Eigen::Matrix<double, 3, 4>> p2;
    std::optional<Eigen::Matrix<double, 3, 4>> tr;
    std::string line;
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon == std::string::npos) continue;
        const std::string key = line.substr(0, colon);
        if (key != "P2" && key != "Tr") continue;
        const auto values = parse_floats(line.substr(colon + 1));
        if (!values || values->size() != 12) throw FormatError("calibration line '" + key + "' needs 12 floats");
        Eigen::Matrix<double, 3, 4> m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) m(r, c) = (*values)[static_cast<std::size_t>(r * 4 + c)];
        (key == "P2" ? p2 : tr) = m;
    }
    if (!p2 || !tr) throw FormatError("calibration file must contain P2 and Tr");

    Calibration calib;
    const auto& p = *p2;
    calib.fx = p(0, 0);
    calib.fy = p(1, 1);
    calib.cx = p(0, 2);
    calib.cy = p(1, 2);
    if (!(calib.fx > 0.0) || !(calib.fy > 0.0)) throw GeometryError("P2 focal lengths must be positive");
    // P2 = K [I | t]; fold t into the extrinsics.
    const Eigen::Matrix3d k = p.leftCols<3>();
    const Eigen::Vector3d offset = k.inverse() * p.col(3);
    calib.cam_from_lidar = compose(RigidTransform::translation(offset), rigid_from_matrix(*tr));
    return calib;
}

void write_calibration(const std::filesystem::path& path, const Calibration& calib) {
    std::ostringstream out;
    out.precision(17);
    out << "P2:";
    const double p[12] = {calib.fx, 0, calib.cx, 0, 0, calib.fy, calib.cy, 0, 0, 0, 1, 0};
    for (double v : p) out << ' ' << v;
    out << "\nTr:";
    const auto m = calib.cam_from_lidar.matrix();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) out << ' ' << m(r, c);
    out << '\n';
    write_file_atomic(path, out.str());
}

}  // namespace leap
