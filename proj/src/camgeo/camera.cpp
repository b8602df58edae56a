#include "cortical/camgeo/camera.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "cortical/numcore/io.hpp"
#include "json.hpp"

namespace cortical::camgeo {

bool is_rigid(const Mat4& m, double tol) {
  if (!m.allFinite()) return false;
  const Mat3 r = m.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(r.determinant() - 1.0) > tol) return false;
  const Eigen::RowVector4d last = m.row(3);
  return (last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= tol;
}

Mat4 make_pose(const Mat3& rotation, const Vec3& translation) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Mat4 rigid_inverse(const Mat4& m) {
  const Mat3 r = m.topLeftCorner<3, 3>();
  return make_pose(r.transpose(), -(r.transpose() * m.topRightCorner<3, 1>()));
}

Mat3 axis_angle(const Vec3& axis, double radians) {
  return Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix();
}

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  return make_pose(r, -(r * eye));
}

CameraModel::CameraModel(CameraKind kind, Intrinsics intrinsics, const Mat4& world_to_camera,
                         Resolution resolution)
    : kind_(kind), intrinsics_(intrinsics), pose_(world_to_camera), resolution_(resolution) {
  if (!is_rigid(pose_)) throw FrameError("camera pose is not a rigid transform");
  if (!(intrinsics_.fx > 0.0) || !(intrinsics_.fy > 0.0)) {
    throw DomainError("camera focal lengths / scales must be positive");
  }
  if (!std::isfinite(intrinsics_.cx) || !std::isfinite(intrinsics_.cy)) {
    throw DomainError("camera principal point must be finite");
  }
  if (resolution_.height == 0 || resolution_.width == 0) {
    throw DomainError("camera resolution must be positive");
  }
}

Vec3 CameraModel::center() const { return -(rotation().transpose() * translation()); }

Vec3 CameraModel::to_camera(const Vec3& world) const {
  return rotation() * world + translation();
}

Vec3 CameraModel::to_world(const Vec3& camera) const {
  return rotation().transpose() * (camera - translation());
}

Vec3 CameraModel::unproject_camera(const Vec2& uv, double depth) const {
  const auto& k = intrinsics_;
  if (kind_ == CameraKind::pinhole) {
    return {(uv.x() - k.cx) / k.fx * depth, (uv.y() - k.cy) / k.fy * depth, depth};
  }
  return {(uv.x() - k.cx) / k.fx, (uv.y() - k.cy) / k.fy, depth};
}

bool CameraModel::in_image(const Vec2& uv) const {
  return uv.x() >= -0.5 && uv.y() >= -0.5 &&
         uv.x() <= static_cast<double>(resolution_.width) - 0.5 &&
         uv.y() <= static_cast<double>(resolution_.height) - 0.5;
}

Projection project(const Vec3& world, const CameraModel& camera) {
  const Vec3 c = camera.to_camera(world);
  const auto& k = camera.intrinsics();
  Projection p;
  p.depth = c.z();
  if (camera.kind() == CameraKind::orthographic) {
    p.uv = {k.fx * c.x() + k.cx, k.fy * c.y() + k.cy};
    return p;
  }
  if (c.z() <= 0.0) {
    p.behind = true;
    return p;
  }
  p.uv = {k.fx * c.x() / c.z() + k.cx, k.fy * c.y() / c.z() + k.cy};
  return p;
}

Vec3 unproject_point(const Vec2& uv, double depth, const CameraModel& camera) {
  return camera.to_world(camera.unproject_camera(uv, depth));
}

bool pixel_of(const Vec2& uv, const CameraModel& camera, std::size_t& row, std::size_t& col) {
  if (!camera.in_image(uv)) return false;
  // Cells are [k - 0.5, k + 0.5); the closing image edge belongs to the last pixel.
  const auto res = camera.resolution();
  col = std::min(static_cast<std::size_t>(std::floor(uv.x() + 0.5)), res.width - 1);
  row = std::min(static_cast<std::size_t>(std::floor(uv.y() + 0.5)), res.height - 1);
  return true;
}

std::string camera_to_json(const CameraModel& camera) {
  nlohmann::json j;
  const bool ortho = camera.kind() == CameraKind::orthographic;
  j["kind"] = ortho ? "orthographic" : "pinhole";
  const auto& k = camera.intrinsics();
  j["intrinsics"] = {{ortho ? "sx" : "fx", k.fx}, {ortho ? "sy" : "fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}};
  std::vector<double> pose;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) pose.push_back(camera.pose()(r, c));
  j["pose"] = pose;
  j["resolution"] = {camera.resolution().height, camera.resolution().width};
  return j.dump(2);
}

CameraModel camera_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const std::string kind = j.at("kind").get<std::string>();
    const auto& in = j.at("intrinsics");
    Intrinsics k;
    CameraKind ck;
    if (kind == "pinhole") {
      ck = CameraKind::pinhole;
      k.fx = in.at("fx").get<double>();
      k.fy = in.at("fy").get<double>();
    } else if (kind == "orthographic") {
      ck = CameraKind::orthographic;
      k.fx = in.at("sx").get<double>();
      k.fy = in.at("sy").get<double>();
    } else {
      throw FormatError("unknown camera kind '" + kind + "'");
    }
    k.cx = in.at("cx").get<double>();
    k.cy = in.at("cy").get<double>();
    const auto pose = j.at("pose").get<std::vector<double>>();
    if (pose.size() != 16) throw FormatError("camera pose needs 16 values");
    Mat4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = pose[static_cast<std::size_t>(r * 4 + c)];
    const auto res = j.at("resolution").get<std::vector<std::size_t>>();
    if (res.size() != 2) throw FormatError("camera resolution needs [H, W]");
    return CameraModel(ck, k, m, {res[0], res[1]});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("camera json: ") + e.what());
  }
}

void write_camera(const std::filesystem::path& path, const CameraModel& camera) {
  write_text(path, camera_to_json(camera) + "\n");
}

CameraModel read_camera(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("missing camera file " + path.string());
  return camera_from_json(read_text(path));
}

}  // namespace cortical::camgeo
