#include "cortical/supervise/foundation.hpp"

#include "cortical/numcore/io.hpp"

namespace cortical::supervise {
namespace fs = std::filesystem;

std::vector<ViewData> ingest_foundation_outputs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir.string());
  std::vector<ViewData> views;
  for (std::size_t j = 0;; ++j) {
    const fs::path vdir = dir / ("view_" + std::to_string(j));
    if (!fs::exists(vdir)) break;
    for (const char* stem : {"depth", "conf"}) {
      if (!tensor_exists(vdir / stem)) {
        throw FormatError(vdir.string() + ": missing " + stem + " map");
      }
    }
    camgeo::CameraModel cam = camgeo::read_camera(vdir / "camera.json");
    Tensor depth = read_tensor(vdir / "depth").astype(DType::f64);
    Tensor conf = read_tensor(vdir / "conf").astype(DType::f64);
    const Shape expect{cam.resolution().height, cam.resolution().width};
    if (depth.shape() != expect || conf.shape() != expect) {
      throw FormatError(vdir.string() + ": map shapes " + shape_str(depth.shape()) + "/" +
                        shape_str(conf.shape()) + " do not match camera resolution " + shape_str(expect));
    }
    views.push_back({std::move(depth), std::move(conf), cam});
  }
  if (views.empty()) throw FormatError(dir.string() + ": no view_0 entry");
  // A later view_{j} after a gap means the directory is incomplete.
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("view_", 0) != 0) continue;
    try {
      if (std::stoul(name.substr(5)) >= views.size()) {
        throw FormatError(dir.string() + ": view sequence has a gap before " + name);
      }
    } catch (const std::invalid_argument&) {
    }
  }
  return views;
}

void write_foundation_outputs(const fs::path& dir, const std::vector<ViewData>& views) {
  for (std::size_t j = 0; j < views.size(); ++j) {
    const fs::path vdir = dir / ("view_" + std::to_string(j));
    fs::create_directories(vdir);
    write_tensor(vdir / "depth", views[j].depth, "depth");
    write_tensor(vdir / "conf", views[j].confidence, "conf");
    camgeo::write_camera(vdir / "camera.json", views[j].camera);
  }
}

}  // namespace cortical::supervise
