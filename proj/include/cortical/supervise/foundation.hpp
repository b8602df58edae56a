#pragma once

#include <filesystem>
#include <vector>

#include "cortical/supervise/scene.hpp"

namespace cortical::supervise {

// Layout: DIR/view_{j}/depth.{bin,json}, conf.{bin,json}, camera.json for
// j = 0, 1, ... without gaps. View order is the order of j.
std::vector<ViewData> ingest_foundation_outputs(const std::filesystem::path& dir);
void write_foundation_outputs(const std::filesystem::path& dir, const std::vector<ViewData>& views);

}  // namespace cortical::supervise
