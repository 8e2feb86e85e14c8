#pragma once

#include <string>

#include "hoi/motion.hpp"

namespace hoi {

// Binary formats (all little-endian):
//   motion:      "HOIM" | u32 version=1 | u32 L | u32 D | L*D f32 row-major
//   point cloud: "HOIP" | u32 version=1 | u32 N | N*3 f32
// Manifest: JSON array of {id, caption, human_path, object_path, points_path}.

void write_motion(const std::string& path, const MotionSequence& motion);
MotionSequence read_motion(const std::string& path);

void write_pointcloud(const std::string& path, const ObjectPointCloud& cloud);
ObjectPointCloud read_pointcloud(const std::string& path);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path, Split split);

// Loads the referenced motion/cloud files (paths resolved relative to the
// manifest's directory).
std::vector<HOISample> load_samples(const std::string& manifest_path, Split split);

}  // namespace hoi
