#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow::io {

// Scene-pair interchange layout (one directory per pair):
//   cloud_t.ply, cloud_t1.ply   binary little-endian PLY, float x y z
//   meta.json                   { "delta_t": f, "ego_motion": {...} | null }
//   tracks_t.json, tracks_t1.json
//   gt_flow.bin (optional)      N little-endian float32 triples
// Predicted flow uses the same .bin layout.

void write_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud read_ply(const std::filesystem::path& path);

void write_flow_bin(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow_bin(const std::filesystem::path& path);

// N bytes, 1 = ground.
void write_mask_bin(const std::filesystem::path& path,
                    const std::vector<bool>& mask);
std::vector<bool> read_mask_bin(const std::filesystem::path& path);

// N little-endian int32 cluster labels, -1 = noise / not clustered.
void write_labels_bin(const std::filesystem::path& path,
                      const std::vector<std::int32_t>& labels);
std::vector<std::int32_t> read_labels_bin(const std::filesystem::path& path);

void write_scene_pair(const std::filesystem::path& dir, const ScenePair& pair);
ScenePair read_scene_pair(const std::filesystem::path& dir);

// Subdirectories of `root` that contain a cloud_t.ply, sorted by name.
std::vector<std::filesystem::path> list_scene_dirs(
    const std::filesystem::path& root);

}  // namespace sceneflow::io
