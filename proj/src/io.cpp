#include "sceneflow/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sceneflow/errors.hpp"

namespace sceneflow::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// The interchange format is little-endian; refuse to run elsewhere rather
// than silently writing swapped bytes.
static_assert(std::endian::native == std::endian::little,
              "interchange I/O assumes a little-endian host");

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

void write_f32_triples(std::ofstream& out, const std::vector<Vec3>& rows) {
  std::vector<float> buf(rows.size() * 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    buf[3 * i + 0] = static_cast<float>(rows[i].x());
    buf[3 * i + 1] = static_cast<float>(rows[i].y());
    buf[3 * i + 2] = static_cast<float>(rows[i].z());
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<Vec3> read_f32_triples(std::ifstream& in, std::size_t n,
                                   const std::string& what) {
  std::vector<float> buf(n * 3);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw IoError("truncated " + what);
  std::vector<Vec3> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i] = Vec3(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]);
  }
  return rows;
}

json transform_to_json(const RigidTransform& t) {
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = t.rotation(r, c);
  return json{{"rotation", rot},
              {"translation", {t.translation.x(), t.translation.y(),
                               t.translation.z()}}};
}

RigidTransform transform_from_json(const json& j) {
  RigidTransform t;
  const auto rot = j.at("rotation").get<std::vector<double>>();
  const auto tr = j.at("translation").get<std::vector<double>>();
  if (rot.size() != 9 || tr.size() != 3) {
    throw IoError("transform: expected 9 rotation + 3 translation entries");
  }
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[3 * r + c];
  t.translation = Vec3(tr[0], tr[1], tr[2]);
  return t;
}

json tracks_to_json(const std::vector<BoxTrack>& tracks) {
  json arr = json::array();
  for (const auto& b : tracks) {
    std::vector<double> rot(9);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rot[3 * r + c] = b.rotation(r, c);
    arr.push_back(json{{"track_id", b.track_id},
                       {"center", {b.center.x(), b.center.y(), b.center.z()}},
                       {"dimensions", {b.dimensions.x(), b.dimensions.y(),
                                       b.dimensions.z()}},
                       {"rotation", rot}});
  }
  return arr;
}

std::vector<BoxTrack> tracks_from_json(const json& arr, int frame_index) {
  std::vector<BoxTrack> tracks;
  for (const auto& j : arr) {
    BoxTrack b;
    b.track_id = j.at("track_id").get<std::string>();
    b.frame_index = frame_index;
    const auto c = j.at("center").get<std::vector<double>>();
    const auto d = j.at("dimensions").get<std::vector<double>>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (c.size() != 3 || d.size() != 3 || rot.size() != 9) {
      throw IoError("track '" + b.track_id + "': malformed geometry fields");
    }
    b.center = Vec3(c[0], c[1], c[2]);
    b.dimensions = Vec3(d[0], d[1], d[2]);
    for (int r = 0; r < 3; ++r)
      for (int cc = 0; cc < 3; ++cc) b.rotation(r, cc) = rot[3 * r + cc];
    tracks.push_back(std::move(b));
  }
  return tracks;
}

json load_json_file(const fs::path& path) {
  auto in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
  return j;
}

void save_json_file(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << "\n";
}

}  // namespace

void write_ply(const fs::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  out << "ply\n"
      << "format binary_little_endian 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\n"
      << "property float y\n"
      << "property float z\n"
      << "end_header\n";
  write_f32_triples(out, cloud.points);
  if (!out) throw IoError("failed writing " + path.string());
}

PointCloud read_ply(const fs::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw IoError(path.string() + ": not a PLY file");
  }
  std::size_t vertex_count = 0;
  std::vector<std::string> properties;
  bool binary_le = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    if (tok == "comment") continue;
    if (tok == "format") {
      std::string fmt;
      ss >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string name;
      ss >> name >> vertex_count;
      if (name != "vertex") {
        throw IoError(path.string() + ": unsupported element '" + name + "'");
      }
    } else if (tok == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type != "float") {
        throw IoError(path.string() + ": unsupported property type " + type);
      }
      properties.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) {
    throw IoError(path.string() + ": expected format binary_little_endian");
  }
  if (properties != std::vector<std::string>{"x", "y", "z"}) {
    throw IoError(path.string() + ": expected exactly float x y z properties");
  }
  PointCloud cloud;
  cloud.points = read_f32_triples(in, vertex_count, path.string());
  return cloud;
}

void write_flow_bin(const fs::path& path, const FlowField& flow) {
  auto out = open_out(path);
  write_f32_triples(out, flow.vectors);
  if (!out) throw IoError("failed writing " + path.string());
}

FlowField read_flow_bin(const fs::path& path) {
  auto in = open_in(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes % 12 != 0) {
    throw IoError(path.string() + ": size is not a multiple of 12 bytes");
  }
  FlowField flow;
  flow.vectors = read_f32_triples(in, bytes / 12, path.string());
  return flow;
}

void write_mask_bin(const fs::path& path, const std::vector<bool>& mask) {
  auto out = open_out(path);
  std::vector<char> buf(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) buf[i] = mask[i] ? 1 : 0;
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<bool> read_mask_bin(const fs::path& path) {
  auto in = open_in(path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
  std::vector<bool> mask(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) mask[i] = buf[i] != 0;
  return mask;
}

void write_labels_bin(const fs::path& path,
                      const std::vector<std::int32_t>& labels) {
  auto out = open_out(path);
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(std::int32_t)));
}

std::vector<std::int32_t> read_labels_bin(const fs::path& path) {
  auto in = open_in(path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  if (bytes % sizeof(std::int32_t) != 0) {
    throw IoError(path.string() + ": size is not a multiple of 4 bytes");
  }
  std::vector<std::int32_t> labels(bytes / sizeof(std::int32_t));
  in.read(reinterpret_cast<char*>(labels.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("truncated " + path.string());
  return labels;
}

void write_scene_pair(const fs::path& dir, const ScenePair& pair) {
  fs::create_directories(dir);
  write_ply(dir / "cloud_t.ply", pair.cloud_t);
  write_ply(dir / "cloud_t1.ply", pair.cloud_t1);

  json meta;
  meta["delta_t"] = pair.delta_t;
  meta["ego_motion"] =
      pair.ego_motion ? transform_to_json(*pair.ego_motion) : json(nullptr);
  save_json_file(dir / "meta.json", meta);

  save_json_file(dir / "tracks_t.json", tracks_to_json(pair.tracks_t));
  save_json_file(dir / "tracks_t1.json", tracks_to_json(pair.tracks_t1));

  if (pair.gt_flow) write_flow_bin(dir / "gt_flow.bin", *pair.gt_flow);
}

ScenePair read_scene_pair(const fs::path& dir) {
  ScenePair pair;
  pair.cloud_t = read_ply(dir / "cloud_t.ply");
  pair.cloud_t1 = read_ply(dir / "cloud_t1.ply");

  const json meta = load_json_file(dir / "meta.json");
  pair.delta_t = meta.at("delta_t").get<double>();
  if (!meta.at("ego_motion").is_null()) {
    pair.ego_motion = transform_from_json(meta.at("ego_motion"));
  }

  if (fs::exists(dir / "tracks_t.json")) {
    pair.tracks_t = tracks_from_json(load_json_file(dir / "tracks_t.json"), 0);
  }
  if (fs::exists(dir / "tracks_t1.json")) {
    pair.tracks_t1 =
        tracks_from_json(load_json_file(dir / "tracks_t1.json"), 1);
  }
  if (fs::exists(dir / "gt_flow.bin")) {
    pair.gt_flow = read_flow_bin(dir / "gt_flow.bin");
    if (pair.gt_flow->size() != pair.cloud_t.size()) {
      throw IoError(dir.string() + ": gt_flow.bin row count " +
                    std::to_string(pair.gt_flow->size()) +
                    " does not match cloud_t size " +
                    std::to_string(pair.cloud_t.size()));
    }
  }
  pair.validate();
  return pair;
}

std::vector<fs::path> list_scene_dirs(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw IoError("scene root is not a directory: " + root.string());
  }
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "cloud_t.ply")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace sceneflow::io
