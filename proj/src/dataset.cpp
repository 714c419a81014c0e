#include "capsrep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "capsrep/util.hpp"

namespace capsrep::data {

namespace {

struct ShapeTemplate {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::pair<int, int>> edges;
};

void normalize_to_unit_radius(ShapeTemplate& t) {
  double max_norm = 0.0;
  for (const auto& v : t.vertices) {
    max_norm = std::max(max_norm,
                        std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
  }
  for (auto& v : t.vertices) {
    for (double& c : v) c /= max_norm;
  }
}

ShapeTemplate make_tetrahedron() {
  ShapeTemplate t;
  t.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) t.edges.emplace_back(i, j);
  return t;
}

ShapeTemplate make_cube() {
  ShapeTemplate t;
  for (int i = 0; i < 8; ++i) {
    t.vertices.push_back({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0,
                          i & 4 ? 1.0 : -1.0});
  }
  for (int i = 0; i < 8; ++i) {
    for (int bit : {1, 2, 4}) {
      const int j = i ^ bit;
      if (j > i) t.edges.emplace_back(i, j);
    }
  }
  return t;
}

ShapeTemplate make_octahedron() {
  ShapeTemplate t;
  t.vertices = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) {
      if (j == (i ^ 1)) continue;  // antipodal pair
      t.edges.emplace_back(i, j);
    }
  }
  return t;
}

ShapeTemplate make_prism(int sides, double radius, double half_height) {
  ShapeTemplate t;
  for (int level = 0; level < 2; ++level) {
    const double z = level == 0 ? half_height : -half_height;
    for (int k = 0; k < sides; ++k) {
      const double angle = rot::kHalfPi + 2.0 * rot::kPi * k / sides;
      t.vertices.push_back({radius * std::cos(angle), radius * std::sin(angle), z});
    }
  }
  for (int k = 0; k < sides; ++k) {
    const int nk = (k + 1) % sides;
    t.edges.emplace_back(k, nk);                  // top ring
    t.edges.emplace_back(sides + k, sides + nk);  // bottom ring
    t.edges.emplace_back(k, sides + k);           // wall
  }
  return t;
}

ShapeTemplate make_square_pyramid() {
  ShapeTemplate t;
  t.vertices = {{0.8, 0.8, -0.5},
                {-0.8, 0.8, -0.5},
                {-0.8, -0.8, -0.5},
                {0.8, -0.8, -0.5},
                {0.0, 0.0, 0.95}};
  for (int k = 0; k < 4; ++k) {
    t.edges.emplace_back(k, (k + 1) % 4);
    t.edges.emplace_back(k, 4);
  }
  return t;
}

ShapeTemplate make_extruded_polygon(const std::vector<std::array<double, 2>>& outline,
                                    double half_depth) {
  ShapeTemplate t;
  const int n = static_cast<int>(outline.size());
  for (int level = 0; level < 2; ++level) {
    const double z = level == 0 ? half_depth : -half_depth;
    for (const auto& p : outline) t.vertices.push_back({p[0], p[1], z});
  }
  for (int k = 0; k < n; ++k) {
    const int nk = (k + 1) % n;
    t.edges.emplace_back(k, nk);
    t.edges.emplace_back(n + k, n + nk);
    t.edges.emplace_back(k, n + k);
  }
  return t;
}

ShapeTemplate make_l_shape() {
  const double s = 0.55;
  return make_extruded_polygon({{-s, -s}, {s, -s}, {s, 0}, {0, 0}, {0, s}, {-s, s}},
                               0.35);
}

ShapeTemplate make_cross_shape() {
  const double a = 0.264, b = 0.8;
  return make_extruded_polygon({{b, a},
                                {a, a},
                                {a, b},
                                {-a, b},
                                {-a, a},
                                {-b, a},
                                {-b, -a},
                                {-a, -a},
                                {-a, -b},
                                {a, -b},
                                {a, -a},
                                {b, -a}},
                               0.3);
}

const ShapeTemplate& shape_template(uint32_t class_id) {
  static const std::vector<ShapeTemplate> templates = [] {
    std::vector<ShapeTemplate> all;
    all.push_back(make_tetrahedron());
    all.push_back(make_cube());
    all.push_back(make_octahedron());
    all.push_back(make_prism(3, 0.8, 0.66));
    all.push_back(make_square_pyramid());
    all.push_back(make_prism(5, 0.78, 0.6));
    all.push_back(make_l_shape());
    all.push_back(make_cross_shape());
    for (auto& t : all) normalize_to_unit_radius(t);
    return all;
  }();
  if (class_id >= templates.size()) {
    throw ParamError("class_id " + std::to_string(class_id) + " outside [0, " +
                     std::to_string(templates.size()) + ")");
  }
  return templates[class_id];
}

double render_scale(int height, int width) {
  return 0.40 * (std::min(height, width) - 1);
}

void draw_line(nd::Tensor& img, int height, int width,
               const std::array<double, 2>& from, const std::array<double, 2>& to,
               const std::array<float, 3>& color) {
  float* px = img.mutable_data();
  const int64_t plane = static_cast<int64_t>(height) * width;
  const auto paint = [&](long r, long c) {
    if (r < 0 || r >= height || c < 0 || c >= width) return;
    for (int ch = 0; ch < 3; ++ch) px[ch * plane + r * width + c] = color[ch];
  };
  long r0 = std::lround(from[0]), c0 = std::lround(from[1]);
  const long r1 = std::lround(to[0]), c1 = std::lround(to[1]);
  const long dr = std::labs(r1 - r0), dc = std::labs(c1 - c0);
  const long sr = r0 < r1 ? 1 : -1, sc = c0 < c1 ? 1 : -1;
  long err = dc - dr;
  while (true) {
    paint(r0, c0);
    if (r0 == r1 && c0 == c1) break;
    const long e2 = 2 * err;
    if (e2 > -dr) {
      err -= dr;
      c0 += sc;
    }
    if (e2 < dc) {
      err += dc;
      r0 += sr;
    }
  }
}

void validate_counts(const DatasetManifest& m) {
  if (m.classes < 1 || m.classes > kNumShapeClasses) {
    throw ParamError("classes must be in [1, " +
                     std::to_string(kNumShapeClasses) + "], got " +
                     std::to_string(m.classes));
  }
  if (m.objects_per_class < 1) throw ParamError("objects_per_class must be >= 1");
  if (m.views_per_object < 1) throw ParamError("views_per_object must be >= 1");
  if (m.height < 8 || m.width < 8) {
    throw ParamError("image size must be at least 8x8");
  }
  if (m.channels != 3) throw ParamError("channels must be 3");
}

}  // namespace

int64_t DatasetArchive::record_index(int64_t object, int64_t view) const {
  if (object < 0 || object >= n_objects()) {
    throw ParamError("object index " + std::to_string(object) + " outside [0, " +
                     std::to_string(n_objects()) + ")");
  }
  if (view < 0 || view >= manifest.views_per_object) {
    throw ParamError("view index " + std::to_string(view) + " outside [0, " +
                     std::to_string(manifest.views_per_object) + ")");
  }
  return object * manifest.views_per_object + view;
}

const ViewRecord& DatasetArchive::view(int64_t object, int64_t view) const {
  return records[static_cast<std::size_t>(record_index(object, view))];
}

std::array<float, 3> hsv_to_rgb(float h, float s, float v) {
  h = h - std::floor(h);  // wrap hue into [0, 1)
  const float c = v * s;
  const float hp = h * 6.0f;
  const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const float m = v - c;
  return {r + m, g + m, b + m};
}

std::array<double, 2> project_vertex(const std::array<double, 3>& v, int height,
                                     int width) {
  const double s = render_scale(height, width);
  const double row = 0.5 * (height - 1) - s * v[1];
  const double col = 0.5 * (width - 1) + s * v[0];
  return {row, col};
}

nd::Tensor render_view(const SceneParams& params, int height, int width) {
  if (height < 8 || width < 8) throw ParamError("image size must be at least 8x8");
  const ShapeTemplate& base = shape_template(params.class_id);

  // Instance geometry: the object seed perturbs each vertex once.
  std::vector<std::array<double, 3>> verts = base.vertices;
  nd::Rng jitter(params.object_seed);
  for (auto& v : verts) {
    for (double& c : v) c += jitter.uniform(-kVertexJitter, kVertexJitter);
  }
  for (auto& v : verts) v = rot::rotate_vector(params.rotation, v);

  nd::Tensor img({3, height, width});
  const auto bg = hsv_to_rgb(params.floor_hue, 0.45f, 0.30f);
  float* px = img.mutable_data();
  const int64_t plane = static_cast<int64_t>(height) * width;
  for (int ch = 0; ch < 3; ++ch) {
    std::fill(px + ch * plane, px + (ch + 1) * plane, bg[ch]);
  }

  // Painter's order: draw back-to-front so nearer edges overwrite.
  std::vector<int> order(base.edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> depth(base.edges.size());
  for (std::size_t e = 0; e < base.edges.size(); ++e) {
    depth[e] = 0.5 * (verts[base.edges[e].first][2] + verts[base.edges[e].second][2]);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return depth[a] < depth[b]; });

  for (int e : order) {
    // Nearer edges are brighter, so shading carries depth information.
    const double zn = std::clamp(depth[e] / 1.2, -1.0, 1.0);
    const float value = static_cast<float>(0.775 + 0.225 * zn);
    const auto color = hsv_to_rgb(params.light_hue, 0.85f, value);
    draw_line(img, height, width, project_vertex(verts[base.edges[e].first], height, width),
              project_vertex(verts[base.edges[e].second], height, width), color);
  }
  return img;
}

DatasetArchive generate_dataset(const DatasetManifest& config) {
  validate_counts(config);
  DatasetArchive archive;
  archive.manifest = config;
  archive.manifest.generator_version = kGeneratorVersion;

  nd::Rng master(config.seed);
  const int64_t n_objects = archive.n_objects();
  archive.records.reserve(static_cast<std::size_t>(n_objects) *
                          config.views_per_object);
  for (int64_t object = 0; object < n_objects; ++object) {
    SceneParams params;
    params.class_id = static_cast<uint32_t>(object / config.objects_per_class);
    params.object_seed = nd::mix_seed(config.seed, static_cast<uint64_t>(object));
    for (uint32_t v = 0; v < config.views_per_object; ++v) {
      auto [angles, q] = rot::sample_rotation(master);
      params.angles = angles;
      params.rotation = q;
      params.floor_hue = static_cast<float>(master.uniform());
      params.light_hue = static_cast<float>(master.uniform());
      params.light_theta = static_cast<float>(master.uniform(0.0, rot::kPi / 4.0));
      params.light_phi = static_cast<float>(master.uniform(0.0, 2.0 * rot::kPi));

      ViewRecord rec;
      rec.image = render_view(params, static_cast<int>(config.height),
                              static_cast<int>(config.width));
      rec.class_id = params.class_id;
      rec.object_id = static_cast<uint32_t>(object);
      rec.angles = params.angles;
      rec.rotation = params.rotation;
      rec.floor_hue = params.floor_hue;
      rec.light_hue = params.light_hue;
      rec.light_theta = params.light_theta;
      rec.light_phi = params.light_phi;
      archive.records.push_back(std::move(rec));
    }
  }
  return archive;
}

std::vector<uint8_t> serialize_archive(const DatasetArchive& archive) {
  nlohmann::json manifest{{"classes", archive.manifest.classes},
                          {"objects_per_class", archive.manifest.objects_per_class},
                          {"views_per_object", archive.manifest.views_per_object},
                          {"height", archive.manifest.height},
                          {"width", archive.manifest.width},
                          {"channels", archive.manifest.channels},
                          {"seed", archive.manifest.seed},
                          {"generator_version", archive.manifest.generator_version}};
  const std::string manifest_str = manifest.dump();

  std::vector<uint8_t> out;
  util::append_bytes(out, "CIE1", 4);
  util::append_u32(out, static_cast<uint32_t>(manifest_str.size()));
  util::append_bytes(out, manifest_str.data(), manifest_str.size());
  for (const auto& rec : archive.records) {
    const float* img = rec.image.data();
    for (int64_t i = 0; i < rec.image.numel(); ++i) util::append_f32(out, img[i]);
    util::append_u32(out, rec.class_id);
    util::append_u32(out, rec.object_id);
    util::append_f32(out, rec.angles.rx);
    util::append_f32(out, rec.angles.ry);
    util::append_f32(out, rec.angles.rz);
    util::append_f32(out, rec.rotation.w);
    util::append_f32(out, rec.rotation.x);
    util::append_f32(out, rec.rotation.y);
    util::append_f32(out, rec.rotation.z);
    util::append_f32(out, rec.floor_hue);
    util::append_f32(out, rec.light_hue);
    util::append_f32(out, rec.light_theta);
    util::append_f32(out, rec.light_phi);
  }
  return out;
}

DatasetArchive deserialize_archive(const std::vector<uint8_t>& bytes) {
  util::ByteReader reader(bytes);
  char magic[4];
  reader.bytes(magic, 4);
  if (std::string_view(magic, 4) != "CIE1") {
    throw IoError("bad archive magic");
  }
  const uint32_t manifest_len = reader.u32();
  std::string manifest_str(manifest_len, '\0');
  reader.bytes(manifest_str.data(), manifest_len);

  DatasetArchive archive;
  try {
    const nlohmann::json j = nlohmann::json::parse(manifest_str);
    archive.manifest.classes = j.at("classes").get<uint32_t>();
    archive.manifest.objects_per_class = j.at("objects_per_class").get<uint32_t>();
    archive.manifest.views_per_object = j.at("views_per_object").get<uint32_t>();
    archive.manifest.height = j.at("height").get<uint32_t>();
    archive.manifest.width = j.at("width").get<uint32_t>();
    archive.manifest.channels = j.at("channels").get<uint32_t>();
    archive.manifest.seed = j.at("seed").get<uint64_t>();
    archive.manifest.generator_version = j.at("generator_version").get<uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid archive manifest: ") + e.what());
  }
  validate_counts(archive.manifest);

  const int64_t n_records = archive.n_objects() * archive.manifest.views_per_object;
  const int64_t numel = static_cast<int64_t>(archive.manifest.channels) *
                        archive.manifest.height * archive.manifest.width;
  archive.records.reserve(static_cast<std::size_t>(n_records));
  for (int64_t r = 0; r < n_records; ++r) {
    ViewRecord rec;
    rec.image = nd::Tensor({static_cast<int64_t>(archive.manifest.channels),
                            static_cast<int64_t>(archive.manifest.height),
                            static_cast<int64_t>(archive.manifest.width)});
    float* img = rec.image.mutable_data();
    for (int64_t i = 0; i < numel; ++i) img[i] = reader.f32();
    rec.class_id = reader.u32();
    rec.object_id = reader.u32();
    rec.angles.rx = reader.f32();
    rec.angles.ry = reader.f32();
    rec.angles.rz = reader.f32();
    rec.rotation.w = reader.f32();
    rec.rotation.x = reader.f32();
    rec.rotation.y = reader.f32();
    rec.rotation.z = reader.f32();
    rec.floor_hue = reader.f32();
    rec.light_hue = reader.f32();
    rec.light_theta = reader.f32();
    rec.light_phi = reader.f32();
    archive.records.push_back(std::move(rec));
  }
  if (!reader.done()) {
    throw IoError("trailing bytes after last archive record");
  }
  return archive;
}

void save_archive(const DatasetArchive& archive, const std::string& path) {
  util::write_file(path, serialize_archive(archive));
}

DatasetArchive load_archive(const std::string& path) {
  return deserialize_archive(util::read_file(path));
}

uint64_t archive_checksum(const DatasetArchive& archive) {
  const std::vector<uint8_t> bytes = serialize_archive(archive);
  return util::fnv1a64(bytes.data(), bytes.size());
}

TrainingPair sample_training_pair(const DatasetArchive& archive, nd::Rng& rng) {
  const int64_t views = archive.manifest.views_per_object;
  if (views < 2) {
    throw ContractError("pair sampling needs at least 2 views per object");
  }
  const int64_t object = rng.uniform_int(archive.n_objects());
  const int64_t view_a = rng.uniform_int(views);
  int64_t view_b = rng.uniform_int(views - 1);
  if (view_b >= view_a) ++view_b;

  TrainingPair pair;
  pair.index_a = archive.record_index(object, view_a);
  pair.index_b = archive.record_index(object, view_b);
  const ViewRecord& a = archive.records[static_cast<std::size_t>(pair.index_a)];
  const ViewRecord& b = archive.records[static_cast<std::size_t>(pair.index_b)];
  pair.g_rel = rot::relative_rotation(a.rotation, b.rotation);
  pair.class_id = a.class_id;
  return pair;
}

}  // namespace capsrep::data
