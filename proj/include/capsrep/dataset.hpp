#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "capsrep/errors.hpp"
#include "capsrep/rng.hpp"
#include "capsrep/rotations.hpp"
#include "capsrep/tensor.hpp"

namespace capsrep::data {

inline constexpr int kNumShapeClasses = 8;
inline constexpr float kVertexJitter = 0.08f;
inline constexpr uint32_t kGeneratorVersion = 1;

// Latent factors of a single rendered view. The light direction factors are
// sampled and stored but do not affect the rasterization.
struct SceneParams {
  uint32_t class_id = 0;
  uint64_t object_seed = 0;
  rot::TaitBryan angles;
  rot::Quat rotation;
  float floor_hue = 0.0f;
  float light_hue = 0.0f;
  float light_theta = 0.0f;
  float light_phi = 0.0f;
};

struct ViewRecord {
  nd::Tensor image;  // (3, H, W) in [0, 1]
  uint32_t class_id = 0;
  uint32_t object_id = 0;
  rot::TaitBryan angles;
  rot::Quat rotation;
  float floor_hue = 0.0f;
  float light_hue = 0.0f;
  float light_theta = 0.0f;
  float light_phi = 0.0f;
};

struct DatasetManifest {
  uint32_t classes = 8;
  uint32_t objects_per_class = 20;
  uint32_t views_per_object = 8;
  uint32_t height = 32;
  uint32_t width = 32;
  uint32_t channels = 3;
  uint64_t seed = 0;
  uint32_t generator_version = kGeneratorVersion;
};

struct DatasetArchive {
  DatasetManifest manifest;
  std::vector<ViewRecord> records;

  int64_t n_objects() const {
    return static_cast<int64_t>(manifest.classes) * manifest.objects_per_class;
  }
  int64_t record_index(int64_t object, int64_t view) const;
  const ViewRecord& view(int64_t object, int64_t view) const;
};

struct TrainingPair {
  int64_t index_a = 0;
  int64_t index_b = 0;
  rot::Quat g_rel;
  uint32_t class_id = 0;
};

std::array<float, 3> hsv_to_rgb(float h, float s, float v);

// Orthographic image-plane position (row, col) of a model-space point.
std::array<double, 2> project_vertex(const std::array<double, 3>& v, int height,
                                     int width);

nd::Tensor render_view(const SceneParams& params, int height, int width);

DatasetArchive generate_dataset(const DatasetManifest& config);

std::vector<uint8_t> serialize_archive(const DatasetArchive& archive);
DatasetArchive deserialize_archive(const std::vector<uint8_t>& bytes);
void save_archive(const DatasetArchive& archive, const std::string& path);
DatasetArchive load_archive(const std::string& path);
uint64_t archive_checksum(const DatasetArchive& archive);

TrainingPair sample_training_pair(const DatasetArchive& archive, nd::Rng& rng);

}  // namespace capsrep::data
