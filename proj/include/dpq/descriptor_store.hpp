#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpq/binary_io.hpp"
#include "dpq/matrix.hpp"

namespace dpq {

// N x D descriptor database. `groups` is optional and in-memory only: when
// set, rows sharing a group id are treated as related (never mined as
// negatives of each other).
struct DescriptorSet {
  Matrix descriptors;
  std::vector<std::uint64_t> ids;
  bool l2_normalized = false;
  std::vector<std::uint64_t> groups;

  std::size_t size() const noexcept { return descriptors.rows(); }
  std::size_t dim() const noexcept { return descriptors.cols(); }

  // Throws ErrorKind::Input when an invariant is broken.
  void validate() const;

  static DescriptorSet from_matrix(Matrix descriptors, bool l2_normalized = false);
};

struct ScenePointSet {
  Matrix positions;  // m x 3
  std::vector<double> distinctiveness;
  std::uint64_t total_images = 0;

  std::size_t size() const noexcept { return positions.rows(); }
  void validate() const;
};

DescriptorSet subset(const DescriptorSet& set, std::span<const std::size_t> rows);

io::Bytes encode_descriptors(const DescriptorSet& set);
DescriptorSet decode_descriptors(const io::Bytes& bytes, const std::string& origin = "descriptor file");
void save_descriptors(const DescriptorSet& set, const std::string& path);
DescriptorSet load_descriptors(const std::string& path);

io::Bytes encode_scene(const ScenePointSet& scene);
ScenePointSet decode_scene(const io::Bytes& bytes, const std::string& origin = "scene file");
void save_scene(const ScenePointSet& scene, const std::string& path);
ScenePointSet load_scene(const std::string& path);

// Unit-sphere Gaussian mixture: centres uniform on the sphere, members are
// centre + N(0, spread^2 I), then renormalised. Rows are ordered cluster by
// cluster; ids are row numbers.
DescriptorSet synth_descriptors(std::size_t n_clusters, std::size_t per_cluster, std::size_t dim,
                                double spread, std::uint64_t seed);

// Clustered 3D points with distinctiveness = (observing images) / total_images.
ScenePointSet synth_scene(std::size_t m, std::size_t n_clusters, std::uint64_t seed);

}  // namespace dpq
