#include "dpq/descriptor_store.hpp"

#include <cmath>
#include <numeric>

#include "dpq/error.hpp"
#include "dpq/rng.hpp"

namespace dpq {
namespace {

constexpr std::uint32_t kDescriptorVersion = 1;
constexpr std::uint32_t kSceneVersion = 1;
constexpr std::uint64_t kSceneTotalImages = 100;

void normalize_row(std::span<double> row) {
  const double n = l2_norm(row);
  if (n > 0.0)
    for (double& v : row) v /= n;
}

}  // namespace

void DescriptorSet::validate() const {
  if (size() == 0 || dim() == 0) fail(ErrorKind::Input, "descriptor set is empty");
  if (ids.size() != size()) fail(ErrorKind::Input, "descriptor set: ids length != row count");
  if (!groups.empty() && groups.size() != size())
    fail(ErrorKind::Input, "descriptor set: groups length != row count");
  if (!descriptors.all_finite()) fail(ErrorKind::Input, "descriptor set has non-finite entries");
  if (l2_normalized) {
    for (std::size_t r = 0; r < size(); ++r) {
      const double n = l2_norm(descriptors.row(r));
      if (std::abs(n - 1.0) > 1e-4) {
        fail(ErrorKind::Input, "row " + std::to_string(r) + " flagged l2-normalized has norm " +
                                   std::to_string(n));
      }
    }
  }
}

DescriptorSet DescriptorSet::from_matrix(Matrix descriptors, bool l2_normalized) {
  DescriptorSet s;
  s.ids.resize(descriptors.rows());
  std::iota(s.ids.begin(), s.ids.end(), std::uint64_t{0});
  s.descriptors = std::move(descriptors);
  s.l2_normalized = l2_normalized;
  return s;
}

void ScenePointSet::validate() const {
  if (size() == 0) fail(ErrorKind::Input, "scene has no points");
  if (positions.cols() != 3) fail(ErrorKind::Input, "scene positions must be m x 3");
  if (distinctiveness.size() != size())
    fail(ErrorKind::Input, "scene: distinctiveness length != point count");
  if (!positions.all_finite()) fail(ErrorKind::Input, "scene has non-finite positions");
  for (double d : distinctiveness)
    if (!(d >= 0.0 && d <= 1.0)) fail(ErrorKind::Input, "distinctiveness outside [0,1]");
}

DescriptorSet subset(const DescriptorSet& set, std::span<const std::size_t> rows) {
  DescriptorSet out;
  out.descriptors = gather_rows(set.descriptors, rows);
  out.l2_normalized = set.l2_normalized;
  out.ids.reserve(rows.size());
  for (auto r : rows) out.ids.push_back(set.ids[r]);
  if (!set.groups.empty()) {
    out.groups.reserve(rows.size());
    for (auto r : rows) out.groups.push_back(set.groups[r]);
  }
  return out;
}

io::Bytes encode_descriptors(const DescriptorSet& set) {
  io::Writer w;
  w.magic("DPQD");
  w.u32(kDescriptorVersion);
  w.u32(static_cast<std::uint32_t>(set.dim()));
  w.u64(set.size());
  w.u8(set.l2_normalized ? 1 : 0);
  for (double v : set.descriptors.values()) w.f32(static_cast<float>(v));
  for (auto id : set.ids) w.u64(id);
  return w.take();
}

DescriptorSet decode_descriptors(const io::Bytes& bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  r.expect_magic("DPQD");
  if (const auto v = r.u32(); v != kDescriptorVersion) r.error("unsupported version " + std::to_string(v));
  const std::uint32_t dim = r.u32();
  const std::uint64_t n = r.u64();
  const std::uint8_t flag = r.u8();
  if (dim == 0) r.error("zero descriptor dimension");
  if (flag > 1) r.error("l2_normalized flag must be 0 or 1");
  // Check the whole payload up front so a short file reports truncation
  // rather than a partially-filled set.
  const std::uint64_t row_bytes = std::uint64_t{dim} * 4 + 8;
  if (n > r.remaining() / row_bytes) {
    r.error("truncated descriptor payload: header says " + std::to_string(n) + " rows, room for " +
            std::to_string(r.remaining() / row_bytes));
  }

  DescriptorSet set;
  set.descriptors = Matrix(n, dim);
  for (double& v : set.descriptors.values()) v = r.f32();
  set.ids.resize(n);
  for (auto& id : set.ids) id = r.u64();
  set.l2_normalized = flag == 1;
  r.expect_end();
  return set;
}

void save_descriptors(const DescriptorSet& set, const std::string& path) {
  io::write_file(path, encode_descriptors(set));
}

DescriptorSet load_descriptors(const std::string& path) {
  return decode_descriptors(io::read_file(path), path);
}

io::Bytes encode_scene(const ScenePointSet& scene) {
  io::Writer w;
  w.magic("DPQS");
  w.u32(kSceneVersion);
  w.u64(scene.size());
  w.u64(scene.total_images);
  for (double v : scene.positions.values()) w.f32(static_cast<float>(v));
  for (double d : scene.distinctiveness) w.f32(static_cast<float>(d));
  return w.take();
}

ScenePointSet decode_scene(const io::Bytes& bytes, const std::string& origin) {
  io::Reader r(bytes, origin);
  r.expect_magic("DPQS");
  if (const auto v = r.u32(); v != kSceneVersion) r.error("unsupported version " + std::to_string(v));
  const std::uint64_t m = r.u64();
  ScenePointSet scene;
  scene.total_images = r.u64();
  if (m > r.remaining() / 16) {
    r.error("truncated scene payload: header says " + std::to_string(m) + " points, room for " +
            std::to_string(r.remaining() / 16));
  }
  scene.positions = Matrix(m, 3);
  for (double& v : scene.positions.values()) v = r.f32();
  scene.distinctiveness.resize(m);
  for (double& d : scene.distinctiveness) d = r.f32();
  r.expect_end();
  return scene;
}

void save_scene(const ScenePointSet& scene, const std::string& path) {
  io::write_file(path, encode_scene(scene));
}

ScenePointSet load_scene(const std::string& path) { return decode_scene(io::read_file(path), path); }

DescriptorSet synth_descriptors(std::size_t n_clusters, std::size_t per_cluster, std::size_t dim,
                                double spread, std::uint64_t seed) {
  if (n_clusters == 0 || per_cluster == 0 || dim == 0)
    fail(ErrorKind::Config, "synth_descriptors: counts must be >= 1");
  if (!(spread > 0.0)) fail(ErrorKind::Config, "synth_descriptors: spread must be > 0");

  Rng rng(seed);
  Matrix centres(n_clusters, dim);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (double& v : centres.row(c)) v = rng.normal();
    normalize_row(centres.row(c));
  }

  Matrix x(n_clusters * per_cluster, dim);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (std::size_t k = 0; k < per_cluster; ++k) {
      auto row = x.row(c * per_cluster + k);
      for (std::size_t j = 0; j < dim; ++j) row[j] = centres(c, j) + spread * rng.normal();
      normalize_row(row);
    }
  }
  return DescriptorSet::from_matrix(std::move(x), true);
}

ScenePointSet synth_scene(std::size_t m, std::size_t n_clusters, std::uint64_t seed) {
  if (n_clusters == 0 || m < n_clusters) fail(ErrorKind::Config, "synth_scene: need m >= n_clusters >= 1");

  Rng rng(seed);
  // Centres in a cube that grows with the cluster count, kept apart by
  // rejection so clusters stay separable.
  const double side = 20.0 * std::cbrt(static_cast<double>(n_clusters));
  constexpr double kMinSeparation = 8.0;
  constexpr double kPointSigma = 1.0;
  Matrix centres(n_clusters, 3);
  for (std::size_t c = 0; c < n_clusters; ++c) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (double& v : centres.row(c)) v = rng.uniform(-side / 2, side / 2);
      bool ok = true;
      for (std::size_t p = 0; p < c && ok; ++p) ok = l2_distance(centres.row(c), centres.row(p)) >= kMinSeparation;
      if (ok) break;
    }
  }

  ScenePointSet scene;
  scene.total_images = kSceneTotalImages;
  scene.positions = Matrix(m, 3);
  scene.distinctiveness.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t c = i % n_clusters;
    for (std::size_t j = 0; j < 3; ++j) scene.positions(i, j) = centres(c, j) + kPointSigma * rng.normal();
    const auto observers = rng.below(kSceneTotalImages + 1);
    scene.distinctiveness[i] = static_cast<double>(observers) / static_cast<double>(kSceneTotalImages);
  }
  return scene;
}

}  // namespace dpq
