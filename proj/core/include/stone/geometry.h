#ifndef STONE_GEOMETRY_H_
#define STONE_GEOMETRY_H_

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace stone {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline Vec3 operator*(double s, const Vec3& a) {
  return {s * a[0], s * a[1], s * a[2]};
}
inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}
inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}
inline double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt(squared_distance(a, b));
}

// Ordered set of K points. Operations preserve point order unless their
// contract says otherwise.
struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const PointCloud&) const = default;
};

struct LabeledCloud {
  PointCloud cloud;
  int label = 0;
};

// Classification dataset: labels lie in [0, num_classes).
struct Dataset {
  std::vector<LabeledCloud> samples;
  int num_classes = 0;

  std::size_t size() const { return samples.size(); }
  // Throws std::invalid_argument when a label is out of range or a cloud is
  // empty.
  void validate() const;
};

// Per-axis min-max map into [0, 1]. Zero-extent axes map to 0.5.
PointCloud normalize_unit_cube(const PointCloud& cloud);

Vec3 centroid(const PointCloud& cloud);

enum class ShapeKind { kCubeSurface, kSphereShell, kCylinder, kTorus, kPlane, kCross };

inline constexpr std::array<ShapeKind, 6> kAllShapeKinds = {
    ShapeKind::kCubeSurface, ShapeKind::kSphereShell, ShapeKind::kCylinder,
    ShapeKind::kTorus,       ShapeKind::kPlane,       ShapeKind::kCross};

std::string_view to_string(ShapeKind kind);
// Accepts the names returned by to_string ("cube-surface", ...).
ShapeKind parse_shape_kind(std::string_view name);

// Samples K points from a parametric surface (or thin solid for kCross),
// adds isotropic Gaussian jitter of standard deviation `jitter` in the
// shape's native units (extent ~2), and normalizes to the unit cube. Shape
// proportions that survive normalization vary with the seed. Output depends
// only on the arguments.
PointCloud synth_shape(ShapeKind kind, int num_points, double jitter,
                       std::uint64_t seed);
PointCloud synth_shape(std::string_view kind, int num_points, double jitter,
                       std::uint64_t seed);

struct SynthDatasetConfig {
  std::vector<ShapeKind> classes{kAllShapeKinds.begin(), kAllShapeKinds.end()};
  int samples_per_class = 60;
  int num_points = 256;
  double jitter = 0.01;
  std::uint64_t seed = 0;
};

// Class c holds `samples_per_class` clouds of classes[c]; samples are ordered
// class-major. The per-sample seed is mix_seed(seed, sample index).
Dataset synth_dataset(const SynthDatasetConfig& config);

// XYZ text: one point per line, three whitespace-separated reals.
PointCloud parse_xyz(std::istream& in, std::string_view source_name = "<stream>");
PointCloud load_xyz(const std::filesystem::path& path);
void write_xyz(std::ostream& out, const PointCloud& cloud);
void save_xyz(const PointCloud& cloud, const std::filesystem::path& path);

// Manifest: one `relative/path.xyz<TAB>label-index` record per line, paths
// relative to the manifest's directory. When num_classes is 0 it is inferred
// as max(label) + 1.
Dataset load_manifest(const std::filesystem::path& manifest, int num_classes = 0);

// Writes each sample to `<dir>/<prefix><index>.xyz` and the manifest to
// `<dir>/<manifest_name>`. Returns the manifest path.
std::filesystem::path save_dataset(const Dataset& dataset,
                                   const std::filesystem::path& dir,
                                   std::string_view manifest_name = "manifest.tsv",
                                   std::string_view prefix = "sample_");

}  // namespace stone

#endif  // STONE_GEOMETRY_H_
