#ifndef STONE_TRIGGER_H_
#define STONE_TRIGGER_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "stone/geometry.h"

namespace stone {

enum class TriggerKind { kSingle, kDual };

std::string_view to_string(TriggerKind kind);
TriggerKind parse_trigger_kind(std::string_view name);

// One trigger configuration mapped to one target class. A dual trigger is
// two spheres with the same radius and per-sphere point budget.
struct TriggerSpec {
  TriggerKind kind = TriggerKind::kSingle;
  std::vector<Vec3> centers;
  double radius = 0.05;
  int points_per_sphere = 10;
  int target = 0;

  // Points inserted by implant(): J for single, 2J for dual.
  int total_points() const {
    return points_per_sphere * static_cast<int>(centers.size());
  }
  // Throws std::invalid_argument on a broken invariant.
  void validate() const;

  bool operator==(const TriggerSpec&) const = default;
};

TriggerSpec make_single_trigger(const Vec3& center, int target,
                                double radius = 0.05, int points_per_sphere = 10);
TriggerSpec make_dual_trigger(const Vec3& lower, const Vec3& upper, int target,
                              double radius = 0.05, int points_per_sphere = 10);

// J points on the sphere |p - center| = r: a Fibonacci lattice rotated by a
// rotation drawn from `seed`.
std::vector<Vec3> sample_sphere_surface(const Vec3& center, double radius,
                                        int count, std::uint64_t seed);

// max(1, round-half-even(fraction * K)).
int trigger_point_budget(int num_points, double fraction);

struct TriggerPoints {
  std::vector<Vec3> points;
  TriggerSpec source;
};

// The fixed point set S_n of a spec. Sphere s is laid out with seed s, so
// every sample carrying this spec receives identical trigger points.
TriggerPoints trigger_points(const TriggerSpec& spec);

// Removes total_points() original points chosen uniformly without
// replacement under `seed`, keeps the survivors in order and appends the
// trigger points at the tail. Output K equals input K.
PointCloud implant(const PointCloud& cloud, const TriggerSpec& spec,
                   std::uint64_t seed);

// Fraction of trigger points that still have a point of `processed` within
// `tol` (Euclidean).
double preprocessing_drift(const TriggerPoints& original,
                           const PointCloud& processed, double tol);

// Text format, one spec per line: `kind target r J cx cy cz [cx2 cy2 cz2]`.
std::string format_trigger_spec(const TriggerSpec& spec);
TriggerSpec parse_trigger_spec(std::string_view line);
std::vector<TriggerSpec> read_trigger_specs(std::istream& in);
std::vector<TriggerSpec> load_trigger_specs(const std::filesystem::path& path);
void save_trigger_specs(const std::vector<TriggerSpec>& specs,
                        const std::filesystem::path& path);

}  // namespace stone

#endif  // STONE_TRIGGER_H_
