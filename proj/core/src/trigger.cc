#include "stone/trigger.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "stone/rng.h"
#include "stone/stats.h"

namespace stone {
namespace {

using Mat3 = std::array<Vec3, 3>;

Mat3 random_rotation(std::uint64_t seed) {
  Rng rng(seed);
  double w, x, y, z, n;
  do {
    w = rng.normal();
    x = rng.normal();
    y = rng.normal();
    z = rng.normal();
    n = std::sqrt(w * w + x * x + y * y + z * z);
  } while (n < 1e-12);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

bool in_unit_cube(const Vec3& p) {
  return p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0 &&
         p[2] >= 0.0 && p[2] <= 1.0;
}

}  // namespace

std::string_view to_string(TriggerKind kind) {
  return kind == TriggerKind::kSingle ? "single" : "dual";
}

TriggerKind parse_trigger_kind(std::string_view name) {
  if (name == "single") return TriggerKind::kSingle;
  if (name == "dual") return TriggerKind::kDual;
  throw std::invalid_argument("unknown trigger kind '" + std::string(name) + "'");
}

void TriggerSpec::validate() const {
  const std::size_t expected = kind == TriggerKind::kSingle ? 1 : 2;
  if (centers.size() != expected) {
    throw std::invalid_argument(std::string(to_string(kind)) +
                                " trigger needs " + std::to_string(expected) +
                                " center(s)");
  }
  for (const auto& c : centers) {
    if (!in_unit_cube(c)) {
      throw std::invalid_argument("trigger center outside [0,1]^3");
    }
  }
  if (kind == TriggerKind::kDual && centers[0] == centers[1]) {
    throw std::invalid_argument("dual trigger centers must be distinct");
  }
  if (!(radius > 0.0)) throw std::invalid_argument("trigger radius must be > 0");
  if (points_per_sphere < 1) {
    throw std::invalid_argument("trigger needs at least one point per sphere");
  }
  if (target < 0) throw std::invalid_argument("trigger target must be >= 0");
}

TriggerSpec make_single_trigger(const Vec3& center, int target, double radius,
                                int points_per_sphere) {
  TriggerSpec spec{TriggerKind::kSingle, {center}, radius, points_per_sphere,
                   target};
  spec.validate();
  return spec;
}

TriggerSpec make_dual_trigger(const Vec3& lower, const Vec3& upper, int target,
                              double radius, int points_per_sphere) {
  TriggerSpec spec{TriggerKind::kDual, {lower, upper}, radius,
                   points_per_sphere, target};
  spec.validate();
  return spec;
}

std::vector<Vec3> sample_sphere_surface(const Vec3& center, double radius,
                                        int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sphere sample count must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be > 0");
  const Mat3 rot = random_rotation(seed);
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> out;
  out.reserve(count);
  // Offset lattice: pole offset 0.2 keeps the centroid within 0.016 r of the
  // center for every count >= 10 (the plain (2i+1)/count layout reaches
  // 0.024 r at count 10).
  constexpr double kPoleOffset = 0.2;
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - 2.0 * (i + kPoleOffset) / (count - 1 + 2.0 * kPoleOffset);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    Vec3 u{rho * std::cos(phi), rho * std::sin(phi), z};
    Vec3 v{dot(rot[0], u), dot(rot[1], u), dot(rot[2], u)};
    // Renormalize so the on-sphere error stays at rounding level.
    v = (1.0 / std::sqrt(dot(v, v))) * v;
    out.push_back(center + radius * v);
  }
  return out;
}

int trigger_point_budget(int num_points, double fraction) {
  if (num_points < 1) throw std::invalid_argument("K must be >= 1");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("trigger fraction must lie in (0, 1)");
  }
  return static_cast<int>(
      std::max<std::int64_t>(1, round_half_even(fraction * num_points)));
}

TriggerPoints trigger_points(const TriggerSpec& spec) {
  spec.validate();
  TriggerPoints out{{}, spec};
  out.points.reserve(spec.total_points());
  for (std::size_t s = 0; s < spec.centers.size(); ++s) {
    auto sphere = sample_sphere_surface(spec.centers[s], spec.radius,
                                        spec.points_per_sphere, s);
    out.points.insert(out.points.end(), sphere.begin(), sphere.end());
  }
  return out;
}

PointCloud implant(const PointCloud& cloud, const TriggerSpec& spec,
                   std::uint64_t seed) {
  const auto trigger = trigger_points(spec);
  const std::size_t m = trigger.points.size();
  if (cloud.size() <= m) {
    throw std::invalid_argument("cloud too small for trigger (K=" +
                                std::to_string(cloud.size()) + ", m=" +
                                std::to_string(m) + ")");
  }
  Rng rng(seed);
  std::vector<char> removed(cloud.size(), 0);
  for (std::size_t idx : rng.sample_without_replacement(cloud.size(), m)) {
    removed[idx] = 1;
  }
  PointCloud out;
  out.points.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!removed[i]) out.points.push_back(cloud.points[i]);
  }
  out.points.insert(out.points.end(), trigger.points.begin(),
                    trigger.points.end());
  return out;
}

double preprocessing_drift(const TriggerPoints& original,
                           const PointCloud& processed, double tol) {
  if (!(tol >= 0.0)) throw std::invalid_argument("tolerance must be >= 0");
  if (original.points.empty()) return 1.0;
  const double tol2 = tol * tol;
  std::size_t survived = 0;
  for (const auto& t : original.points) {
    const bool found = std::any_of(
        processed.points.begin(), processed.points.end(),
        [&](const Vec3& p) { return squared_distance(p, t) <= tol2; });
    if (found) ++survived;
  }
  return static_cast<double>(survived) /
         static_cast<double>(original.points.size());
}

std::string format_trigger_spec(const TriggerSpec& spec) {
  std::string out = std::string(to_string(spec.kind)) + " " +
                    std::to_string(spec.target);
  char buf[96];
  std::snprintf(buf, sizeof(buf), " %.17g %d", spec.radius,
                spec.points_per_sphere);
  out += buf;
  for (const auto& c : spec.centers) {
    std::snprintf(buf, sizeof(buf), " %.17g %.17g %.17g", c[0], c[1], c[2]);
    out += buf;
  }
  return out;
}

TriggerSpec parse_trigger_spec(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::string kind;
  TriggerSpec spec;
  if (!(in >> kind >> spec.target >> spec.radius >> spec.points_per_sphere)) {
    throw std::invalid_argument("malformed trigger spec: '" + std::string(line) + "'");
  }
  spec.kind = parse_trigger_kind(kind);
  const int n = spec.kind == TriggerKind::kSingle ? 1 : 2;
  for (int s = 0; s < n; ++s) {
    Vec3 c;
    if (!(in >> c[0] >> c[1] >> c[2])) {
      throw std::invalid_argument("trigger spec missing center coordinates: '" +
                                  std::string(line) + "'");
    }
    spec.centers.push_back(c);
  }
  std::string extra;
  if (in >> extra) {
    throw std::invalid_argument("trailing fields in trigger spec: '" +
                                std::string(line) + "'");
  }
  spec.validate();
  return spec;
}

std::vector<TriggerSpec> read_trigger_specs(std::istream& in) {
  std::vector<TriggerSpec> specs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') {
      continue;
    }
    try {
      specs.push_back(parse_trigger_spec(line));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
  }
  return specs;
}

std::vector<TriggerSpec> load_trigger_specs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_trigger_specs(in);
}

void save_trigger_specs(const std::vector<TriggerSpec>& specs,
                        const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : specs) out << format_trigger_spec(s) << '\n';
}

}  // namespace stone
