#include "stone/geometry.h"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "stone/rng.h"

namespace stone {
namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_unit_vector(Rng& rng) {
  for (;;) {
    const Vec3 g{rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(dot(g, g));
    if (n > 1e-12) return (1.0 / n) * g;
  }
}

std::vector<Vec3> sample_cube_surface(int n, Rng& rng) {
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t face = rng.below(6);
    const double u = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform(-1.0, 1.0);
    const double s = (face % 2 == 0) ? 1.0 : -1.0;
    switch (face / 2) {
      case 0: out.push_back({s, u, v}); break;
      case 1: out.push_back({u, s, v}); break;
      default: out.push_back({u, v, s}); break;
    }
  }
  return out;
}

// Six poles fix every axis extent to [-1, 1], and the remaining points come
// in antipodal pairs, so normalization is an isotropic map and the centroid
// stays at the center for even K.
std::vector<Vec3> sample_sphere_shell(int n, Rng& rng) {
  std::vector<Vec3> out = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                           {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  out.reserve(n);
  while (static_cast<int>(out.size()) + 2 <= n) {
    const Vec3 u = random_unit_vector(rng);
    out.push_back(u);
    out.push_back(-1.0 * u);
  }
  if (static_cast<int>(out.size()) < n) out.push_back(random_unit_vector(rng));
  return out;
}

std::vector<Vec3> sample_cylinder(int n, Rng& rng) {
  const double half_height = rng.uniform(0.75, 1.25);
  const double lateral_area = 2.0 * kPi * 2.0 * half_height;
  const double cap_area = 2.0 * kPi;
  const double p_lateral = lateral_area / (lateral_area + cap_area);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double theta = rng.uniform(0.0, 2.0 * kPi);
    if (rng.uniform() < p_lateral) {
      out.push_back({std::cos(theta), std::sin(theta),
                     rng.uniform(-half_height, half_height)});
    } else {
      const double r = std::sqrt(rng.uniform());
      const double z = rng.uniform() < 0.5 ? -half_height : half_height;
      out.push_back({r * std::cos(theta), r * std::sin(theta), z});
    }
  }
  return out;
}

std::vector<Vec3> sample_torus(int n, Rng& rng) {
  const double major = 1.0;
  const double minor = rng.uniform(0.25, 0.4);
  std::vector<Vec3> out;
  out.reserve(n);
  while (static_cast<int>(out.size()) < n) {
    const double u = rng.uniform(0.0, 2.0 * kPi);
    const double v = rng.uniform(0.0, 2.0 * kPi);
    // Area element is proportional to (R + r cos v).
    if (rng.uniform() * (major + minor) > major + minor * std::cos(v)) continue;
    const double ring = major + minor * std::cos(v);
    out.push_back({ring * std::cos(u), ring * std::sin(u), minor * std::sin(v)});
  }
  return out;
}

std::vector<Vec3> sample_plane(int n, Rng& rng) {
  const double slope_x = rng.uniform(0.2, 0.5);
  const double slope_y = rng.uniform(0.2, 0.5);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    out.push_back({x, y, slope_x * x + slope_y * y});
  }
  return out;
}

// Two perpendicular square bars in the xy-plane, sampled by volume.
std::vector<Vec3> sample_cross(int n, Rng& rng) {
  const double half_width = rng.uniform(0.1, 0.2);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double along = rng.uniform(-1.0, 1.0);
    const double across = rng.uniform(-half_width, half_width);
    const double depth = rng.uniform(-half_width, half_width);
    if (rng.uniform() < 0.5) {
      out.push_back({along, across, depth});
    } else {
      out.push_back({across, along, depth});
    }
  }
  return out;
}

double parse_real(std::string_view token, bool& ok) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  ok = ec == std::errc{} && ptr == last && std::isfinite(value);
  return value;
}

}  // namespace

void Dataset::validate() const {
  if (num_classes <= 0) throw std::invalid_argument("dataset has no classes");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label < 0 || s.label >= num_classes) {
      throw std::invalid_argument("sample " + std::to_string(i) + ": label " +
                                  std::to_string(s.label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    if (s.cloud.empty()) {
      throw std::invalid_argument("sample " + std::to_string(i) +
                                  ": empty point cloud");
    }
  }
}

PointCloud normalize_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) {
    throw std::invalid_argument("normalize_unit_cube: empty cloud");
  }
  Vec3 lo = cloud.points.front();
  Vec3 hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  }
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    Vec3 q;
    for (int a = 0; a < 3; ++a) {
      const double extent = hi[a] - lo[a];
      if (extent > 0.0) {
        // Endpoints are pinned so that min maps to 0 and max to 1 exactly.
        q[a] = p[a] == hi[a] ? 1.0 : (p[a] - lo[a]) / extent;
      } else {
        q[a] = 0.5;
      }
    }
    out.points.push_back(q);
  }
  return out;
}

Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw std::invalid_argument("centroid: empty cloud");
  Vec3 sum{0, 0, 0};
  for (const auto& p : cloud.points) sum = sum + p;
  return (1.0 / static_cast<double>(cloud.size())) * sum;
}

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kCubeSurface: return "cube-surface";
    case ShapeKind::kSphereShell: return "sphere-shell";
    case ShapeKind::kCylinder: return "cylinder";
    case ShapeKind::kTorus: return "torus";
    case ShapeKind::kPlane: return "plane";
    case ShapeKind::kCross: return "cross";
  }
  return "unknown";
}

ShapeKind parse_shape_kind(std::string_view name) {
  for (auto kind : kAllShapeKinds) {
    if (to_string(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown shape kind '" + std::string(name) + "'");
}

PointCloud synth_shape(ShapeKind kind, int num_points, double jitter,
                       std::uint64_t seed) {
  if (num_points < 8) throw std::invalid_argument("synth_shape: K must be >= 8");
  if (!(jitter >= 0.0)) {
    throw std::invalid_argument("synth_shape: jitter must be non-negative");
  }
  Rng rng(seed);
  std::vector<Vec3> raw;
  switch (kind) {
    case ShapeKind::kCubeSurface: raw = sample_cube_surface(num_points, rng); break;
    case ShapeKind::kSphereShell: raw = sample_sphere_shell(num_points, rng); break;
    case ShapeKind::kCylinder: raw = sample_cylinder(num_points, rng); break;
    case ShapeKind::kTorus: raw = sample_torus(num_points, rng); break;
    case ShapeKind::kPlane: raw = sample_plane(num_points, rng); break;
    case ShapeKind::kCross: raw = sample_cross(num_points, rng); break;
  }
  if (jitter > 0.0) {
    for (auto& p : raw) {
      for (int a = 0; a < 3; ++a) p[a] += jitter * rng.normal();
    }
  }
  return normalize_unit_cube(PointCloud{std::move(raw)});
}

PointCloud synth_shape(std::string_view kind, int num_points, double jitter,
                       std::uint64_t seed) {
  return synth_shape(parse_shape_kind(kind), num_points, jitter, seed);
}

Dataset synth_dataset(const SynthDatasetConfig& config) {
  if (config.classes.empty() || config.samples_per_class <= 0) {
    throw std::invalid_argument("synth_dataset: empty class catalogue");
  }
  Dataset out;
  out.num_classes = static_cast<int>(config.classes.size());
  out.samples.reserve(config.classes.size() * config.samples_per_class);
  std::uint64_t index = 0;
  for (std::size_t c = 0; c < config.classes.size(); ++c) {
    for (int i = 0; i < config.samples_per_class; ++i, ++index) {
      out.samples.push_back(
          {synth_shape(config.classes[c], config.num_points, config.jitter,
                       mix_seed(config.seed, index)),
           static_cast<int>(c)});
    }
  }
  return out;
}

PointCloud parse_xyz(std::istream& in, std::string_view source_name) {
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string_view> tokens;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto stop = rest.find_first_of(" \t");
      tokens.push_back(rest.substr(0, stop));
      rest.remove_prefix(stop == std::string_view::npos ? rest.size() : stop);
    }
    Vec3 p{};
    bool ok = tokens.size() == 3;
    for (std::size_t a = 0; ok && a < 3; ++a) p[a] = parse_real(tokens[a], ok);
    if (!ok) {
      throw std::runtime_error(std::string(source_name) + ": parse error at line " +
                               std::to_string(line_no) +
                               ": expected three real numbers");
    }
    cloud.points.push_back(p);
  }
  if (cloud.empty()) {
    throw std::runtime_error(std::string(source_name) + ": no points");
  }
  return cloud;
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_xyz(in, path.string());
}

void write_xyz(std::ostream& out, const PointCloud& cloud) {
  char buf[96];
  for (const auto& p : cloud.points) {
    const int n = std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0],
                                p[1], p[2]);
    out.write(buf, n);
  }
}

void save_xyz(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_xyz(out, cloud);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset load_manifest(const std::filesystem::path& manifest, int num_classes) {
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
  const auto base = manifest.parent_path();
  Dataset out;
  std::string line;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    int label = -1;
    bool ok = tab != std::string::npos && tab > 0;
    if (ok) {
      const char* first = line.data() + tab + 1;
      const char* last = line.data() + line.size();
      const auto [ptr, ec] = std::from_chars(first, last, label);
      ok = ec == std::errc{} && ptr == last && label >= 0;
    }
    if (!ok) {
      throw std::runtime_error(manifest.string() + ": malformed record at line " +
                               std::to_string(line_no));
    }
    out.samples.push_back({load_xyz(base / line.substr(0, tab)), label});
    max_label = std::max(max_label, label);
  }
  if (out.samples.empty()) {
    throw std::runtime_error(manifest.string() + ": empty manifest");
  }
  out.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  out.validate();
  return out;
}

std::filesystem::path save_dataset(const Dataset& dataset,
                                   const std::filesystem::path& dir,
                                   std::string_view manifest_name,
                                   std::string_view prefix) {
  std::filesystem::create_directories(dir);
  const auto manifest_path = dir / manifest_name;
  std::ofstream manifest(manifest_path, std::ios::binary);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const std::string name = std::string(prefix) + std::to_string(i) + ".xyz";
    save_xyz(dataset.samples[i].cloud, dir / name);
    manifest << name << '\t' << dataset.samples[i].label << '\n';
  }
  if (!manifest) throw std::runtime_error("write failed: " + manifest_path.string());
  return manifest_path;
}

}  // namespace stone
