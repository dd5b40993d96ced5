#pragma once
// Dataset handling: a parametric synthetic ship-scene generator with
// multiplicative speckle, deterministic splits, LR/HR pairing, and
// directory-tree ingestion/export of PNG corpora.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "casr/common.hpp"
#include "casr/image.hpp"
#include "casr/png_io.hpp"
#include "casr/resample.hpp"

namespace casr {

template <typename T>
struct LabeledSample {
  Image<T> image;
  int label = 0;
  std::string lineage;  // "hr", "lr", "sr", ...
  std::string source;   // file path or generator tag
};

template <typename T>
struct PairedSample {
  Image<T> lr;
  Image<T> hr;
  int label = 0;
  std::string source;
};

// ---------------------------------------------------------------------------
// Synthetic scene generator.
//
// Each class is a distinct deterministic silhouette built from soft-edged
// primitives in a ship-aligned frame, composited over a dark sea and
// corrupted by mean-one multiplicative gamma speckle (`looks` controls
// granularity). Pose jitter draws rotation, translation, scale, and
// brightness per sample.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  int per_class = 100;
  int size = 64;
  std::uint64_t seed = 0;
  int speckle_looks = 4;
  bool pose_jitter = true;

  void validate() const {
    if (per_class <= 0) throw ConfigError("per_class must be positive");
    if (size < 16) throw ConfigError("synthetic image size must be at least 16");
    if (speckle_looks < 1) throw ConfigError("speckle_looks must be at least 1");
  }
};

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Soft axis-aligned box in the ship frame, edge-feathered over one pixel.
inline double soft_box(double u, double v, double cu, double cv, double hu, double hv) {
  const double du = hu - std::abs(u - cu);
  const double dv = hv - std::abs(v - cv);
  return smoothstep(0.0, 1.0, du) * smoothstep(0.0, 1.0, dv);
}

inline double soft_ellipse(double u, double v, double cu, double cv, double ru, double rv) {
  const double du = (u - cu) / ru;
  const double dv = (v - cv) / rv;
  const double d = std::sqrt(du * du + dv * dv);
  return smoothstep(0.0, 1.0 / std::min(ru, rv), 1.0 - d);
}

// Superellipse hull: pointier than an ellipse, flatter sides.
inline double soft_hull(double u, double v, double a, double b, double n) {
  const double d = std::pow(std::abs(u) / a, n) + std::pow(std::abs(v) / b, n);
  return smoothstep(0.0, 0.12, 1.0 - d);
}

// Triangular wake trailing aft of the stern (u < -stern), fading with range.
inline double soft_wake(double u, double v, double stern, double len, double spread) {
  const double t = -(u + stern);
  if (t <= 0.0 || t > len) return 0.0;
  const double half = 1.0 + spread * (t / len);
  const double across = smoothstep(0.0, 1.0, half - std::abs(v));
  const double along = 1.0 - t / len;
  return across * along;
}

// Dominant point scatterer: the bright, pixel-scale return a corner-reflector
// -like structure produces. These carry most of a ship's high-frequency
// signature.
inline double soft_peak(double u, double v, double cu, double cv, double sigma) {
  const double du = u - cu, dv = v - cv;
  return std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
}

// Regularly spaced fittings (bollards, rail stanchions) along both deck
// edges of a hull with half-length a and half-beam b.
inline double deck_fittings(double u, double v, double a, double b) {
  double r = 0.0;
  for (double cu = -a + 3.0; cu <= a - 3.0; cu += 4.0) {
    r += soft_peak(u, v, cu, -(b - 1.2), 0.9);
    r += soft_peak(u, v, cu, b - 1.2, 0.9);
  }
  return r;
}

// Class geometry: returns reflectivity added on top of the sea floor level.
// u runs along the ship length, v across the beam; units are pixels on the
// canonical 64px canvas.
inline double ship_reflectivity(int class_id, double u, double v) {
  double r = 0.0;
  switch (class_id) {
    case 0: {  // Cargo: long hull, regular container blocks along the deck
      r += 0.50 * soft_hull(u, v, 20.0, 5.0, 2.5);
      r += 0.32 * deck_fittings(u, v, 20.0, 5.0);
      for (int i = 0; i < 4; ++i) {
        const double cu = -12.0 + 8.0 * i;
        r += 0.35 * soft_box(u, v, cu, 0.0, 2.8, 3.0);
        // container corner fittings
        r += 0.30 * soft_peak(u, v, cu, -1.8, 1.0);
        r += 0.30 * soft_peak(u, v, cu, 1.8, 1.0);
      }
      r += 0.20 * soft_box(u, v, 17.0, 0.0, 2.0, 2.5);  // aft house
      break;
    }
    case 1: {  // Tanker: longest hull, aft superstructure, center pipeline
      r += 0.46 * soft_hull(u, v, 23.0, 6.0, 2.2);
      r += 0.32 * deck_fittings(u, v, 23.0, 6.0);
      r += 0.38 * soft_box(u, v, -18.0, 0.0, 3.0, 4.0);
      r += 0.18 * soft_box(u, v, 2.0, 0.0, 13.0, 0.9);
      // manifold stations along the pipeline
      for (int i = 0; i < 5; ++i) r += 0.28 * soft_peak(u, v, -6.0 + 4.0 * i, 0.0, 0.9);
      break;
    }
    case 2: {  // Fishing: small hull, cabin, bright mast point, light wake
      r += 0.48 * soft_hull(u, v, 9.0, 3.5, 2.0);
      r += 0.32 * deck_fittings(u, v, 9.0, 3.5);
      r += 0.30 * soft_box(u, v, -3.0, 0.0, 2.5, 2.2);
      r += 0.45 * soft_ellipse(u, v, 4.0, 0.0, 1.4, 1.4);
      r += 0.12 * soft_wake(u, v, 9.0, 14.0, 2.5);
      // gear blocks on the working deck
      r += 0.35 * soft_peak(u, v, -6.5, -1.5, 0.9);
      r += 0.35 * soft_peak(u, v, -6.5, 1.5, 0.9);
      break;
    }
    case 3: {  // Dredging: broad hull with a transverse gantry wider than the beam
      r += 0.46 * soft_hull(u, v, 14.0, 6.0, 2.2);
      r += 0.32 * deck_fittings(u, v, 14.0, 6.0);
      r += 0.38 * soft_box(u, v, 0.0, 0.0, 2.0, 9.0);
      r += 0.28 * soft_ellipse(u, v, -10.0, 0.0, 1.6, 1.6);
      r += 0.28 * soft_ellipse(u, v, 10.0, 0.0, 1.6, 1.6);
      // gantry end sheaves and spud heads
      r += 0.40 * soft_peak(u, v, 0.0, -8.5, 1.0);
      r += 0.40 * soft_peak(u, v, 0.0, 8.5, 1.0);
      r += 0.30 * soft_peak(u, v, -10.0, 0.0, 0.9);
      r += 0.30 * soft_peak(u, v, 10.0, 0.0, 0.9);
      break;
    }
    case 4: {  // Passenger: layered full-length superstructure, high mean brightness
      r += 0.50 * soft_hull(u, v, 17.0, 6.0, 2.3);
      r += 0.32 * deck_fittings(u, v, 17.0, 6.0);
      r += 0.28 * soft_box(u, v, 0.0, 0.0, 13.0, 4.0);
      r += 0.20 * soft_box(u, v, 0.0, 0.0, 9.0, 2.4);
      // davit/window rows along both sides of the superstructure
      for (int i = 0; i < 6; ++i) {
        const double cu = -10.0 + 4.0 * i;
        r += 0.22 * soft_peak(u, v, cu, -3.2, 0.9);
        r += 0.22 * soft_peak(u, v, cu, 3.2, 0.9);
      }
      break;
    }
    case 5: {  // Tug: compact rounded hull, tall cabin, pronounced wake
      r += 0.58 * soft_hull(u, v, 7.0, 4.5, 2.0);
      r += 0.32 * deck_fittings(u, v, 7.0, 4.5);
      r += 0.32 * soft_ellipse(u, v, 1.0, 0.0, 2.6, 2.6);
      r += 0.18 * soft_wake(u, v, 7.0, 18.0, 3.5);
      // bow fendering and towing winch
      r += 0.35 * soft_peak(u, v, 5.5, 0.0, 0.9);
      r += 0.35 * soft_peak(u, v, -4.5, 0.0, 0.9);
      break;
    }
    default:
      throw DomainError("unknown class id " + std::to_string(class_id));
  }
  return r;
}

struct Pose {
  double theta = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double scale = 1.0;
  double brightness = 1.0;
};

inline Image<double> render_scene(int class_id, int size, const Pose& pose) {
  constexpr double kSeaLevel = 0.06;
  const double geom = size / 64.0;  // geometry is authored on a 64px canvas
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double cx = (size - 1) / 2.0 + pose.tx * geom;
  const double cy = (size - 1) / 2.0 + pose.ty * geom;
  Image<double> img(size, size, 1.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = (x - cx) / (pose.scale * geom);
      const double dy = (y - cy) / (pose.scale * geom);
      const double u = c * dx + s * dy;
      const double v = -s * dx + c * dy;
      const double r = kSeaLevel + pose.brightness * ship_reflectivity(class_id, u, v);
      img.v[static_cast<std::size_t>(y) * size + x] = std::clamp(r, 0.0, 0.95);
    }
  }
  return img;
}

inline void apply_speckle(Image<double>& img, int looks, Rng& rng) {
  const double l = static_cast<double>(looks);
  for (auto& p : img.v) {
    const double g = rng.gamma(l) / l;  // mean-one multiplicative noise
    p = std::clamp(p * g, 0.0, 1.0);
  }
}

}  // namespace detail

// Noise-free canonical-pose rendering of one class (useful as a matching
// template and for inspecting the geometry).
inline Image<double> render_ship_template(int class_id, int size = 64) {
  if (class_id < 0 || class_id >= kNumClasses)
    throw DomainError("class id out of range: " + std::to_string(class_id));
  if (size < 16) throw ConfigError("template size must be at least 16");
  return detail::render_scene(class_id, size, detail::Pose{});
}

// Generates per_class samples for each of the six classes, class-major order.
// Every sample draws from its own stream keyed by (seed, class, index), so
// the corpus is reproducible and insensitive to generation order.
template <typename T = double>
std::vector<LabeledSample<T>> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<LabeledSample<T>> out;
  out.reserve(static_cast<std::size_t>(spec.per_class) * kNumClasses);
  for (int cls = 0; cls < kNumClasses; ++cls) {
    for (int i = 0; i < spec.per_class; ++i) {
      const std::string tag =
          "sample-" + std::to_string(cls) + "-" + std::to_string(i);
      Rng rng(sub_seed(spec.seed, tag));
      detail::Pose pose;
      if (spec.pose_jitter) {
        pose.theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        pose.tx = rng.uniform(-5.0, 5.0);
        pose.ty = rng.uniform(-5.0, 5.0);
        pose.scale = rng.uniform(0.9, 1.1);
        pose.brightness = rng.uniform(0.9, 1.05);
      }
      Image<double> scene = detail::render_scene(cls, spec.size, pose);
      detail::apply_speckle(scene, spec.speckle_looks, rng);
      LabeledSample<T> sample;
      sample.image = image_cast<T>(scene);
      sample.label = cls;
      sample.lineage = "hr";
      sample.source = "synthetic:" + tag;
      out.push_back(std::move(sample));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pairing and splits.
// ---------------------------------------------------------------------------

template <typename T>
std::vector<PairedSample<T>> make_pairs(const std::vector<LabeledSample<T>>& hr_samples) {
  std::vector<PairedSample<T>> out;
  out.reserve(hr_samples.size());
  for (const auto& s : hr_samples) {
    PairedSample<T> p;
    p.lr = downsample_2x(s.image);
    p.hr = s.image;
    p.label = s.label;
    p.source = s.source;
    out.push_back(std::move(p));
  }
  return out;
}

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;

  void validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw ConfigError("train_fraction must lie in (0, 1)");
  }
};

template <typename T>
struct DatasetSplit {
  std::vector<LabeledSample<T>> train;
  std::vector<LabeledSample<T>> test;
};

namespace detail {

inline int train_count(std::size_t n, double fraction) {
  const auto k = static_cast<long long>(std::llround(static_cast<double>(n) * fraction));
  return static_cast<int>(std::clamp(k, 1LL, static_cast<long long>(n) - 1));
}

}  // namespace detail

// Deterministic train/test split. Stratified mode splits each class present
// in the data independently so the class balance carries over; a class with
// fewer than two samples cannot appear on both sides and is an error.
template <typename T>
DatasetSplit<T> split_dataset(const std::vector<LabeledSample<T>>& samples,
                              const SplitSpec& spec) {
  spec.validate();
  if (samples.size() < 2) throw SplitError("need at least two samples to split");
  DatasetSplit<T> out;
  if (spec.stratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
    for (auto& [cls, idx] : by_class) {
      if (idx.size() < 2)
        throw SplitError("class " + class_names()[static_cast<std::size_t>(cls)] +
                         " has fewer than two samples; stratified split impossible");
      Rng rng(sub_seed(spec.seed, "split-class-" + std::to_string(cls)));
      rng.shuffle(idx);
      const int k = detail::train_count(idx.size(), spec.train_fraction);
      for (std::size_t j = 0; j < idx.size(); ++j)
        (static_cast<int>(j) < k ? out.train : out.test).push_back(samples[idx[j]]);
    }
  } else {
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(sub_seed(spec.seed, "split-global"));
    rng.shuffle(idx);
    const int k = detail::train_count(idx.size(), spec.train_fraction);
    for (std::size_t j = 0; j < idx.size(); ++j)
      (static_cast<int>(j) < k ? out.train : out.test).push_back(samples[idx[j]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Directory-tree ingestion and export.
//
// Layout: <root>/<ClassName>/*.png with the six canonical class names.
// ---------------------------------------------------------------------------

struct LoadResult {
  std::vector<LabeledSample<double>> samples;
  std::vector<std::string> warnings;
};

namespace detail {

// Resize shorter side to `target`, then center-crop to target x target.
inline Image<double> normalize_size(const Image<double>& img, int target) {
  if (img.height == target && img.width == target) return img;
  Image<double> scaled = img;
  if (std::min(img.height, img.width) != target) {
    const double f = static_cast<double>(target) / std::min(img.height, img.width);
    const int nh = std::max(target, static_cast<int>(std::lround(img.height * f)));
    const int nw = std::max(target, static_cast<int>(std::lround(img.width * f)));
    scaled = resize_bicubic(img, nh, nw);
  }
  const int y0 = (scaled.height - target) / 2;
  const int x0 = (scaled.width - target) / 2;
  Image<double> out(target, target, scaled.peak);
  for (int y = 0; y < target; ++y)
    for (int x = 0; x < target; ++x)
      out.v[static_cast<std::size_t>(y) * target + x] =
          scaled.v[static_cast<std::size_t>(y0 + y) * scaled.width + (x0 + x)];
  return out;
}

}  // namespace detail

inline LoadResult load_dataset(const std::filesystem::path& root, int expected_size = 64) {
  namespace fs = std::filesystem;
  if (expected_size < 16) throw ConfigError("expected_size must be at least 16");
  if (!fs::is_directory(root))
    throw IngestionError("dataset root is not a directory: " + root.string());

  std::vector<std::string> missing;
  for (const auto& name : class_names())
    if (!fs::is_directory(root / name)) missing.push_back(name);
  if (!missing.empty()) {
    std::string msg = "dataset root " + root.string() + " is missing class directories:";
    for (const auto& m : missing) msg += " " + m;
    throw IngestionError(msg);
  }

  LoadResult result;
  const auto& names = class_names();
  for (int cls = 0; cls < kNumClasses; ++cls) {
    const fs::path dir = root / names[static_cast<std::size_t>(cls)];
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
      if (ext == ".png")
        files.push_back(entry.path());
      else
        result.warnings.push_back("ignored non-PNG file " + entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
      result.warnings.push_back("class " + names[static_cast<std::size_t>(cls)] +
                                " has no images");
    for (const auto& file : files) {
      Image<double> img = read_png_gray(file);  // throws IngestionError on bad files
      LabeledSample<double> sample;
      sample.image = detail::normalize_size(img, expected_size);
      sample.label = cls;
      sample.lineage = "hr";
      sample.source = file.string();
      result.samples.push_back(std::move(sample));
    }
  }
  return result;
}

// Writes <dir>/<ClassName>/NNNN.png per sample plus a manifest.json recording
// counts and the generation parameters. Refuses to clobber a non-empty
// directory unless force is set.
template <typename T>
void export_dataset(const std::vector<LabeledSample<T>>& samples,
                    const std::filesystem::path& dir, const nlohmann::json& generator_info = {},
                    bool force = false) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw IngestionError("export target exists and is not a directory: " + dir.string());
  if (fs::is_directory(dir) && !fs::is_empty(dir) && !force)
    throw IngestionError("export target is not empty (pass force to overwrite): " + dir.string());
  fs::create_directories(dir);

  const auto& names = class_names();
  std::array<int, kNumClasses> counts{};
  for (const auto& name : names) fs::create_directories(dir / name);
  for (const auto& sample : samples) {
    if (sample.label < 0 || sample.label >= kNumClasses)
      throw DomainError("sample label out of range: " + std::to_string(sample.label));
    const auto cls = static_cast<std::size_t>(sample.label);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d.png", counts[cls]);
    write_png_gray(dir / names[cls] / buf, sample.image);
    ++counts[cls];
  }

  nlohmann::json manifest;
  manifest["format"] = "casr-dataset";
  manifest["version"] = 1;
  nlohmann::json jc;
  for (std::size_t c = 0; c < names.size(); ++c) jc[names[c]] = counts[c];
  manifest["counts"] = jc;
  if (!generator_info.is_null() && !generator_info.empty()) manifest["generator"] = generator_info;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IngestionError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

}  // namespace casr
