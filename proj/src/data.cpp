#include "rsovseg/data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "rsovseg/errors.hpp"

namespace rsovseg {

using nlohmann::json;

namespace {

std::vector<ClassEntry> make_split(const std::vector<std::string>& seen,
                                   const std::vector<std::string>& unseen) {
  std::vector<ClassEntry> out;
  for (const auto& n : seen) out.push_back({n, true});
  for (const auto& n : unseen) out.push_back({n, false});
  return out;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": field \"" + key + "\" " +
                      (j.contains(key) ? "has the wrong type" : "is missing"));
  }
}

}  // namespace

std::vector<ClassEntry> preset_classes(const std::string& preset) {
  if (preset == "isaid") {
    return make_split({"ship", "storage tank", "baseball diamond", "basketball court",
                       "ground track field", "large vehicle", "swimming pool", "roundabout",
                       "plane"},
                      {"tennis court", "bridge", "small vehicle", "helicopter",
                       "soccer ball field", "harbor"});
  }
  if (preset == "dlrsd") {
    return make_split({"chaparral", "court", "dock", "field", "grass", "mobile home", "sand",
                       "ship", "tanks", "water"},
                      {"airplane", "bare soil", "buildings", "cars", "pavement", "sea", "trees"});
  }
  if (preset == "oem") {
    return make_split({"bareland", "rangeland", "road", "building"},
                      {"developed space", "tree", "water", "agriculture land"});
  }
  throw ConfigError("unknown dataset preset \"" + preset + "\" (known: isaid, dlrsd, oem)");
}

int default_max_iters(const DatasetManifest& manifest) {
  std::string key = manifest.preset.empty() ? manifest.name : manifest.preset;
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
  if (key == "dlrsd") return 5000;
  if (key == "oem" || key == "openearthmap") return 15000;
  return 10000;
}

void DatasetManifest::validate() const {
  if (classes.empty()) throw ConfigError("manifest \"" + name + "\": no classes");
  if (ignore_index < 0 || ignore_index > 255) throw ConfigError("ignore_index must be in [0,255]");
  if (static_cast<int>(classes.size()) > std::min(ignore_index, 255)) {
    throw ConfigError("manifest: class indices collide with ignore_index");
  }
  if (tile_px < 1) throw ConfigError("tile_px must be >= 1");
  for (double s : normalization.std) {
    if (!(s > 0.0)) throw ConfigError("normalization std must be > 0");
  }
  registry().validate();
}

ClassRegistry DatasetManifest::registry() const {
  ClassRegistry r;
  for (const auto& c : classes) {
    r.names.push_back(c.name);
    r.seen.push_back(c.seen);
  }
  r.templates = templates;
  return r;
}

DatasetManifest parse_manifest(const std::string& json_text, const std::filesystem::path& root) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("manifest must be a JSON object");
  reject_unknown_keys(j, {"name", "preset", "classes", "templates", "ignore_index", "tile_px",
                          "normalization", "samples"},
                      "manifest");
  DatasetManifest m;
  m.root = root;
  m.name = get_field<std::string>(j, "name", "manifest");
  if (j.contains("preset")) m.preset = get_field<std::string>(j, "preset", "manifest");
  if (j.contains("classes")) {
    for (const auto& c : j.at("classes")) {
      reject_unknown_keys(c, {"name", "seen"}, "manifest class");
      m.classes.push_back({get_field<std::string>(c, "name", "manifest class"),
                           c.contains("seen") ? get_field<bool>(c, "seen", "manifest class")
                                              : true});
    }
  } else if (!m.preset.empty()) {
    m.classes = preset_classes(m.preset);
  }
  if (j.contains("templates")) {
    m.templates = get_field<std::vector<std::string>>(j, "templates", "manifest");
  }
  if (j.contains("ignore_index")) m.ignore_index = get_field<int>(j, "ignore_index", "manifest");
  if (j.contains("tile_px")) m.tile_px = get_field<int>(j, "tile_px", "manifest");
  if (j.contains("normalization")) {
    const json& n = j.at("normalization");
    reject_unknown_keys(n, {"mean", "std"}, "manifest normalization");
    if (n.contains("mean")) {
      m.normalization.mean = get_field<std::array<double, 3>>(n, "mean", "normalization");
    }
    if (n.contains("std")) {
      m.normalization.std = get_field<std::array<double, 3>>(n, "std", "normalization");
    }
  }
  if (j.contains("samples")) {
    for (const auto& s : j.at("samples")) {
      reject_unknown_keys(s, {"image", "mask", "split"}, "manifest sample");
      SampleRecord r;
      r.image = get_field<std::string>(s, "image", "manifest sample");
      r.mask = get_field<std::string>(s, "mask", "manifest sample");
      if (s.contains("split")) r.split = get_field<std::string>(s, "split", "manifest sample");
      m.samples.push_back(r);
    }
  }
  m.validate();
  return m;
}

std::string emit_manifest(const DatasetManifest& m) {
  json j;
  j["name"] = m.name;
  if (!m.preset.empty()) j["preset"] = m.preset;
  j["classes"] = json::array();
  for (const auto& c : m.classes) j["classes"].push_back({{"name", c.name}, {"seen", c.seen}});
  j["templates"] = m.templates;
  j["ignore_index"] = m.ignore_index;
  j["tile_px"] = m.tile_px;
  j["normalization"] = {{"mean", m.normalization.mean}, {"std", m.normalization.std}};
  j["samples"] = json::array();
  for (const auto& s : m.samples) {
    j["samples"].push_back({{"image", s.image}, {"mask", s.mask}, {"split", s.split}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_file_atomic(path, emit_manifest(manifest));
}

Tensor normalize_image(const Raster& rgb, const Normalization& norm) {
  if (rgb.channels != 3) throw DataError("expected an RGB raster");
  std::vector<double> v(rgb.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    v[i] = (rgb.pixels[i] / 255.0 - norm.mean[c]) / norm.std[c];
  }
  return Tensor::from({rgb.height, rgb.width, 3}, std::move(v));
}

void mask_unseen(GroundTruthMask& mask, const ClassRegistry& registry, std::uint8_t ignore_index) {
  for (auto& v : mask.labels) {
    if (v != ignore_index && v < registry.size() && !registry.seen[v]) v = ignore_index;
  }
}

ClassRegistry training_registry(const ClassRegistry& full) {
  ClassRegistry r;
  r.templates = full.templates;
  for (int c : full.seen_indices()) {
    r.names.push_back(full.names[c]);
    r.seen.push_back(true);
  }
  return r;
}

GroundTruthMask to_training_labels(const GroundTruthMask& mask, const ClassRegistry& full,
                                   std::uint8_t ignore_index) {
  std::vector<std::uint8_t> lut(256, ignore_index);
  const auto seen = full.seen_indices();
  for (std::size_t i = 0; i < seen.size(); ++i) lut[seen[i]] = static_cast<std::uint8_t>(i);
  GroundTruthMask out = mask;
  for (auto& v : out.labels) v = lut[v];
  return out;
}

Sample load_sample(const DatasetManifest& manifest, std::size_t index, Phase phase) {
  if (index >= manifest.samples.size()) {
    throw DataError("sample index " + std::to_string(index) + " out of range (" +
                    std::to_string(manifest.samples.size()) + " samples)");
  }
  const SampleRecord& rec = manifest.samples[index];
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : manifest.root / path;
  };
  const Raster rgb = read_png(resolve(rec.image), 3);
  const Raster gray = read_png(resolve(rec.mask), 1);
  if (rgb.height != gray.height || rgb.width != gray.width) {
    throw DataError("sample " + std::to_string(index) + ": image " + std::to_string(rgb.width) +
                    "x" + std::to_string(rgb.height) + " and mask " +
                    std::to_string(gray.width) + "x" + std::to_string(gray.height) +
                    " differ in size");
  }
  Sample s;
  s.image = normalize_image(rgb, manifest.normalization);
  s.mask = GroundTruthMask(gray.height, gray.width);
  s.mask.labels = gray.pixels;
  const int nc = static_cast<int>(manifest.classes.size());
  for (std::size_t i = 0; i < s.mask.labels.size(); ++i) {
    const int v = s.mask.labels[i];
    if (v != manifest.ignore_index && v >= nc) {
      throw DataError("sample " + std::to_string(index) + " (" + rec.mask + "): invalid mask value " +
                      std::to_string(v) + " at pixel (" + std::to_string(i / gray.width) + "," +
                      std::to_string(i % gray.width) + ")");
    }
  }
  if (phase == Phase::kTrain) {
    mask_unseen(s.mask, manifest.registry(), static_cast<std::uint8_t>(manifest.ignore_index));
  }
  return s;
}

TilingResult tile(const Tensor& image, const GroundTruthMask& mask, int tile_px) {
  TilingResult result;
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("tile: image must be [H,W,3], got " + to_string(image.shape()));
  }
  const int h = image.dim(0), w = image.dim(1);
  if (mask.height != h || mask.width != w) throw ShapeError("tile: image and mask differ in size");
  if (tile_px < 1) throw InvalidArgument("tile: tile_px must be >= 1");
  if (h < tile_px || w < tile_px) {
    result.rejected = "image " + std::to_string(w) + "x" + std::to_string(h) +
                      " is smaller than the " + std::to_string(tile_px) + " px tile";
    return result;
  }
  const auto src = image.data();
  for (int ti = 0; ti < h / tile_px; ++ti) {
    for (int tj = 0; tj < w / tile_px; ++tj) {
      Tile t;
      t.row = ti;
      t.col = tj;
      std::vector<double> v(static_cast<std::size_t>(tile_px) * tile_px * 3);
      t.mask = GroundTruthMask(tile_px, tile_px);
      for (int r = 0; r < tile_px; ++r) {
        const int sr = ti * tile_px + r;
        for (int c = 0; c < tile_px; ++c) {
          const int sc = tj * tile_px + c;
          for (int k = 0; k < 3; ++k) {
            v[(static_cast<std::size_t>(r) * tile_px + c) * 3 + k] =
                src[(static_cast<std::size_t>(sr) * w + sc) * 3 + k];
          }
          t.mask.at(r, c) = mask.at(sr, sc);
        }
      }
      t.image = Tensor::from({tile_px, tile_px, 3}, std::move(v));
      result.tiles.push_back(std::move(t));
    }
  }
  return result;
}

std::vector<TrainSample> load_split(const DatasetManifest& manifest, const std::string& split,
                                    Phase phase) {
  const ClassRegistry full = manifest.registry();
  const auto ignore = static_cast<std::uint8_t>(manifest.ignore_index);
  std::vector<TrainSample> out;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    if (manifest.samples[i].split != split) continue;
    Sample s = load_sample(manifest, i, phase);
    TilingResult tiles = tile(s.image, s.mask, manifest.tile_px);
    if (!tiles.ok()) {
      throw DataError("sample " + std::to_string(i) + " (" + manifest.samples[i].image +
                      "): " + tiles.rejected);
    }
    for (auto& t : tiles.tiles) {
      GroundTruthMask mask =
          phase == Phase::kTrain ? to_training_labels(t.mask, full, ignore) : std::move(t.mask);
      out.push_back({std::move(t.image), std::move(mask)});
    }
  }
  if (out.empty()) {
    throw DataError("manifest \"" + manifest.name + "\" has no samples in split \"" + split + "\"");
  }
  return out;
}

const std::vector<std::string>& synthetic_class_pool() {
  static const std::vector<std::string> pool = {
      "bare land",   "building",     "road",          "water",        "tree",
      "ship",        "plane",        "storage tank",  "roundabout",   "harbor",
      "bridge",      "vehicle",      "tennis court",  "swimming pool", "field",
      "dock",        "sand",         "grass",         "chaparral",    "sea",
      "pavement",    "mobile home",  "helicopter",    "rangeland",    "agriculture land",
      "developed space"};
  return pool;
}

namespace {

// Foreground colours, chosen far apart and away from the background tone.
constexpr std::array<std::array<int, 3>, 25> kPalette = {{
    {230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
    {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
    {0, 128, 128},  {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
    {170, 255, 195}, {128, 128, 0}, {255, 215, 180}, {0, 0, 128},   {255, 255, 255},
    {0, 0, 0},      {255, 0, 0},    {0, 255, 0},    {0, 0, 255},    {255, 128, 255},
}};

std::uint8_t clamp_px(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  const auto& pool = synthetic_class_pool();
  if (spec.n_classes < 2 || spec.n_classes > static_cast<int>(pool.size())) {
    throw InvalidArgument("synthetic: n_classes must be in [2, " + std::to_string(pool.size()) + "]");
  }
  if (spec.n_unseen < 1 || spec.n_unseen > spec.n_classes - 1) {
    throw InvalidArgument("synthetic: need at least one seen and one unseen class");
  }
  if (spec.n_images < 1 || spec.grid < 1 || spec.image_px % spec.grid != 0) {
    throw InvalidArgument("synthetic: image_px must be a positive multiple of grid");
  }
  const int fg = spec.n_classes - 1;
  const int shapes =
      std::max(std::max(spec.shapes_per_image, 1), (fg + spec.n_images - 1) / spec.n_images);
  const int slots_per_side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(shapes))));
  const int slot = spec.image_px / slots_per_side / spec.grid * spec.grid;
  if (slot < 2 * spec.grid) {
    throw InvalidArgument("synthetic: image too small for " + std::to_string(shapes) +
                          " shapes per image");
  }

  std::mt19937_64 rng(spec.seed);
  auto uniform_int = [&](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  auto uniform01 = [&]() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  // Shape classes: concatenated shuffled permutations, so every class occurs.
  std::vector<int> assignment;
  while (static_cast<int>(assignment.size()) < spec.n_images * shapes) {
    std::vector<int> perm(fg);
    for (int c = 0; c < fg; ++c) perm[c] = c + 1;
    for (int i = fg - 1; i > 0; --i) std::swap(perm[i], perm[uniform_int(0, i)]);
    assignment.insert(assignment.end(), perm.begin(), perm.end());
  }

  DatasetManifest m;
  m.name = spec.name;
  m.tile_px = spec.image_px;
  for (int c = 0; c < spec.n_classes; ++c) {
    m.classes.push_back({pool[c], c < spec.n_classes - spec.n_unseen});
  }
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");

  const int px = spec.image_px;
  const double jitter = spec.noise * 255.0;
  std::size_t next = 0;
  for (int n = 0; n < spec.n_images; ++n) {
    Raster img{px, px, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(px) * px * 3)};
    Raster mask{px, px, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(px) * px, 0)};
    std::vector<int> colour_of(static_cast<std::size_t>(px) * px, -1);

    std::vector<int> slot_ids(slots_per_side * slots_per_side);
    for (std::size_t i = 0; i < slot_ids.size(); ++i) slot_ids[i] = static_cast<int>(i);
    for (int i = static_cast<int>(slot_ids.size()) - 1; i > 0; --i) {
      std::swap(slot_ids[i], slot_ids[uniform_int(0, i)]);
    }
    for (int k = 0; k < shapes; ++k) {
      const int cls = assignment[next++];
      const int sy = slot_ids[k] / slots_per_side * slot, sx = slot_ids[k] % slots_per_side * slot;
      const int cells = slot / spec.grid;
      const int hh = uniform_int(1, cells - 1), ww = uniform_int(1, cells - 1);
      const int oy = uniform_int(0, cells - hh), ox = uniform_int(0, cells - ww);
      for (int r = 0; r < hh * spec.grid; ++r) {
        for (int c = 0; c < ww * spec.grid; ++c) {
          const int y = sy + oy * spec.grid + r, x = sx + ox * spec.grid + c;
          mask.pixels[static_cast<std::size_t>(y) * px + x] = static_cast<std::uint8_t>(cls);
          colour_of[static_cast<std::size_t>(y) * px + x] = cls - 1;
        }
      }
    }
    const double phase_a = uniform01() * 2.0 * std::numbers::pi;
    const double phase_b = uniform01() * 2.0 * std::numbers::pi;
    for (int y = 0; y < px; ++y) {
      for (int x = 0; x < px; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * px + x;
        double rgb[3];
        if (colour_of[p] < 0) {
          const double t = 18.0 * std::sin(0.7 * x + phase_a) * std::cos(0.5 * y + phase_b);
          rgb[0] = 96 + t;
          rgb[1] = 112 + t;
          rgb[2] = 84 + 0.5 * t;
        } else {
          const auto& col = kPalette[colour_of[p] % kPalette.size()];
          for (int k = 0; k < 3; ++k) rgb[k] = col[k];
        }
        for (int k = 0; k < 3; ++k) {
          img.pixels[p * 3 + k] = clamp_px(rgb[k] + jitter * (2.0 * uniform01() - 1.0));
        }
      }
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "%04d.png", n);
    write_png(dir / "images" / stem, img);
    write_png(dir / "masks" / stem, mask);
    m.samples.push_back({std::string("images/") + stem, std::string("masks/") + stem, "train"});
  }
  m.root = dir;
  save_manifest(m, dir / "manifest.json");
  return m;
}

}  // namespace rsovseg
