#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "graphkd/error.hpp"
#include "graphkd/geometry.hpp"
#include "graphkd/rng.hpp"
#include "graphkd/schema.hpp"
#include "graphkd/tensor.hpp"

// COCO-format ingestion/export and a seeded synthetic document-page
// generator. Pixels live in [0,1] as CHW tensors internally; COCO pixel
// coordinates appear only at the I/O boundary.
namespace graphkd {

struct AnnotatedImage {
  int id = 0;
  Tensor pixels;  // [C,H,W], values in [0,1]
  std::vector<std::pair<int, BoxGeometry>> annotations;  // (class_id, box)

  int channels() const { return pixels.dim(0); }
  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }
};

struct Dataset {
  ClassSchema schema;
  std::vector<AnnotatedImage> images;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
};

// ---------------------------------------------------------------------------
// Synthetic page generator
// ---------------------------------------------------------------------------

struct SynthLayoutConfig {
  std::uint64_t seed = 0;
  int pages = 1;
  ClassSchema schema = ClassSchema::document_default();
  std::vector<double> class_weights = {0.5, 0.25, 0.25};
  int page_height = 64;
  int page_width = 64;
  int min_regions = 2;
  int max_regions = 4;

  void validate() const {
    schema.validate();
    require(pages >= 0, errkind::kConfigError, "pages must be >= 0");
    require(class_weights.size() == schema.classes.size(),
            errkind::kConfigError, "one frequency weight per class");
    double total = 0.0;
    for (double w : class_weights) {
      require(w >= 0.0, errkind::kConfigError, "negative class weight");
      total += w;
    }
    require(total > 0.0, errkind::kConfigError, "all class weights zero");
    require(min_regions >= 1 && max_regions >= min_regions,
            errkind::kConfigError, "bad region count range");
  }
};

namespace detail {

struct RegionSize {
  int min_w, max_w, min_h, max_h;
};

// Size families per class kind; tuned so every texture carries its typing
// signal at page scale.
inline RegionSize region_size_for(bool textual, const std::string& name) {
  if (textual) return {24, 40, 12, 20};
  if (name == "table") return {20, 30, 18, 28};
  return {16, 26, 14, 24};  // figure-like default
}

struct PixelRect {
  int x, y, w, h;
};

inline bool overlaps(const PixelRect& a, const PixelRect& b, int margin) {
  return !(a.x + a.w + margin <= b.x || b.x + b.w + margin <= a.x ||
           a.y + a.h + margin <= b.y || b.y + b.h + margin <= a.y);
}

// Text: horizontal ink stripes under paper whose brightness drifts in coarse
// row/column bands. Every channel gets the identical pattern, so the channel
// correlation of any pooled window inside the box is exactly 1.
inline void render_text(Tensor& img, const PixelRect& r, Rng& rng) {
  constexpr int kPeriod = 8;
  std::vector<double> row_jitter(static_cast<std::size_t>(r.h / kPeriod + 2));
  std::vector<double> col_jitter(static_cast<std::size_t>(r.w / kPeriod + 2));
  for (double& v : row_jitter) v = rng.uniform(-0.05, 0.05);
  for (double& v : col_jitter) v = rng.uniform(-0.05, 0.05);
  std::vector<double> ink(row_jitter.size());
  for (double& v : ink) v = rng.uniform(0.10, 0.45);
  for (int y = 0; y < r.h; ++y) {
    int band = y / kPeriod;
    bool ink_row = (y % kPeriod) < kPeriod / 2;
    for (int x = 0; x < r.w; ++x) {
      double paper = 0.90 + row_jitter[static_cast<std::size_t>(band)] +
                     col_jitter[static_cast<std::size_t>(x / kPeriod)];
      double v = ink_row ? ink[static_cast<std::size_t>(band)] : paper;
      v = std::clamp(v, 0.0, 1.0);
      for (int c = 0; c < img.dim(0); ++c)
        img(c, r.y + y, r.x + x) = v;
    }
  }
}

// Table: grid lines over bright cells, then independent per-channel noise so
// channel correlation stays low.
inline void render_table(Tensor& img, const PixelRect& r, Rng& rng) {
  int cell = rng.uniform_int(6, 9);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      bool line = (y % cell == 0) || (x % cell == 0) || y == r.h - 1 ||
                  x == r.w - 1;
      double base = line ? 0.25 : 0.88;
      for (int c = 0; c < img.dim(0); ++c)
        img(c, r.y + y, r.x + x) =
            std::clamp(base + rng.uniform(-0.12, 0.12), 0.0, 1.0);
    }
  }
}

// Figure: smooth low-frequency blobs drawn independently per channel.
inline void render_figure(Tensor& img, const PixelRect& r, Rng& rng) {
  for (int c = 0; c < img.dim(0); ++c) {
    double cx1 = rng.uniform(0.2, 0.8) * r.w, cy1 = rng.uniform(0.2, 0.8) * r.h;
    double cx2 = rng.uniform(0.2, 0.8) * r.w, cy2 = rng.uniform(0.2, 0.8) * r.h;
    double s1 = rng.uniform(0.15, 0.5) * r.w, s2 = rng.uniform(0.15, 0.5) * r.w;
    double a1 = rng.uniform(0.2, 0.5), a2 = rng.uniform(0.2, 0.5);
    for (int y = 0; y < r.h; ++y) {
      for (int x = 0; x < r.w; ++x) {
        double d1 = ((x - cx1) * (x - cx1) + (y - cy1) * (y - cy1)) / (s1 * s1);
        double d2 = ((x - cx2) * (x - cx2) + (y - cy2) * (y - cy2)) / (s2 * s2);
        double v = 0.65 - a1 * std::exp(-d1) - a2 * std::exp(-d2);
        img(c, r.y + y, r.x + x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

}  // namespace detail

// Deterministic page synthesis: identical seed gives a bit-identical dataset.
// Pages are composed of non-overlapping class-textured rectangles with exact
// ground-truth boxes; pixels are quantized to the 8-bit grid so raster export
// round-trips exactly.
inline Dataset generate_synthetic_pages(const SynthLayoutConfig& config) {
  config.validate();
  int H = config.page_height, W = config.page_width;
  require(H >= 32 && W >= 32, errkind::kPageTooSmall,
          "page too small for any region");
  Dataset ds;
  ds.schema = config.schema;
  Rng base = Rng::with_base(config.seed);
  for (int page = 0; page < config.pages; ++page) {
    Rng rng = base.child(static_cast<std::uint64_t>(page));
    AnnotatedImage img;
    img.id = page + 1;
    img.pixels = Tensor::chw(3, H, W);
    // Decorrelated paper background.
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          img.pixels(c, y, x) = 0.93 + rng.uniform(-0.03, 0.03);

    // Classes are drawn up front so placement rejection cannot skew the
    // configured frequencies; failed placements retry with shrinking sizes.
    int want = rng.uniform_int(config.min_regions, config.max_regions);
    std::vector<int> page_classes;
    for (int k = 0; k < want; ++k)
      page_classes.push_back(rng.weighted_index(config.class_weights));
    std::vector<detail::PixelRect> placed;
    for (int cls : page_classes) {
      bool textual = config.schema.textual[static_cast<std::size_t>(cls)];
      const std::string& name =
          config.schema.classes[static_cast<std::size_t>(cls)];
      auto sz = detail::region_size_for(textual, name);
      for (int attempt = 0; attempt < 60; ++attempt) {
        int max_w = attempt < 30 ? std::min(sz.max_w, W - 4) : sz.min_w;
        int max_h = attempt < 30 ? std::min(sz.max_h, H - 4) : sz.min_h;
        int w = rng.uniform_int(sz.min_w, std::max(sz.min_w, max_w));
        int h = rng.uniform_int(sz.min_h, std::max(sz.min_h, max_h));
        detail::PixelRect r{rng.uniform_int(1, W - w - 2),
                            rng.uniform_int(1, H - h - 2), w, h};
        bool ok = true;
        for (const auto& p : placed)
          if (detail::overlaps(r, p, 2)) ok = false;
        if (!ok) continue;
        placed.push_back(r);
        if (textual)
          detail::render_text(img.pixels, r, rng);
        else if (name == "table")
          detail::render_table(img.pixels, r, rng);
        else
          detail::render_figure(img.pixels, r, rng);
        img.annotations.push_back(
            {cls, BoxGeometry{static_cast<double>(r.x) / W,
                              static_cast<double>(r.y) / H,
                              static_cast<double>(r.x + r.w) / W,
                              static_cast<double>(r.y + r.h) / H}});
        break;
      }
    }
    // Quantize to the 8-bit grid (lossless raster round trip).
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      img.pixels[i] = std::round(img.pixels[i] * 255.0) / 255.0;
    ds.images.push_back(std::move(img));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Raster I/O (binary PPM, 8-bit)
// ---------------------------------------------------------------------------

inline void save_ppm(const Tensor& pixels, const std::string& path) {
  require(pixels.rank() == 3 && pixels.dim(0) == 3, errkind::kIoError,
          "save_ppm expects a 3-channel image");
  int H = pixels.dim(1), W = pixels.dim(2);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), errkind::kIoError, "cannot write " + path);
  out << "P6\n" << W << " " << H << "\n255\n";
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        int v = static_cast<int>(std::lround(pixels(c, y, x) * 255.0));
        out.put(static_cast<char>(std::clamp(v, 0, 255)));
      }
  require(out.good(), errkind::kIoError, "short write to " + path);
}

inline Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errkind::kMissingFile, "cannot open " + path);
  std::string magic;
  int W = 0, H = 0, maxval = 0;
  in >> magic >> W >> H >> maxval;
  require(magic == "P6" && maxval == 255 && W > 0 && H > 0, errkind::kIoError,
          "unsupported PPM: " + path);
  in.get();  // single whitespace after header
  Tensor px = Tensor::chw(3, H, W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        int v = in.get();
        require(v != EOF, errkind::kIoError, "truncated PPM: " + path);
        px(c, y, x) = static_cast<double>(v) / 255.0;
      }
  return px;
}

// ---------------------------------------------------------------------------
// COCO detection JSON
// ---------------------------------------------------------------------------

// Writes images/annotations/categories plus rasters; returns the annotation
// file path.
inline std::string save_coco(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  nlohmann::json root;
  root["images"] = nlohmann::json::array();
  root["annotations"] = nlohmann::json::array();
  root["categories"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.schema.classes.size(); ++i)
    root["categories"].push_back(
        {{"id", static_cast<int>(i) + 1}, {"name", ds.schema.classes[i]}});
  int ann_id = 1;
  for (const AnnotatedImage& img : ds.images) {
    char name[32];
    std::snprintf(name, sizeof(name), "page_%06d.ppm", img.id);
    save_ppm(img.pixels, (fs::path(dir) / "images" / name).string());
    root["images"].push_back({{"id", img.id},
                              {"file_name", std::string("images/") + name},
                              {"width", img.width()},
                              {"height", img.height()}});
    for (const auto& [cls, box] : img.annotations) {
      double W = img.width(), H = img.height();
      double x = box.x1 * W, y = box.y1 * H;
      double w = (box.x2 - box.x1) * W, h = (box.y2 - box.y1) * H;
      root["annotations"].push_back({{"id", ann_id++},
                                     {"image_id", img.id},
                                     {"category_id", cls + 1},
                                     {"bbox", {x, y, w, h}},
                                     {"area", w * h},
                                     {"iscrowd", 0}});
    }
  }
  std::string ann_path = (fs::path(dir) / "annotations.json").string();
  std::ofstream out(ann_path);
  require(out.good(), errkind::kIoError, "cannot write " + ann_path);
  out << root.dump(2) << "\n";
  return ann_path;
}

// Loads COCO detection JSON; iteration order is by ascending image id, boxes
// convert xywh pixels to normalized corners, and categories must map onto the
// schema by name.
inline Dataset load_coco(const std::string& annotation_path,
                         const std::string& image_root,
                         const ClassSchema& schema) {
  namespace fs = std::filesystem;
  schema.validate();
  require(fs::exists(annotation_path), errkind::kMissingFile,
          "no such annotation file: " + annotation_path);
  nlohmann::json root;
  {
    std::ifstream in(annotation_path);
    require(in.good(), errkind::kMissingFile,
            "cannot open " + annotation_path);
    try {
      in >> root;
    } catch (const nlohmann::json::exception& e) {
      fail(errkind::kMalformedJson, e.what());
    }
  }
  require(root.contains("images") && root.contains("annotations") &&
              root.contains("categories"),
          errkind::kMalformedJson,
          "COCO file needs images/annotations/categories");

  std::map<int, int> category_to_class;
  std::vector<std::string> unmapped;
  for (const auto& cat : root["categories"]) {
    std::string name = cat.at("name").get<std::string>();
    int idx = schema.index_of(name);
    if (idx < 0)
      unmapped.push_back(name);
    else
      category_to_class[cat.at("id").get<int>()] = idx;
  }
  require(unmapped.empty(), errkind::kUnmappedCategory,
          "categories not in schema: " + [&] {
            std::string s;
            for (const auto& n : unmapped) s += (s.empty() ? "" : ", ") + n;
            return s;
          }());

  Dataset ds;
  ds.schema = schema;
  std::map<int, AnnotatedImage> by_id;
  std::map<int, std::pair<double, double>> dims;
  for (const auto& jimg : root["images"]) {
    AnnotatedImage img;
    img.id = jimg.at("id").get<int>();
    std::string file = jimg.at("file_name").get<std::string>();
    img.pixels = load_ppm((fs::path(image_root) / file).string());
    double W = jimg.at("width").get<double>();
    double H = jimg.at("height").get<double>();
    require(img.width() == static_cast<int>(W) &&
                img.height() == static_cast<int>(H),
            errkind::kMalformedJson, "raster size disagrees with metadata");
    dims[img.id] = {W, H};
    by_id[img.id] = std::move(img);
  }
  for (const auto& ann : root["annotations"]) {
    int image_id = ann.at("image_id").get<int>();
    require(by_id.count(image_id) > 0, errkind::kMalformedJson,
            "annotation references unknown image");
    int cat = ann.at("category_id").get<int>();
    require(category_to_class.count(cat) > 0, errkind::kUnmappedCategory,
            "unknown category id " + std::to_string(cat));
    auto bbox = ann.at("bbox");
    double x = bbox.at(0).get<double>(), y = bbox.at(1).get<double>();
    double w = bbox.at(2).get<double>(), h = bbox.at(3).get<double>();
    auto [W, H] = dims[image_id];
    require(w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= W && y + h <= H,
            errkind::kOutOfBoundsBox,
            "bbox outside image bounds in image " + std::to_string(image_id));
    by_id[image_id].annotations.push_back(
        {category_to_class[cat],
         BoxGeometry{x / W, y / H, (x + w) / W, (y + h) / H}});
  }
  for (auto& [id, img] : by_id) ds.images.push_back(std::move(img));
  return ds;  // std::map iteration is already id-ordered
}

// Split manifest: which image ids belong to which split directory.
inline void save_manifest(const std::string& path,
                          const std::vector<std::pair<std::string, const Dataset*>>& splits) {
  nlohmann::json root;
  for (const auto& [name, ds] : splits) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& img : ds->images) ids.push_back(img.id);
    root["splits"][name] = {{"dir", name}, {"image_ids", ids}};
  }
  std::ofstream out(path);
  require(out.good(), errkind::kIoError, "cannot write " + path);
  out << root.dump(2) << "\n";
}

}  // namespace graphkd
