#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "deepproposal/errors.hpp"
#include "deepproposal/io.hpp"
#include "deepproposal/synth.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dp_io_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("fmap round trip is bitwise exact") {
  TempDir tmp;
  std::mt19937_64 rng(3);
  dp::FeatureMap fm = oracle::random_feature_map(rng, 5, 17, 23, 4.0);
  fm.layer_id = 3;
  fm.scale_id = 2;
  const fs::path p = tmp.path / "map.fmap";
  dp::write_fmap(fm, p);
  const dp::FeatureMap back = dp::read_fmap(p);
  CHECK(back.layer_id == 3);
  CHECK(back.scale_id == 2);
  CHECK(back.stride == 4.0);
  CHECK(back.channels == fm.channels);
  CHECK(back.height == fm.height);
  CHECK(back.width == fm.width);
  REQUIRE(back.data.size() == fm.data.size());
  CHECK(std::memcmp(back.data.data(), fm.data.data(), fm.data.size() * 4) == 0);

  // writing twice produces identical bytes
  const fs::path p2 = tmp.path / "map2.fmap";
  dp::write_fmap(fm, p2);
  CHECK(file_bytes(p) == file_bytes(p2));
}

TEST_CASE("fmap reader distinguishes its failure modes") {
  TempDir tmp;
  std::mt19937_64 rng(5);
  const dp::FeatureMap fm = oracle::random_feature_map(rng, 2, 4, 4);
  const fs::path good = tmp.path / "good.fmap";
  dp::write_fmap(fm, good);

  // truncated payload
  std::string bytes = file_bytes(good);
  std::ofstream(tmp.path / "trunc.fmap", std::ios::binary)
      << bytes.substr(0, bytes.size() - 7);
  CHECK_THROWS_WITH_AS(static_cast<void>(dp::read_fmap(tmp.path / "trunc.fmap")),
                       doctest::Contains("truncated"), dp::data_error);

  // bad magic
  std::string magic = bytes;
  magic[0] = 'X';
  std::ofstream(tmp.path / "magic.fmap", std::ios::binary) << magic;
  CHECK_THROWS_WITH_AS(static_cast<void>(dp::read_fmap(tmp.path / "magic.fmap")),
                       doctest::Contains("magic"), dp::data_error);

  // bad version
  std::string version = bytes;
  version[4] = 9;
  std::ofstream(tmp.path / "version.fmap", std::ios::binary) << version;
  CHECK_THROWS_WITH_AS(static_cast<void>(dp::read_fmap(tmp.path / "version.fmap")),
                       doctest::Contains("version"), dp::data_error);

  // dim overflow
  std::string huge = bytes;
  for (int i = 20; i < 32; ++i) huge[static_cast<std::size_t>(i)] = '\xff';
  std::ofstream(tmp.path / "huge.fmap", std::ios::binary) << huge;
  CHECK_THROWS_WITH_AS(static_cast<void>(dp::read_fmap(tmp.path / "huge.fmap")),
                       doctest::Contains("overflow"), dp::data_error);

  CHECK_THROWS_AS(static_cast<void>(dp::read_fmap(tmp.path / "missing.fmap")),
                  dp::data_error);
}

TEST_CASE("box jsonl round trip, score optional, bad lines rejected") {
  TempDir tmp;
  std::vector<dp::BoxRecord> records;
  records.push_back({"img_0", {1.5, 2.5, 10.0, 20.0}, 0.75});
  records.push_back({"img_0", {0.0, 0.0, 5.0, 5.0}, std::nullopt});
  records.push_back({"img_1", {3.0, 4.0, 8.0, 9.0}, 0.5});
  const fs::path p = tmp.path / "boxes.jsonl";
  dp::write_boxes_jsonl(records, p);
  const auto back = dp::read_boxes_jsonl(p);
  REQUIRE(back.size() == 3);
  CHECK(back[0].image_id == "img_0");
  CHECK(back[0].box.x0 == 1.5);
  CHECK(back[0].score == 0.75);
  CHECK_FALSE(back[1].score.has_value());

  std::ofstream bad(tmp.path / "bad.jsonl");
  bad << "{\"image_id\": \"x\", \"x0\": 0}\n";
  bad.close();
  CHECK_THROWS_AS(static_cast<void>(dp::read_boxes_jsonl(tmp.path / "bad.jsonl")),
                  dp::data_error);

  std::ofstream inverted(tmp.path / "inv.jsonl");
  inverted << R"({"image_id":"x","x0":5,"y0":0,"x1":2,"y1":3})" << "\n";
  inverted.close();
  CHECK_THROWS_AS(static_cast<void>(dp::read_boxes_jsonl(tmp.path / "inv.jsonl")),
                  dp::data_error);
}

TEST_CASE("catalog and model JSON round trips") {
  TempDir tmp;
  dp::WindowCatalog catalog;
  catalog.z_max = 20;
  catalog.k = 3;
  catalog.alphas = dp::default_selection_alphas();
  catalog.shapes = {{4, 4}, {2, 7}, {20, 1}};
  dp::write_catalog(catalog, tmp.path / "catalog.json");
  const auto cback = dp::read_catalog(tmp.path / "catalog.json");
  CHECK(cback.z_max == 20);
  CHECK(cback.k == 3);
  CHECK(cback.alphas == catalog.alphas);
  CHECK(cback.shapes == catalog.shapes);

  dp::LinearModel model;
  model.stage_id = 2;
  model.scale_id = 1;
  model.pyramid_levels = {0, 1};
  model.bias = -0.125;
  model.weights = {0.5, -1.25, 3.0};
  dp::write_model(model, tmp.path / "model.json");
  const auto mback = dp::read_model(tmp.path / "model.json");
  CHECK(mback.stage_id == 2);
  CHECK(mback.scale_id == 1);
  CHECK(mback.pyramid_levels == model.pyramid_levels);
  CHECK(mback.bias == model.bias);
  CHECK(mback.weights == model.weights);
}

TEST_CASE("model bundle round trip") {
  TempDir tmp;
  dp::ModelBundle bundle;
  bundle.scales = {227.0, 300.0};
  bundle.catalog.z_max = 5;
  bundle.catalog.k = 1;
  bundle.catalog.shapes = {{3, 3}};
  for (int stage = 1; stage <= 2; ++stage) {
    for (int scale = 0; scale < 2; ++scale) {
      dp::LinearModel m;
      m.stage_id = stage;
      m.scale_id = scale;
      m.pyramid_levels = stage == 1 ? std::vector<int>{0} : std::vector<int>{0, 1};
      m.weights = {1.0, 2.0};
      m.bias = 0.5 * stage + scale;
      bundle.models.push_back(m);
    }
  }
  dp::write_model_bundle(bundle, tmp.path / "bundle");
  const auto back = dp::read_model_bundle(tmp.path / "bundle");
  CHECK(back.scales == bundle.scales);
  CHECK(back.catalog.shapes == bundle.catalog.shapes);
  REQUIRE(back.models.size() == 4);
  CHECK(dp::find_model(back.models, 2, 1) != nullptr);
  CHECK(dp::find_model(back.models, 2, 1)->bias == 2.0);
}

TEST_CASE("synthetic generation is deterministic and respects its contract") {
  TempDir tmp;
  dp::SynthConfig cfg;
  cfg.seed = 0;
  cfg.images = 4;
  cfg.scales = {227.0, 300.0};
  cfg.split = "train";
  const auto manifest_a = dp::generate_synthetic(cfg, tmp.path / "a");
  const auto manifest_b = dp::generate_synthetic(cfg, tmp.path / "b");

  REQUIRE(manifest_a.images.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& img = manifest_a.images[i];
    CHECK(file_bytes(tmp.path / "a" / img.gt_path) ==
          file_bytes(tmp.path / "b" / img.gt_path));
    for (const auto& ref : img.fmaps)
      CHECK(file_bytes(tmp.path / "a" / ref.path) == file_bytes(tmp.path / "b" / ref.path));
    // layers 5, 3, 2 at both scales
    CHECK(img.fmaps.size() == 6);
    const auto gt = dp::read_gt_boxes(tmp.path / "a" / img.gt_path, img.image_id);
    CHECK(gt.size() >= static_cast<std::size_t>(cfg.min_objects));
    CHECK(gt.size() <= static_cast<std::size_t>(cfg.max_objects));
    for (const auto& b : gt) {
      CHECK(b.width() >= cfg.min_object_size - 1e-9);
      CHECK(b.width() <= cfg.max_object_size + 1e-9);
      CHECK(b.x0 >= 0.0);
      CHECK(b.x1 <= cfg.canvas_width);
    }
  }
  dp::validate_manifest(manifest_a);

  // different seed: different bytes
  dp::SynthConfig other = cfg;
  other.seed = 1;
  const auto manifest_c = dp::generate_synthetic(other, tmp.path / "c");
  bool any_diff = false;
  for (std::size_t i = 0; i < 4 && !any_diff; ++i) {
    const auto& img = manifest_a.images[i];
    if (file_bytes(tmp.path / "a" / img.gt_path) !=
        file_bytes(tmp.path / "c" / manifest_c.images[i].gt_path))
      any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("planted objects carry the layer signature over background noise") {
  TempDir tmp;
  dp::SynthConfig cfg;
  cfg.seed = 7;
  cfg.images = 1;
  cfg.min_objects = 1;
  cfg.max_objects = 1;
  cfg.noise_level = 0.0;
  cfg.background_level = 0.0;  // bare footprint: background must be exactly zero
  cfg.scales = {300.0};
  const auto manifest = dp::generate_synthetic(cfg, tmp.path / "d");
  const auto& img = manifest.images[0];
  const auto gt = dp::read_gt_boxes(tmp.path / "d" / img.gt_path, img.image_id);
  REQUIRE(gt.size() == 1);

  const auto* ref = manifest.find_fmap(img, 5, 0);
  REQUIRE(ref != nullptr);
  const dp::FeatureMap fm = dp::read_fmap(tmp.path / "d" / ref->path);
  const auto sig = dp::layer_signature(5, fm.channels, cfg.signature_strength);

  // a cell fully inside the object carries the signature; far cells are zero
  const double factor = dp::scale_factor_for(300.0, cfg.canvas_width, cfg.canvas_height);
  const dp::BoundingBox scaled{gt[0].x0 * factor, gt[0].y0 * factor, gt[0].x1 * factor,
                               gt[0].y1 * factor};
  const int cx = static_cast<int>((scaled.x0 + scaled.x1) / 2.0 / fm.stride);
  const int cy = static_cast<int>((scaled.y0 + scaled.y1) / 2.0 / fm.stride);
  for (int c = 0; c < fm.channels; ++c)
    CHECK(fm.at(c, cy, cx) == doctest::Approx(sig[static_cast<std::size_t>(c)]));

  bool found_zero = false;
  for (int y = 0; y < fm.height && !found_zero; ++y) {
    for (int x = 0; x < fm.width && !found_zero; ++x) {
      const dp::BoundingBox cell{x * fm.stride, y * fm.stride, (x + 1) * fm.stride,
                                 (y + 1) * fm.stride};
      if (dp::intersection_area(cell, scaled) == 0.0) {
        for (int c = 0; c < fm.channels; ++c) CHECK(fm.at(c, y, x) == 0.0f);
        found_zero = true;
      }
    }
  }
  CHECK(found_zero);
}

TEST_CASE("manifest validation catches missing files and stride inconsistencies") {
  TempDir tmp;
  dp::SynthConfig cfg;
  cfg.seed = 2;
  cfg.images = 1;
  cfg.scales = {300.0};
  const auto manifest = dp::generate_synthetic(cfg, tmp.path / "m");
  CHECK_NOTHROW(dp::validate_manifest(manifest));

  dp::DatasetManifest broken = manifest;
  broken.images[0].fmaps[0].path = "fmaps/nonexistent.fmap";
  CHECK_THROWS_AS(dp::validate_manifest(broken), dp::data_error);

  dp::DatasetManifest inconsistent = manifest;
  inconsistent.images[0].width = 10 * cfg.canvas_width;  // breaks dim arithmetic
  CHECK_THROWS_AS(dp::validate_manifest(inconsistent), dp::data_error);
}
