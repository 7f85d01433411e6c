#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "adenet/checkpoint.hpp"
#include "adenet/data.hpp"
#include "adenet/error.hpp"
#include "adenet/rng.hpp"
#include "adenet/synth.hpp"

using namespace adenet;
using namespace adenet::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("adenet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<int> labels_1_to_2(std::size_t n) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i % 3 == 0;
  return y;
}

}  // namespace

TEST_CASE("k-fold plan partitions and stratifies") {
  const auto y = labels_1_to_2(50);
  const auto plan = kfold(y, 5, 11);
  REQUIRE(plan.folds.size() == 5);
  std::vector<int> seen(50, 0);
  const std::size_t pos = std::count(y.begin(), y.end(), 1);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(plan.folds[k].size() == 10);
    std::size_t p = 0;
    for (std::size_t i : plan.folds[k]) {
      seen[i]++;
      p += y[i];
    }
    CHECK(std::abs(static_cast<double>(p) - static_cast<double>(pos) / 5.0) <= 1.0);
    const auto train = plan.fold_train(k);
    CHECK(train.size() == 40);
    CHECK(std::is_sorted(train.begin(), train.end()));
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(kfold(y, 5, 11).folds == plan.folds);
  CHECK(kfold(y, 5, 12).folds != plan.folds);
}

TEST_CASE("k larger than the smallest class is rejected") {
  const std::vector<int> y = {1, 1, 0, 0, 0, 0};
  CHECK_THROWS_AS(kfold(y, 3), ArgumentError);
  CHECK_NOTHROW(kfold(y, 2));
}

TEST_CASE("stratified holdout") {
  const auto y = labels_1_to_2(600);
  const auto plan = stratified_holdout(y, 0.8, 3);
  CHECK(plan.train.size() == 480);
  CHECK(plan.test.size() == 120);
  std::set<std::size_t> all(plan.train.begin(), plan.train.end());
  all.insert(plan.test.begin(), plan.test.end());
  CHECK(all.size() == 600);
  std::size_t p = 0;
  for (std::size_t i : plan.test) p += y[i];
  CHECK(p == 40);
  CHECK_THROWS_AS(stratified_holdout(y, 1.5), ArgumentError);
}

TEST_CASE("padding rounds up to eight and unpad recovers the crop") {
  Rng rng(1);
  std::vector<Image> crops = {Image(13, 9), Image(5, 21)};
  for (auto& c : crops)
    for (auto& p : c.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const std::vector<int> labels = {0, 1};
  const auto b = pad_batch(crops, labels);
  CHECK(b.pixels.shape() == Shape{2, 3, 24, 16});
  CHECK(unpad(b, 0) == crops[0]);
  CHECK(unpad(b, 1) == crops[1]);
  CHECK(b.pixels.at(0, 0, 20, 15) == 0.0f);
  CHECK(b.pixels.at(1, 2, 0, 0) == doctest::Approx(crops[1].pixels[2] / 255.0f));
}

TEST_CASE("manifest validation names the offending line") {
  const auto dir = scratch("manifest");
  save_png(Image(10, 8, 50), dir / "a.png");
  auto write = [&](const std::string& body) {
    std::ofstream(dir / "m.csv") << "image_path,x,y,w,h,label\n" << body;
    return dir / "m.csv";
  };
  const auto ok = load_manifest(write("a.png,1,1,5,5,1\na.png,0,0,10,8,0\n"));
  CHECK(ok.size() == 2);
  CHECK(ok.damaged() == 1);
  CHECK(crop_insulators(ok)[0].image.width == 5);

  auto message = [&](const std::string& body) {
    try {
      load_manifest(write(body));
    } catch (const DataError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("a.png,1,1,5,5,1\na.png,6,0,5,5,0\n").find("line 3") != std::string::npos);
  CHECK(message("missing.png,0,0,2,2,0\n").find("line 2") != std::string::npos);
  CHECK(message("a.png,0,0,2,2,7\n").find("line 2") != std::string::npos);
  CHECK(message("a.png,0,0,0,2,0\n").find("line 2") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("synthetic set: counts, determinism and defect boxes") {
  const auto a = scratch("synth_a"), b = scratch("synth_b");
  SynthConfig cfg;
  cfg.n_images = 30;
  const auto ra = synth_dataset(cfg, 5, a);
  synth_dataset(cfg, 5, b);
  CHECK(ra.damaged == 10);
  CHECK(ra.undamaged == 20);
  CHECK(slurp(a / kManifestName) == slurp(b / kManifestName));
  CHECK(slurp(a / kSidecarName) == slurp(b / kSidecarName));
  for (const auto& e : fs::directory_iterator(a / "images"))
    CHECK(slurp(e.path()) == slurp(b / "images" / e.path().filename()));

  const auto m = load_manifest(ra.manifest);
  const auto defects = load_defect_sidecar(ra.sidecar);
  CHECK(defects.size() == m.damaged());
  for (const auto& d : defects) {
    CHECK(m.records[d.record_index].label == kDamaged);
    CHECK(m.records[d.record_index].bbox.contains(d.bbox));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("six hundred records at the default ratio") {
  const auto dir = scratch("synth_600");
  SynthConfig cfg;
  cfg.image_size = 48;
  const auto r = synth_dataset(cfg, 7, dir);
  CHECK(r.damaged == 200);
  CHECK(r.undamaged == 400);
  CHECK(crop_insulators(load_manifest(r.manifest)).size() == 600);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip and corruption kinds") {
  const auto net = model::build_adenet(3, true, 9);
  const auto bytes = model::encode_checkpoint(net);
  CHECK(model::decode_checkpoint(bytes) == net);

  auto kind_of = [](std::vector<std::uint8_t> b) {
    try {
      model::decode_checkpoint(b);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    FAIL("no error");
    return CheckpointError::Kind::kIo;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == CheckpointError::Kind::kBadMagic);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK(kind_of(flipped) == CheckpointError::Kind::kChecksumMismatch);
  CHECK(kind_of({bytes.begin(), bytes.begin() + 40}) == CheckpointError::Kind::kTruncated);
  auto future = bytes;
  future[8] = 2;
  CHECK(kind_of(future) == CheckpointError::Kind::kUnsupportedVersion);

  const auto dir = scratch("ckpt");
  model::save_checkpoint(net, dir / "m.ckpt");
  CHECK(model::load_checkpoint(dir / "m.ckpt") == net);
  try {
    model::load_checkpoint(dir / "absent.ckpt");
    FAIL("no error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::kIo);
  }
  fs::remove_all(dir);
}
