#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "adenet/cli.hpp"
#include "adenet/data.hpp"
#include "adenet/image.hpp"
#include "adenet/synth.hpp"

using namespace adenet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("adenet_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("params prints the parameter counts") {
  const auto r = run({"params", "--arch", "adenet"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out == "trainable=102082 non_trainable=448\n");
  CHECK(run({"params", "--arch", "adenet-nobn"}).out == "trainable=101634 non_trainable=0\n");
}

TEST_CASE("usage errors exit with 1") {
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"params", "--bogus"}).code == cli::kExitUsage);
  CHECK(run({"params", "--arch", "vgg19"}).code == cli::kExitUsage);
  const auto r = run({"frobnicate"});
  CHECK(r.out.empty());
  CHECK(!r.err.empty());
}

TEST_CASE("data errors exit with 2") {
  const auto dir = scratch("data_err");
  CHECK(run({"features", "--data", (dir / "none.csv").string(), "--out", (dir / "f.csv").string()}).code == cli::kExitData);
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  save_png(Image(16, 16, 10), dir / "a.png");
  std::ofstream(dir / "m.csv") << "image_path,x,y,w,h,label\na.png,0,0,16,16,1\n";
  CHECK(run({"eval", "--data", (dir / "m.csv").string(), "--checkpoint", (dir / "bad.ckpt").string()}).code == cli::kExitData);
  fs::remove_all(dir);
}

TEST_CASE("config file supplies defaults that flags override") {
  const auto dir = scratch("config");
  std::ofstream(dir / "c.conf") << "# defaults\narch = adenet-nobn\n";
  CHECK(run({"--config", (dir / "c.conf").string(), "params"}).out == "trainable=101634 non_trainable=0\n");
  CHECK(run({"--config", (dir / "c.conf").string(), "params", "--arch", "adenet"}).out == "trainable=102082 non_trainable=448\n");
  fs::remove_all(dir);
}

TEST_CASE("synth, train, eval and gradcam end to end") {
  const auto dir = scratch("e2e");
  const auto data = (dir / "data").string();
  REQUIRE(run({"synth", "--n", "24", "--image-size", "48", "--seed", "3", "--out", data}).code == 0);
  CHECK(data::load_manifest(dir / "data" / data::kManifestName).damaged() == 8);

  const auto model_dir = (dir / "m").string();
  auto r = run({"--deterministic", "train", "--data", data, "--epochs", "1", "--out", model_dir});
  REQUIRE(r.code == 0);
  for (const char* f : {"model.ckpt", "history.json", "report.json", "roc.csv"}) CHECK(fs::exists(dir / "m" / f));

  r = run({"eval", "--data", data, "--checkpoint", model_dir + "/model.ckpt"});
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(r.out);
  CHECK(report.contains("accuracy"));

  r = run({"gradcam", "--data", data, "--checkpoint", model_dir + "/model.ckpt", "--index", "0", "--csv", "--out",
           (dir / "cam").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "cam" / "cam_00000.png"));
  CHECK(fs::exists(dir / "cam" / "gradcam.json"));

  r = run({"train", "--data", data, "--arch", "forest", "--trees", "5", "--out", (dir / "f").string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir / "f" / "forest.json"));
  fs::remove_all(dir);
}
