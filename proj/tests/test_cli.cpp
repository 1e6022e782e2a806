#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <thread>

#include "cli_harness.h"
#include "planted.h"
#include "tabsynth/table.h"
#include "tabsynth/workspace.h"

using namespace tabsynth;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kSmallConfig =
    R"({"batch_size": 100, "noise_dim": 8, "generator_width": 24, "discriminator_width": 24, "classifier_width": 16})";

fs::path prepared(const std::string& name, std::size_t rows = 600) {
  const auto dir = cli::scratch(name);
  save_csv(planted::make_table(rows, 31), dir / "data.csv");
  save_csv(planted::make_table(300, 32), dir / "test.csv");
  std::ofstream(dir / "small.json") << kSmallConfig;
  std::ofstream(dir / "overrides.json") << R"([{"column": "C", "kind": {"type": "mixed", "categorical_values": [0]}},
                                               {"column": "y", "target": true}])";
  return dir;
}

std::size_t csv_rows(const fs::path& p) { return load_csv(p).rows(); }

}  // namespace

TEST_CASE("schema command") {
  const auto dir = prepared("schema");
  auto r = cli::run(dir, "schema data.csv -o s.json");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "s.json"));
  CHECK(r.out.find("categorical") != std::string::npos);
  const auto inferred = schema_from_json(json::parse(read_file(dir / "s.json")));
  CHECK(inferred.target() == nullptr);

  r = cli::run(dir, "schema data.csv --overrides overrides.json -o s2.json");
  CHECK(r.code == 0);
  CHECK(r.out.find("mixed{0}") != std::string::npos);
  CHECK(r.out.find("(target)") != std::string::npos);
  const auto overridden = schema_from_json(json::parse(read_file(dir / "s2.json")));
  CHECK(std::holds_alternative<MixedKind>(overridden.column("C").kind));
  CHECK(overridden.target()->name == "y");

  r = cli::run(dir, "schema missing.csv");
  CHECK(r.code == 2);
  CHECK(r.out.find("missing.csv") != std::string::npos);

  CHECK(cli::run(dir, "schema data.csv --target nope").code == 2);
  CHECK(cli::run(dir, "schema").code == 2);
  CHECK(cli::run(dir, "--help").code == 0);
}

TEST_CASE("train, generate, evaluate") {
  const auto dir = prepared("pipeline");
  REQUIRE(cli::run(dir, "schema data.csv --overrides overrides.json -o s.json").code == 0);

  SUBCASE("bundle, history and reproducibility") {
    auto r = cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 3 -q --out m1");
    REQUIRE(r.code == 0);
    const json model = json::parse(read_file(dir / "m1" / "model.json"));
    CHECK(model["history"]["classification"].size() == 3);
    CHECK(model["config"]["epochs"] == 3);
    REQUIRE(cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 3 -q --out m2").code == 0);
    CHECK(read_file(dir / "m1" / "generator.bin") == read_file(dir / "m2" / "generator.bin"));

    r = cli::run(dir, "generate m1 --rows 250 --seed 4 -o a.csv");
    CHECK(r.code == 0);
    CHECK(csv_rows(dir / "a.csv") == 250);
    REQUIRE(cli::run(dir, "generate m2 --rows 250 --seed 4 -o b.csv").code == 0);
    CHECK(read_file(dir / "a.csv") == read_file(dir / "b.csv"));
    CHECK(cli::run(dir, "generate m1 --rows 0").code == 2);
    CHECK(cli::run(dir, "generate m1 --rows 5 --condition B=never").code == 2);
    CHECK(cli::run(dir, "generate nowhere --rows 5").code == 2);
  }
  SUBCASE("workspace layout") {
    REQUIRE(cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 1 -q --workspace ws").code == 0);
    const Workspace ws(dir / "ws");
    const json m = ws.manifest();
    REQUIRE(m["models"].size() == 1);
    const std::string id = m["models"].begin().key();
    CHECK(fs::exists(ws.model_dir(id) / "model.json"));
    CHECK(cli::run(dir, "generate " + id + " --rows 10 --workspace ws -o g.csv").code == 0);
    auto r = cli::run(dir, "evaluate data.csv g.csv --schema s.json --workspace ws --no-privacy");
    CHECK(r.code == 0);
    CHECK(ws.manifest()["reports"].size() == 1);
    CHECK(fs::exists(dir / "ws" / "reports" / (ws.manifest()["reports"].begin().key() + ".json")));
  }
  SUBCASE("ablation flags change the recorded graph") {
    REQUIRE(cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 1 -q --no-classifier --no-info-loss --out ab")
                .code == 0);
    const json h = json::parse(read_file(dir / "ab" / "model.json"))["history"];
    CHECK_FALSE(h.contains("classification"));
    CHECK_FALSE(h.contains("information"));
    CHECK(h.contains("condition"));
    REQUIRE(cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 1 -q --no-vgm --out nv").code == 0);
    const json nv = json::parse(read_file(dir / "nv" / "model.json"));
    CHECK(nv["codecs"]["vgm_enabled"] == false);
    CHECK(nv["config"]["ablation"]["vgm_on"] == false);
  }
  SUBCASE("divergence exits with 3") {
    std::ofstream(dir / "bad.json") << R"({"optimizer": {"learning_rate": 1e300}, "batch_size": 100, "noise_dim": 4,
                                          "generator_width": 8, "discriminator_width": 8, "classifier_width": 8})";
    const auto r = cli::run(dir, "train data.csv --schema s.json --config bad.json --epochs 2 -q --out bad");
    CHECK(r.code == 3);
    CHECK(r.out.find("training failed") != std::string::npos);
  }
  SUBCASE("a bundle being trained is locked") {
    fs::create_directories(dir / "locked");
    const FileLock held(dir / "locked" / ".lock", false);
    const auto r = cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 1 -q --out locked");
    CHECK(r.code == 2);
    CHECK(r.out.find("locked") != std::string::npos);
  }
  SUBCASE("bad training flags") {
    CHECK(cli::run(dir, "train data.csv --schema s.json --epochs 0").code == 2);
    CHECK(cli::run(dir, "train data.csv --schema nope.json").code == 2);
    CHECK(cli::run(dir, "train data.csv --schema s.json --epochs many").code == 2);
  }
}

// The reduced networks need ~300 epochs to honour conditions reliably; default widths
// get there within 100.
TEST_CASE("generate respects a fixed condition") {
  const auto dir = prepared("condition", 1000);
  REQUIRE(cli::run(dir, "schema data.csv --overrides overrides.json -o s.json").code == 0);
  REQUIRE(cli::run(dir, "train data.csv --schema s.json --config small.json --epochs 300 -q --out m").code == 0);
  REQUIRE(cli::run(dir, "generate m --rows 1000 --condition B=rare --seed 2 -o rare.csv").code == 0);
  const Table t = load_csv(dir / "rare.csv");
  const auto& b = t.column("B").cells();
  const auto hits = std::count_if(b.begin(), b.end(), [](const Cell& c) { return c && *c == "rare"; });
  CHECK(hits >= 950);
}

TEST_CASE("evaluate command") {
  const auto dir = prepared("evaluate");
  REQUIRE(cli::run(dir, "schema data.csv --overrides overrides.json -o s.json").code == 0);
  REQUIRE(cli::run(dir, "schema data.csv -o notarget.json").code == 0);

  auto r = cli::run(dir, "evaluate data.csv data.csv --schema s.json --test test.csv -o same.json");
  CHECK(r.code == 0);
  CHECK(r.out.find("Avg JSD 0.0000") != std::string::npos);
  const json rep = json::parse(read_file(dir / "same.json"));
  CHECK(rep["similarity"]["avg_jsd"] == 0.0);
  CHECK(rep["similarity"]["avg_wd"] == 0.0);
  for (const char* block : {"similarity", "privacy", "utility", "series"}) CHECK(rep.contains(block));
  CHECK(rep["utility"]["models"].size() == 2);

  r = cli::run(dir, "report same.json");
  CHECK(r.code == 0);
  CHECK(r.out.find("DCR") != std::string::npos);

  CHECK(cli::run(dir, "evaluate data.csv data.csv --schema notarget.json --test test.csv").code == 2);
  CHECK(cli::run(dir, "evaluate data.csv data.csv --schema notarget.json --utility").code == 2);
  CHECK(cli::run(dir, "evaluate data.csv data.csv --schema notarget.json --target y --test test.csv -o t.json").code == 0);
  CHECK(cli::run(dir, "evaluate data.csv nope.csv --schema s.json").code == 2);
}
