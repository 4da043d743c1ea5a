#include "../support/oracles.hpp"

#include "wlforge/cli.hpp"
#include "wlforge/config.hpp"
#include "wlforge/pipeline.hpp"
#include "wlforge/raster_io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace wlforge;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = parse_and_dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

const fs::path& cli_corpus() {
  static testutil::TempDir dir("cli_corpus");
  static const bool made = [] {
    SynthConfig sc;
    sc.width = sc.height = 64;
    sc.seed = 5;
    generate_dataset(sc, 20, 5, dir.path(), 1);
    std::ofstream(dir.path() / "cfg.json") << R"({"trainer": {"epochs": 60, "samples_per_class": 4}})";
    return true;
  }();
  (void)made;
  return dir.path();
}

std::string dataset() { return (cli_corpus() / kDatasetManifestName).string(); }
std::string cfg_file() { return (cli_corpus() / "cfg.json").string(); }

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

ManifestEntry verdict(const std::string& id, std::optional<std::string> reason) {
  ManifestEntry e;
  e.id = id;
  e.image_path = id + ".png";
  if (!reason) return e;
  e.label_kind = LabelKind::Weak;
  e.mask_path = fs::path(id + "_m.png");
  e.provenance = Provenance{"coarse", "box", "b", "p", "h", *reason};
  return e;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit 1 with help") {
  Result r = run({"no-such-command"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = run({"select-gold", "--bogus-flag", "1"});
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--n-gold") != std::string::npos);
  r = run({});
  CHECK(r.code == kExitUsage);
  r = run({"coarse-fit", "--model", "m.json"});  // no --train
  CHECK(r.code == kExitUsage);
  CHECK(r.err.find("--train") != std::string::npos);
  r = run({"select-gold", "--dataset", dataset(), "--n-gold", "0", "--out", "x"});
  CHECK(r.code == kExitUsage);
  r = run({"--help"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("pipeline") != std::string::npos);
}

TEST_CASE("runtime failures exit 2 and name the stage") {
  testutil::TempDir dir("cli_rt");
  Result r = run({"evaluate", "--model", (dir.path() / "absent.json").string(), "--test", dataset()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("evaluate") != std::string::npos);
  r = run({"pipeline", "--dataset", (dir.path() / "absent.jsonl").string(), "--out", (dir.path() / "o").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("select_gold") != std::string::npos);
}

TEST_CASE("dry runs write nothing") {
  testutil::TempDir dir("cli_dry");
  const auto before = testutil::snapshot(dir.path());
  const auto corpus_before = testutil::snapshot(cli_corpus());
  const std::string out = (dir.path() / "run").string();
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"pipeline", "--dry-run", "--dataset", dataset(), "--out", out},
           {"sweep-gold", "--dry-run", "--dataset", dataset(), "--out", out},
           {"synth-gen", "--dry-run", "--out", out},
           {"select-gold", "--dry-run", "--dataset", dataset(), "--n-gold", "3", "--out", out},
           {"coarse-fit", "--dry-run", "--train", dataset(), "--model", out + "/m.json"}}) {
    const Result r = run(args);
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("config_hash: ") == 0);
    CHECK(r.out.find("dry run: nothing written") != std::string::npos);
  }
  CHECK(testutil::snapshot(dir.path()) == before);
  CHECK(testutil::snapshot(cli_corpus()) == corpus_before);

  PipelineConfig cfg;
  cfg.dataset = dataset();
  cfg.out_dir = out;
  const Result r = run({"pipeline", "--dry-run", "--dataset", dataset(), "--out", out});
  CHECK(r.out.find("config_hash: " + config_hash(cfg) + "\n") == 0);
}

TEST_CASE("prompt on an empty coarse mask reports the filter and writes nothing") {
  testutil::TempDir dir("cli_prompt");
  save_prob(ProbMask(32, 32, 0.0), dir.path() / "zero.png");
  const auto before = testutil::snapshot(dir.path());
  Result r = run({"prompt", "--coarse", (dir.path() / "zero.png").string(), "--mode", "box"});
  CHECK(r.code == kExitOk);
  CHECK(r.out == "filtered: empty_coarse\n");
  r = run({"prompt", "--coarse", (dir.path() / "zero.png").string(), "--mode", "points", "--out",
           (dir.path() / "p.jsonl").string()});
  CHECK(r.code == kExitOk);
  CHECK(r.out == "filtered: empty_coarse\n");
  CHECK(testutil::snapshot(dir.path()) == before);

  Plane<double> p = Plane<double>::Zero(32, 32);
  p.block(10, 12, 6, 4) = 0.9;
  save_prob(ProbMask(p), dir.path() / "block.png");
  r = run({"prompt", "--coarse", (dir.path() / "block.png").string(), "--mode", "box"});
  CHECK(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j.size() == 1);
  CHECK(j[0]["type"] == "box");
}

TEST_CASE("verdict stats") {
  DatasetManifest m;
  m.name = "v";
  CHECK(verdict_stats(m) == "no weak-label records\n");
  m.entries = {verdict("a", "ok"), verdict("b", "ok")};
  CHECK(verdict_stats(m) == "| filter_reason | count |\n|---|---|\n| ok | 2 |\ntotal: 2\n");
  m.entries = {verdict("a", "ok"), verdict("b", "over_foreground"), verdict("c", "ok"), verdict("d", ""),
               verdict("e", std::nullopt)};
  CHECK(verdict_stats(m) ==
        "| filter_reason | count |\n|---|---|\n| ok | 2 |\n| over_foreground | 1 |\n| unfiltered | 1 |\ntotal: 4\n");
  m.entries = {verdict("e", std::nullopt)};
  CHECK_THROWS_AS(verdict_stats(m), ManifestError);
}

TEST_CASE("seed comes from WLFORGE_SEED unless --seed is given") {
  testutil::TempDir dir("cli_seed");
  const DatasetManifest ds = load_manifest(dataset());
  ::setenv("WLFORGE_SEED", "7", 1);
  Result r = run({"select-gold", "--dataset", dataset(), "--n-gold", "3", "--out", (dir.path() / "env").string()});
  CHECK(r.code == kExitOk);
  r = run({"select-gold", "--dataset", dataset(), "--n-gold", "3", "--seed", "2", "--out", (dir.path() / "flag").string()});
  CHECK(r.code == kExitOk);
  ::setenv("WLFORGE_SEED", "not-a-number", 1);
  r = run({"select-gold", "--dataset", dataset(), "--n-gold", "3", "--out", (dir.path() / "bad").string()});
  CHECK(r.code == kExitUsage);
  ::unsetenv("WLFORGE_SEED");
  CHECK(load_manifest(dir.path() / "env" / "gold.manifest").entries == select_gold(ds, 3, 7).gold.entries);
  CHECK(load_manifest(dir.path() / "flag" / "gold.manifest").entries == select_gold(ds, 3, 2).gold.entries);
}

TEST_CASE("stage commands chain to the pipeline result") {
  testutil::TempDir dir("cli_chain");
  const fs::path d = dir.path();
  const auto s = [&](const char* sub) { return (d / sub).string(); };
  const std::vector<std::string> common{"--config", cfg_file(), "--seed", "0"};
  const auto ok = [&](std::vector<std::string> args) {
    args.insert(args.end(), common.begin(), common.end());
    const Result r = run(args);
    INFO(r.err);
    REQUIRE(r.code == kExitOk);
    return r;
  };

  ok({"pipeline", "--dataset", dataset(), "--modes", "box", "--n-weak-targets", "5", "--out", s("pipe")});
  ok({"select-gold", "--dataset", dataset(), "--out", s("m")});
  ok({"coarse-fit", "--train", s("m/gold.manifest"), "--model", s("base.json")});
  ok({"coarse-predict", "--model", s("base.json"), "--manifest", s("m/unlabeled.manifest"), "--out", s("coarse")});
  ok({"prompt", "--manifest", s("m/unlabeled.manifest"), "--coarse-dir", s("coarse"), "--mode", "box", "--out", s("prompts.jsonl")});
  ok({"weaklabel", "--manifest", s("m/unlabeled.manifest"), "--prompts", s("prompts.jsonl"), "--out", s("weak")});
  const Result unfiltered = run({"report", "--verdicts", s("weak/weak_labels.manifest")});
  CHECK(unfiltered.out.find("| unfiltered |") != std::string::npos);
  ok({"filter", "--manifest", s("weak/weak_labels.manifest"), "--out", s("candidates.manifest")});
  ok({"assemble", "--gold", s("m/gold.manifest"), "--candidates", s("candidates.manifest"), "--n-weak", "5", "--out", s("aug.manifest")});
  ok({"coarse-fit", "--train", s("aug.manifest"), "--model", s("aug.json")});
  const Result ev = ok({"evaluate", "--model", s("aug.json"), "--test", s("m/test.manifest")});

  // Weak masks are byte-identical.
  std::map<std::string, std::string> chain_pngs;
  for (const auto& [name, bytes] : testutil::snapshot(d / "weak"))
    if (fs::path(name).extension() == ".png") chain_pngs[name] = bytes;
  const auto pipe_pngs = testutil::snapshot(d / "pipe" / "seed_0" / "box" / "weak_labels");
  CHECK_FALSE(chain_pngs.empty());
  CHECK(chain_pngs == pipe_pngs);

  // Same augmented ids and the same score.
  const DatasetManifest a = load_manifest(s("aug.manifest"));
  const DatasetManifest b = load_manifest(d / "pipe" / "seed_0" / "box" / "manifests" / "augmented_5.manifest");
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].id == b.entries[i].id);
  std::string box_row;
  for (const auto& r : rows_from_csv(read_file(d / "pipe" / "rows.csv")))
    if (r.prompt_mode == EvalPromptMode::Box && r.n_weak == 5) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "mean_dice=%.6f", r.mean_dice);
      box_row = buf;
    }
  REQUIRE_FALSE(box_row.empty());
  CHECK(ev.out.find(box_row + " ") == 0);

  const Result rep = run({"report", "--rows", s("pipe/rows.csv"), "--out", s("rep")});
  CHECK(rep.code == kExitOk);
  CHECK(read_file(d / "rep" / "report.md") == read_file(d / "pipe" / "report.md"));
}

TEST_CASE("synth-gen is reproducible") {
  testutil::TempDir a("cli_synth_a"), b("cli_synth_b");
  CHECK(run({"synth-gen", "--n-train", "4", "--n-test", "2", "--seed", "3", "--out", a.path().string()}).code == kExitOk);
  CHECK(run({"synth-gen", "--n-train", "4", "--n-test", "2", "--seed", "3", "--jobs", "2", "--out", b.path().string()}).code ==
        kExitOk);
  CHECK(testutil::snapshot(a.path()) == testutil::snapshot(b.path()));
  CHECK(load_manifest(a.path() / kDatasetManifestName, true).entries.size() == 6);
}

}
