#include "gmop/cli.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gmop;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result gmop_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Fresh scratch directory per test case.
fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gmop_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string p(const fs::path& path) { return path.string(); }

const std::vector<std::string> kSmallTrain = {"--epochs", "2", "--flow-layers", "2", "--flow-hidden", "8",
                                              "--context-dim", "8", "--past-hidden", "8"};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  const auto dir = scratch("usage");
  CHECK(gmop_run({}).code == cli::kUsage);
  CHECK(gmop_run({"frobnicate"}).code == cli::kUsage);
  CHECK(gmop_run({"generate", "--out", p(dir / "a.jsonl"), "--n", "0"}).code == cli::kUsage);
  CHECK(gmop_run({"generate", "--out", p(dir / "a.jsonl"), "--template", "spiral"}).code == cli::kUsage);
  CHECK(gmop_run({"generate", "--out", p(dir / "a.jsonl"), "--bogus", "1"}).code == cli::kUsage);
  CHECK(gmop_run({"evaluate", "--bundle", p(dir / "none"), "--scenes", p(dir / "a.jsonl"), "--out",
                  p(dir / "m.csv")})
            .code == cli::kUsage);
  CHECK(gmop_run({"compare", "--inputs", p(dir)}).code == cli::kUsage);
  CHECK(gmop_run({"train", "--scenes", p(dir / "missing.jsonl"), "--artifacts", p(dir), "--out", p(dir / "r")})
            .code == cli::kUsage);
  const auto help = gmop_run({"generate", "--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("--template") != std::string::npos);
}

TEST_CASE("generate is deterministic and writes a manifest") {
  const auto dir = scratch("generate");
  const std::vector<std::string> args = {"--template", "crossing-intersection", "--template", "roundabout-entry",
                                         "--n", "6", "--seed", "4", "--random-priority", "1"};
  auto a = std::vector<std::string>{"generate", "--out", p(dir / "a.jsonl")};
  auto b = std::vector<std::string>{"generate", "--out", p(dir / "b.jsonl")};
  a.insert(a.end(), args.begin(), args.end());
  b.insert(b.end(), args.begin(), args.end());
  REQUIRE(gmop_run(a).code == cli::kOk);
  REQUIRE(gmop_run(b).code == cli::kOk);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "a.jsonl.manifest.json"));
  CHECK(manifest["scenes"] == 6);
  CHECK(manifest["config"]["seed"] == 4);
  CHECK(manifest["config"]["template"].size() == 2);
  CHECK(manifest["template_mix"]["crossing-intersection"].get<int>() +
            manifest["template_mix"]["roundabout-entry"].get<int>() ==
        6);
}

TEST_CASE("config file values yield to flags") {
  const auto dir = scratch("config");
  {
    std::ofstream cfg(dir / "gen.cfg");
    cfg << "# generator settings\nn = 5\nseed = 3\ntemplate = crossing-intersection, independent-lanes\n";
  }
  REQUIRE(gmop_run({"generate", "--config", p(dir / "gen.cfg"), "--out", p(dir / "a.jsonl")}).code == cli::kOk);
  auto m = nlohmann::json::parse(slurp(dir / "a.jsonl.manifest.json"));
  CHECK(m["scenes"] == 5);
  CHECK(m["config"]["seed"] == 3);
  CHECK(m["config"]["template"] == nlohmann::json({"crossing-intersection", "independent-lanes"}));

  REQUIRE(gmop_run({"generate", "--config", p(dir / "gen.cfg"), "--out", p(dir / "b.jsonl"), "--n", "2"}).code ==
          cli::kOk);
  m = nlohmann::json::parse(slurp(dir / "b.jsonl.manifest.json"));
  CHECK(m["scenes"] == 2);
  CHECK(m["config"]["n"] == 2);
  CHECK(m["config"]["seed"] == 3);

  {
    std::ofstream cfg(dir / "bad.cfg");
    cfg << "seeds = 3\n";
  }
  const auto bad = gmop_run({"generate", "--config", p(dir / "bad.cfg"), "--out", p(dir / "c.jsonl")});
  CHECK(bad.code == cli::kUsage);
  CHECK(bad.err.find("seeds") != std::string::npos);
  CHECK(gmop_run({"generate", "--config", p(dir / "missing.cfg"), "--out", p(dir / "c.jsonl")}).code ==
        cli::kUsage);
}

TEST_CASE("pipeline exit codes, determinism and dependencies") {
  const auto dir = scratch("pipeline");
  const auto scenes = p(dir / "scenes.jsonl");
  REQUIRE(gmop_run({"generate", "--out", scenes, "--n", "24", "--seed", "1", "--max-agents", "3"}).code == cli::kOk);
  REQUIRE(gmop_run({"pretrain", "--scenes", scenes, "--out", p(dir / "art"), "--ae-steps", "40", "--ae-hidden", "8",
                    "--latent-dim", "4"})
              .code == cli::kOk);
  CHECK(fs::exists(dir / "art" / "autoencoder_curve.csv"));

  // Crossing variants need a classifier pretrained for the same heuristic.
  auto train_args = [&](const std::string& variant, const std::string& out) {
    std::vector<std::string> a = {"train", "--scenes", scenes, "--artifacts", p(dir / "art"), "--variant", variant,
                                  "--out", p(dir / out)};
    a.insert(a.end(), kSmallTrain.begin(), kSmallTrain.end());
    return a;
  };
  const auto missing = gmop_run(train_args("crossing", "crossing"));
  CHECK(missing.code == cli::kDependency);
  const auto cls = gmop_run({"pretrain", "--component", "classifier", "--strategy", "crossing", "--scenes", scenes,
                             "--out", p(dir / "art"), "--cls-epochs", "1", "--enc-dim", "4", "--embed-dim", "8"});
  REQUIRE(cls.code == cli::kOk);
  CHECK(cls.out.find("confusion") != std::string::npos);
  CHECK(gmop_run(train_args("flipped-crossing", "flipped")).code == cli::kDependency);
  CHECK(gmop_run(train_args("crossing", "crossing")).code == cli::kOk);

  REQUIRE(gmop_run(train_args("independence", "indep")).code == cli::kOk);
  const auto manifest = nlohmann::json::parse(slurp(dir / "indep" / "manifest.json"));
  CHECK(manifest["provenance"]["status"] == "complete");
  CHECK(!fs::exists(dir / "indep" / ".lock"));

  // An existing lock refuses a second writer.
  { std::ofstream(dir / "indep" / ".lock") << ""; }
  CHECK(gmop_run(train_args("independence", "indep")).code == cli::kFailure);
  fs::remove(dir / "indep" / ".lock");

  auto evaluate = [&](const std::string& bundle, const std::string& out) {
    return gmop_run({"evaluate", "--bundle", p(dir / bundle), "--scenes", scenes, "--out", p(dir / out),
                     "--max-samples", "8", "--eval-seed", "3"});
  };
  REQUIRE(evaluate("indep", "m1.csv").code == cli::kOk);
  REQUIRE(evaluate("indep", "m2.csv").code == cli::kOk);
  CHECK(slurp(dir / "m1.csv") == slurp(dir / "m2.csv"));
  REQUIRE(evaluate("crossing", "m3.csv").code == cli::kOk);

  const auto cmp = gmop_run({"compare", "--inputs", p(dir / "m1.csv"), p(dir / "m3.csv"), "--out",
                             p(dir / "summary.csv"), "--plots", p(dir / "plots")});
  REQUIRE(cmp.code == cli::kOk);
  CHECK(cmp.out.find("ranking by mean joint NLL") != std::string::npos);
  CHECK(fs::exists(dir / "plots" / "joint_nll.svg"));
  CHECK(slurp(dir / "summary.csv").find("crossing,1,") != std::string::npos);

  // Corrupt scene files are validation errors.
  { std::ofstream(dir / "bad.jsonl") << "not json\n"; }
  CHECK(gmop_run({"evaluate", "--bundle", p(dir / "indep"), "--scenes", p(dir / "bad.jsonl"), "--out",
                  p(dir / "m4.csv")})
            .code == cli::kValidation);

  // An overflowing learning rate diverges: exit 5 and a bundle marked as diverged.
  auto diverge = train_args("independence", "diverged");
  diverge.insert(diverge.end(), {"--lr", "1e300"});
  const auto div = gmop_run(diverge);
  CHECK(div.code == cli::kNumeric);
  const auto div_manifest = nlohmann::json::parse(slurp(dir / "diverged" / "manifest.json"));
  CHECK(div_manifest["provenance"]["status"] == "diverged");
}

TEST_CASE("graphs reports agreement with the generator annotations") {
  const auto dir = scratch("graphs");
  const auto scenes = p(dir / "scenes.jsonl");
  REQUIRE(gmop_run({"generate", "--out", scenes, "--n", "10", "--seed", "2"}).code == cli::kOk);
  const auto r = gmop_run({"graphs", "--scenes", scenes, "--strategy", "crossing", "--strategy", "flipped-crossing",
                           "--out", p(dir / "graphs.jsonl"), "--report", p(dir / "agree.csv")});
  REQUIRE(r.code == cli::kOk);
  const auto csv = slurp(dir / "agree.csv");
  CHECK(csv.find("crossing,ground-truth,") != std::string::npos);
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.rfind("crossing,ground-truth,", 0) == 0) CHECK(line.substr(line.rfind(',') + 1) == "1");
    if (line.rfind("flipped-crossing,ground-truth,", 0) == 0) CHECK(line.substr(line.rfind(',') + 1) == "0");
  }
  CHECK(gmop_run({"graphs", "--scenes", scenes, "--strategy", "no-heuristic"}).code == cli::kDependency);
}
