#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "cmr/encoder.hpp"
#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run_cli(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.code = cmr::cli::run(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cmr_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

const std::vector<std::string> kSmallModel{"--set", "hidden_size=8", "--set", "embedding_dim=6", "--set",
                                           "batch_size=8"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// synthetic corpus with six responses per context, split with a
// multi-reference test set
fs::path prepared(const std::string& name) {
  const auto d = fresh_dir(name);
  REQUIRE(run_cli({"-o", d.string(), "synthetic", "--contexts", "30", "--responses-per-context", "6", "--seed", "4"})
              .code == 0);
  REQUIRE(run_cli({"-o", d.string(), "preprocess", (d / "synthetic.jsonl").string(), "--test-fraction", "0.2",
               "--valid-fraction", "0.1", "--multi-reference"})
              .code == 0);
  return d;
}

}  // namespace

TEST_CASE("help documents the output directory variable and defaults") {
  const auto r = run_cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("CMR_OUTPUT_DIR") != std::string::npos);
  const auto g = run_cli({"generate", "--help"});
  CHECK(g.out.find("--top-k") != std::string::npos);
  CHECK(g.out.find("[20]") != std::string::npos);
  CHECK(run_cli({}).code != 0);
  CHECK(run_cli({"bogus"}).code != 0);
}

TEST_CASE("preprocess statistics and determinism") {
  const auto d = prepared("pre");
  const auto stats = json::parse(slurp(d / "stats.json"));
  for (const char* split : {"train", "valid", "test"}) {
    CAPTURE(split);
    const auto& s = stats[split];
    CHECK(s.contains("# dialogues"));
    CHECK(s.contains("# utterances"));
    CHECK(s.contains("# documents"));
    CHECK(s.contains("# document sentences"));
    CHECK(s["Average length (# words)"].contains("utterances"));
    CHECK(s["Average length (# words)"].contains("document sentences"));
  }
  CHECK(stats["test"]["# dialogues"].get<int>() == 6);
  CHECK(line_count(d / "test.jsonl") == 6);
  CHECK(line_count(d / "human.txt") == 6);
  CHECK(line_count(d / "train.jsonl") + line_count(d / "valid.jsonl") == 24 * 6);

  const std::string train = slurp(d / "train.jsonl"), test = slurp(d / "test.jsonl"), st = slurp(d / "stats.json");
  REQUIRE(run_cli({"-o", d.string(), "preprocess", (d / "synthetic.jsonl").string(), "--test-fraction", "0.2",
               "--valid-fraction", "0.1", "--multi-reference"})
              .code == 0);
  CHECK(slurp(d / "train.jsonl") == train);
  CHECK(slurp(d / "test.jsonl") == test);
  CHECK(slurp(d / "stats.json") == st);
}

TEST_CASE("preprocess of an empty file") {
  const auto d = fresh_dir("empty");
  std::ofstream(d / "raw.jsonl").close();
  const auto r = run_cli({"-o", (d / "out").string(), "preprocess", (d / "raw.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(slurp(d / "out" / "train.jsonl").empty());
  const auto stats = json::parse(slurp(d / "out" / "stats.json"));
  CHECK(stats["train"]["# utterances"] == 0);
  CHECK(stats["train"]["Average length (# words)"]["utterances"] == 0.0);
  CHECK(stats["input"]["records"] == 0);
}

TEST_CASE("preprocess reports schema errors with the line") {
  const auto d = fresh_dir("bad");
  std::ofstream(d / "raw.jsonl") << R"({"id": "x", "history": ["hi"], "response": "yo"})" << '\n';
  const auto r = run_cli({"-o", d.string(), "preprocess", (d / "raw.jsonl").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("line 1") != std::string::npos);
  CHECK(r.err.find("doc") != std::string::npos);
  CHECK(run_cli({"-o", d.string(), "preprocess", (d / "missing.jsonl").string()}).code != 0);
}

TEST_CASE("train config precedence") {
  const auto d = prepared("precedence");
  std::ofstream(d / "cfg.json") << R"({"learning_rate": 0.01, "batch_size": 8, "dropout": 0.2, "hidden_size": 8,
                                       "embedding_dim": 6})";
  const auto out = d / "run";
  const auto r = run_cli({"-o", out.string(), "train", "--train", (d / "train.jsonl").string(), "--config",
                      (d / "cfg.json").string(), "--set", "batch_size=16", "--seed", "9", "--epochs", "0"});
  REQUIRE(r.code == 0);
  const auto cfg = json::parse(slurp(out / "config.json"));
  CHECK(cfg["learning_rate"] == 0.01);  // file over default
  CHECK(cfg["batch_size"] == 16);       // command line over file
  CHECK(cfg["dropout"] == 0.2);
  CHECK(cfg["seed"] == 9);
  CHECK(cfg["tau"] == 1.0);  // default kept

  const auto defaults = d / "defaults";
  REQUIRE(run_cli({"-o", defaults.string(), "train", "--train", (d / "train.jsonl").string(), "--epochs", "0"}).code == 0);
  const auto def = json::parse(slurp(defaults / "config.json"));
  CHECK(def["learning_rate"] == 0.0005);
  CHECK(def["batch_size"] == 32);
  CHECK(def["dropout"] == 0.4);
  CHECK(def["hidden_size"] == 512);
  CHECK(def["embedding_dim"] == 300);

  CHECK(run_cli({"-o", out.string(), "train", "--train", (d / "train.jsonl").string(), "--variant", "memnet"}).code == 2);
  CHECK(run_cli({"-o", out.string(), "train", "--train", (d / "train.jsonl").string(), "--set", "nope=1"}).code == 2);
}

TEST_CASE("train is deterministic per seed and cmr-f skips documents") {
  const auto d = prepared("train");
  const auto args = concat({"train", "--train", (d / "train.jsonl").string(), "--valid", (d / "valid.jsonl").string(),
                            "--epochs", "2", "--seed", "7"},
                           kSmallModel);
  REQUIRE(run_cli(concat({"-o", (d / "a").string()}, args)).code == 0);
  REQUIRE(run_cli(concat({"-o", (d / "b").string()}, args)).code == 0);
  CHECK(slurp(d / "a" / "checkpoint.json") == slurp(d / "b" / "checkpoint.json"));
  CHECK(slurp(d / "a" / "loss.csv") == slurp(d / "b" / "loss.csv"));
  CHECK(slurp(d / "a" / "loss.csv").rfind("step,train_loss,val_loss\n", 0) == 0);

  cmr::model::reset_document_reads();
  REQUIRE(run_cli(concat(concat({"-o", (d / "f").string()}, args), {"--variant", "cmr-f"})).code == 0);
  CHECK(cmr::model::document_reads() == 0);
  REQUIRE(run_cli(concat(concat({"-o", (d / "c").string()}, args), {"--variant", "cmr"})).code == 0);
  CHECK(cmr::model::document_reads() > 0);

  // resume continues from the checkpoint
  REQUIRE(run_cli({"-o", (d / "r").string(), "train", "--train", (d / "train.jsonl").string(), "--resume",
               (d / "a" / "last.json").string(), "--epochs", "3"})
              .code == 0);
  CHECK(json::parse(slurp(d / "r" / "last.json"))["epoch"] == 3);
}

TEST_CASE("generate and evaluate") {
  const auto d = prepared("gen");
  REQUIRE(run_cli(concat({"-o", d.string(), "train", "--train", (d / "train.jsonl").string(), "--epochs", "1",
                      "--variant", "cmr+w"},
                     kSmallModel))
              .code == 0);
  const auto ckpt = (d / "checkpoint.json").string();
  const auto test = (d / "test.jsonl").string();
  REQUIRE(run_cli({"-o", d.string(), "generate", "--checkpoint", ckpt, "--input", test, "--dump-attention", "--top-k",
               "5", "--seed", "3"})
              .code == 0);
  CHECK(line_count(d / "outputs.txt") == line_count(test));

  std::size_t dumps = 0;
  for (const auto& entry : fs::directory_iterator(d / "attention")) {
    if (entry.path().extension() == ".svg") {
      CHECK(slurp(entry.path()).rfind("<svg", 0) == 0);
      continue;
    }
    ++dumps;
    const auto j = json::parse(slurp(entry.path()));
    CHECK(j["attention"].size() == j["response"].size());
    for (const auto& row : j["attention"]) {
      CHECK(row.size() == j["memory"].size());
      double total = 0;
      for (double p : row) total += p;
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
  CHECK(dumps == line_count(test));

  // gold against gold
  REQUIRE(run_cli({"-o", d.string(), "evaluate", "--outputs", (d / "human.txt").string(), "--test", test}).code == 0);
  std::ofstream gold(d / "gold.txt");
  {
    std::ifstream in(test);
    for (std::string line; std::getline(in, line);) {
      const auto rec = json::parse(line);
      gold << rec["id"].get<std::string>() << '\t' << rec["refs"][0].get<std::string>() << '\n';
    }
  }
  gold.close();
  // the first reference as the hypothesis: BLEU is 1 because it is among the references
  REQUIRE(run_cli({"-o", d.string(), "evaluate", "--outputs", (d / "gold.txt").string(), "--test", test, "--out",
               "gold.json", "--compare", (d / "gold.txt").string(), "--bootstrap", "200"})
              .code == 0);
  const auto report = json::parse(slurp(d / "gold.json"));
  CHECK(report["corpus"]["BLEU"].get<double>() == doctest::Approx(1.0));
  for (const char* col : {"NIST", "BLEU", "METEOR", "Precision", "Recall", "F1", "Entropy-4", "Distinct-1",
                          "Distinct-2", "Len"})
    CHECK(report["corpus"].contains(col));
  const auto boot = json::parse(slurp(d / "bootstrap.json"));
  for (const auto& row : boot["results"]) {
    CHECK(row["significant"]["0.05"] == false);
    CHECK(row["p_value"] == 1.0);
  }

  // misaligned outputs
  std::ofstream(d / "short.txt") << "nope\thello\n";
  const auto bad = run_cli({"-o", d.string(), "evaluate", "--outputs", (d / "short.txt").string(), "--test", test});
  CHECK(bad.code != 0);
  CHECK(bad.err.find("nope") != std::string::npos);

  // vocabulary mismatch
  std::ofstream(d / "vocab.txt") << "<pad>\nsomething\n";
  CHECK(run_cli({"-o", d.string(), "generate", "--checkpoint", ckpt, "--input", test, "--vocab",
             (d / "vocab.txt").string()})
            .code != 0);

  // interactive
  const std::string record =
      R"({"history": ["what about the topic ?"], "doc": {"sentences": ["the fact is here"], "tags": [["p"]]}})";
  const auto inter = run_cli({"-o", d.string(), "generate", "--checkpoint", ckpt, "--interactive"}, record + "\n");
  CHECK(inter.code == 0);
  CHECK(!inter.out.empty());
  CHECK(inter.out.back() == '\n');
}
