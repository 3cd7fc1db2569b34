#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli/cli.hpp"
#include "docslm/annotator.hpp"
#include "docslm/jsonl.hpp"
#include "docslm/slm.hpp"
#include "test_util.hpp"

using namespace docslm;
using docslm::testing::TempDir;
using json = nlohmann::json;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome docslm_cli(const std::vector<std::string>& args, const std::string& stdin_text = "") {
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, {in, out, err});
  o.out = out.str();
  o.err = err.str();
  return o;
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string p(const std::filesystem::path& path) { return path.string(); }

// Small corpus, stub dataset and a briefly fine-tuned checkpoint shared by the
// pipeline cases.
struct Pipeline {
  TempDir dir{"cli_pipeline"};

  Pipeline() {
    auto r = docslm_cli({"gen-corpus", "--n-docs", "12", "--mean", "90", "--std", "10", "--min", "60", "--max",
                         "120", "--seed", "3", "--out", p(dir / "corpus.jsonl")});
    REQUIRE(r.code == 0);
    r = docslm_cli({"build-dataset", p(dir / "corpus.jsonl"), "--stub", "--test-fraction", "0.25", "--seed", "5",
                    "--max-in-flight", "1", "--out", p(dir / "ds")});
    REQUIRE(r.code == 0);
    r = docslm_cli({"finetune", p(dir / "ds" / "train.jsonl"), "--layers", "1", "--heads", "2", "--d-model", "16",
                    "--steps", "3", "--batch-size", "2", "--log-every", "1", "--out", p(dir / "m.ckpt")});
    REQUIRE(r.code == 0);
  }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  TempDir dir("cli_usage");
  auto r = docslm_cli({});
  CHECK(r.code != 0);

  r = docslm_cli({"chunk", p(dir / "missing.jsonl"), "--out", p(dir / "x.jsonl")});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "error: input corpus not found"));

  r = docslm_cli({"gen-corpus"});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "--out is required"));

  r = docslm_cli({"gen-corpus", "--n-docs", "many", "--out", p(dir / "c.jsonl")});
  CHECK(r.code != 0);

  r = docslm_cli({"gen-corpus", "--config", p(dir / "nope.json"), "--out", p(dir / "c.jsonl")});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "config file not found"));

  r = docslm_cli({"--help"});
  CHECK(r.code == 0);
  CHECK(contains(r.out, "build-dataset"));
}

TEST_CASE("config files fill unset flags and the command line wins") {
  TempDir dir("cli_config");
  write_json_file(dir / "cfg.json", json{{"n-docs", 4}, {"seed", 9}, {"mean", 50}, {"std", 5}});
  auto r = docslm_cli({"gen-corpus", "--config", p(dir / "cfg.json"), "--n-docs", "2", "--out", p(dir / "c.jsonl")});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "wrote 2 documents"));
  const auto snap = read_json_file(p(dir / "c.jsonl") + ".config.json");
  CHECK(snap["subcommand"] == "gen-corpus");
  CHECK(snap["n-docs"] == 2);
  CHECK(snap["seed"] == 9);
  CHECK(snap["mean"] == 50);

  // The same settings without the file give a different corpus.
  r = docslm_cli({"gen-corpus", "--n-docs", "2", "--out", p(dir / "d.jsonl")});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "c.jsonl") != slurp(dir / "d.jsonl"));
  r = docslm_cli({"gen-corpus", "--n-docs", "2", "--seed", "9", "--mean", "50", "--std", "5", "--out",
                  p(dir / "e.jsonl")});
  CHECK(slurp(dir / "c.jsonl") == slurp(dir / "e.jsonl"));

  write_json_file(dir / "bad.json", json{{"n-dox", 4}});
  r = docslm_cli({"gen-corpus", "--config", p(dir / "bad.json"), "--out", p(dir / "f.jsonl")});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "unknown setting 'n-dox'"));

  write_json_file(dir / "list.json", json{{"chunks", {0, 2}}, {"repeats", 1}, {"max-new", 2}});
  r = docslm_cli({"bench", "--simulated", "200000,100000", "--config", p(dir / "list.json"), "--out",
                  p(dir / "b.json")});
  REQUIRE(r.code == 0);
  CHECK(read_json_file(dir / "b.json")["config"]["chunk_counts"] == json{0, 2});
}

TEST_CASE("corpus, chunk and dataset commands") {
  TempDir dir("cli_data");
  auto r = docslm_cli({"gen-corpus", "--n-docs", "10", "--seed", "1", "--out", p(dir / "corpus.jsonl")});
  REQUIRE(r.code == 0);
  CHECK(read_corpus(dir / "corpus.jsonl").size() == 10);

  r = docslm_cli({"chunk", p(dir / "corpus.jsonl"), "--out", p(dir / "chunked.jsonl")});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "Processing Stage"));
  CHECK(contains(r.out, "Mean ± STD"));
  const auto chunked = read_chunked_corpus(dir / "chunked.jsonl");
  REQUIRE(chunked.size() == 10);
  for (const auto& c : chunked) CHECK(c.doc.total_tokens <= 1000);

  r = docslm_cli({"build-dataset", p(dir / "corpus.jsonl"), "--stub", "--seed", "2", "--test-fraction", "0.2",
                  "--out", p(dir / "ds")});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "Token Type"));
  CHECK(contains(r.out, "Prompt Tokens"));
  CHECK(contains(r.out, "Completion Tokens"));
  CHECK(contains(r.out, "examples: 50 (train 40, test 10)"));
  CHECK(read_docassist(dir / "ds" / "train.jsonl").size() == 40);
  CHECK(std::filesystem::exists(dir / "ds" / "usage.json"));
  CHECK(std::filesystem::exists(dir / "ds" / "annotations.jsonl"));
  CHECK(read_json_file(dir / "ds" / "config.json")["stub"] == true);

  r = docslm_cli({"build-dataset", p(dir / "corpus.jsonl"), "--stub", "--seed", "2", "--test-fraction", "0.2",
                  "--out", p(dir / "ds2")});
  CHECK(slurp(dir / "ds" / "test.jsonl") == slurp(dir / "ds2" / "test.jsonl"));

  r = docslm_cli({"build-dataset", p(dir / "corpus.jsonl"), "--out", p(dir / "ds3")});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "--stub or --endpoint"));
}

TEST_CASE("fine-tune, resume, evaluate") {
  Pipeline pl;
  const auto& dir = pl.dir;
  CHECK(std::filesystem::exists(p(dir / "m.ckpt") + ".loss.csv"));
  CHECK(read_json_file(p(dir / "m.ckpt") + ".config.json")["steps"] == 3);

  auto r = docslm_cli({"finetune", p(dir / "ds" / "train.jsonl"), "--resume", p(dir / "m.ckpt"), "--steps", "5",
                       "--batch-size", "2", "--out", p(dir / "m2.ckpt")});
  REQUIRE(r.code == 0);
  const auto ck = slm::load_checkpoint(dir / "m2.ckpt");
  CHECK(ck.optimizer->step == 5);
  CHECK(ck.metadata["loss_curve"].size() == 5);

  r = docslm_cli({"finetune", p(dir / "ds" / "train.jsonl"), "--resume", p(dir / "m2.ckpt"), "--steps", "5",
                  "--out", p(dir / "m3.ckpt")});
  CHECK(r.code == 2);
  CHECK(contains(r.err, "already at step 5"));

  r = docslm_cli({"finetune", p(dir / "ds" / "train.jsonl"), "--resume", p(dir / "m.ckpt"), "--init",
                  p(dir / "m.ckpt"), "--out", p(dir / "m4.ckpt")});
  CHECK(r.code == 2);

  r = docslm_cli({"eval", p(dir / "ds" / "test.jsonl"), "--gold", "--judge-score", "4.5", "--model-name", "gold",
                  "--out", p(dir / "gold.json")});
  REQUIRE(r.code == 0);
  const auto gold = read_json_file(dir / "gold.json");
  CHECK(gold["intent_accuracy"] == 1.0);
  CHECK(gold["unparseable"] == 0);
  for (const auto& [name, t] : gold["tasks"].items()) {
    CHECK(t["bleu"].get<double>() == doctest::Approx(1.0));
    CHECK(t["rougeL"].get<double>() == doctest::Approx(1.0));
  }
  CHECK(contains(r.out, "100.00"));

  r = docslm_cli({"eval", p(dir / "ds" / "test.jsonl"), "--checkpoint", p(dir / "m.ckpt"), "--max-new", "6", "--out",
                  p(dir / "model.json")});
  REQUIRE(r.code == 0);
  const auto model = read_json_file(dir / "model.json");
  CHECK(model["n"] == read_docassist(dir / "ds" / "test.jsonl").size());
  CHECK(read_jsonl(p(dir / "model.json") + ".predictions.jsonl").size() == model["n"].get<std::size_t>());

  r = docslm_cli({"eval", p(dir / "ds" / "test.jsonl"), "--gold", "--checkpoint", p(dir / "m.ckpt")});
  CHECK(r.code == 2);
}

TEST_CASE("bench on a simulated backend") {
  TempDir dir("cli_bench");
  auto r = docslm_cli({"bench", "--simulated", "100000,20000", "--chunks", "0,1,4", "--repeats", "2", "--max-new",
                       "3", "--out", p(dir / "bench.json")});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "(a) Prompt: questions only"));
  CHECK(contains(r.out, "(b) Prompt: 1 chunk ~ 200 tokens"));
  CHECK(contains(r.out, "(e) Prompt: 4 chunks ~ 800 tokens"));
  CHECK(contains(r.err, "chunks=4 ok=2 failed=0"));
  const auto j = read_json_file(dir / "bench.json");
  CHECK(j["cells"].size() == 3);
  CHECK(j["metric_definitions"].get<std::string>().find("TTFT") != std::string::npos);

  r = docslm_cli({"bench", "--simulated", "100"});
  CHECK(r.code == 2);
  r = docslm_cli({"bench"});
  CHECK(r.code == 2);
}

TEST_CASE("chat answers scripted input and logs the session") {
  Pipeline pl;
  const auto& dir = pl.dir;
  {
    std::ofstream doc(dir / "note.txt");
    doc << "Quarterly revenue grew in the north region while costs stayed flat.";
  }
  const auto r = docslm_cli({"chat", "--checkpoint", p(dir / "m.ckpt"), "--document", p(dir / "note.txt"),
                             "--max-new", "6", "--out", p(dir / "session.log")},
                            "/suggest\n\nwhat grew?\n/quit\nnever read\n");
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "Loaded note.txt"));
  CHECK(contains(r.out, "Commands: /summary, /suggest, /quit"));
  CHECK(contains(r.out, "> "));
  const auto log = slurp(dir / "session.log");
  CHECK(contains(log, "user: what grew?"));
  CHECK_FALSE(contains(log, "never read"));
  CHECK(contains(log, "# end of session"));
  std::size_t asked = 0;
  for (std::size_t at = log.find("user: "); at != std::string::npos; at = log.find("user: ", at + 1)) ++asked;
  CHECK(asked == 3);  // automatic summary, /suggest, the question

  const auto missing = docslm_cli({"chat", "--checkpoint", p(dir / "none.ckpt"), "--document", p(dir / "note.txt")});
  CHECK(missing.code == 2);
}
