#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>

#include "cli/cli.hpp"
#include "docslm/annotator.hpp"
#include "docslm/assistant.hpp"
#include "docslm/bench.hpp"
#include "docslm/corpus.hpp"
#include "docslm/jsonl.hpp"
#include "docslm/metrics.hpp"
#include "docslm/protocol.hpp"
#include "docslm/slm.hpp"

namespace docslm::cli {
namespace {

namespace fs = std::filesystem;

// Raised for invalid invocations; reported without a stack of context.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

void require_file(const std::string& path, const std::string& what) {
  require(path, what);
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

std::string snapshot_path(const std::string& out) { return out + ".config.json"; }

// ---------------------------------------------------------------------------

struct CommonFlags {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& c, const std::string& out_help) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--config", c.config, "Flat JSON file of settings; command-line flags take precedence");
  cmd->add_option("--out", c.out, out_help);
}

struct GenCorpusFlags {
  CommonFlags common;
  int n_docs = 100;
  LengthDistribution dist;
};

struct ChunkFlags {
  CommonFlags common;
  std::string input;
  std::string tokenizer = "fallback";
  int chunks = kDefaultChunkCount;
  int chunk_size = kDefaultChunkSize;
};

struct BuildFlags {
  CommonFlags common;
  std::string input;
  std::string tokenizer = "fallback";
  bool stub = false;
  std::string endpoint;
  std::string endpoint_path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key_env = "DOCSLM_API_KEY";
  double test_fraction = 2000.0 / 414000.0;
  int max_in_flight = 4;
  int max_attempts = 3;
  int chunks = kDefaultChunkCount;
  int chunk_size = kDefaultChunkSize;
  std::string request_pools;
};

struct ModelFlags {
  std::string preset;
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int max_seq_len = 512;
  bool no_bias = false;
  std::size_t vocab_pieces = 4096;
  std::string optimizer = "adamw";
  double lr = 3e-3;
  int batch_size = 8;
  int steps = 200;
  int warmup = 0;
  bool cosine = false;
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  std::string init;
  std::string resume;
  int log_every = 10;
};

struct TrainFlags {
  CommonFlags common;
  std::string input;
  ModelFlags model;
};

struct EvalFlags {
  CommonFlags common;
  std::string input;
  std::string checkpoint;
  std::string predictions;
  bool gold = false;
  double judge_score = 0.0;
  int max_new = 256;
  std::string model_name = "model";
};

struct BenchFlags {
  CommonFlags common;
  std::string manifest;
  std::string simulated;
  std::string corpus;
  std::string doc_id;
  std::string tokenizer = "fallback";
  std::vector<int> chunks{0, 1, 2, 3, 4};
  int repeats = 5;
  int max_new = 128;
  int warmup = 0;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--preset", m.preset, "Published model preset recorded as metadata (e.g. docslm-125m)");
  cmd->add_option("--layers", m.layers, "Transformer blocks");
  cmd->add_option("--heads", m.heads, "Attention heads");
  cmd->add_option("--d-model", m.d_model, "Model width");
  cmd->add_option("--max-seq-len", m.max_seq_len, "Context length");
  cmd->add_flag("--no-bias", m.no_bias, "Disable bias terms");
  cmd->add_option("--vocab-pieces", m.vocab_pieces, "Maximum learned vocabulary pieces");
  cmd->add_option("--optimizer", m.optimizer, "adamw, lion or sgd");
  cmd->add_option("--lr", m.lr, "Learning rate");
  cmd->add_option("--batch-size", m.batch_size, "Examples per step");
  cmd->add_option("--steps", m.steps, "Total optimizer steps; a resumed run continues up to this step");
  cmd->add_option("--warmup", m.warmup, "Linear warm-up steps");
  cmd->add_flag("--cosine", m.cosine, "Cosine learning-rate decay");
  cmd->add_option("--grad-clip", m.grad_clip, "Global gradient-norm clip (0 disables)");
  cmd->add_option("--weight-decay", m.weight_decay, "Decoupled weight decay");
  cmd->add_option("--init", m.init, "Start from this checkpoint's weights and tokenizer");
  cmd->add_option("--resume", m.resume, "Continue training from this checkpoint, including optimizer state");
  cmd->add_option("--log-every", m.log_every, "Print the loss every N steps");
}

slm::OptimizerConfig optimizer_config(const ModelFlags& m, std::uint64_t seed) {
  slm::OptimizerConfig oc;
  oc.rule = slm::parse_optimizer_rule(m.optimizer);
  oc.learning_rate = m.lr;
  oc.batch_size = m.batch_size;
  oc.steps = m.steps;
  oc.seed = seed;
  oc.warmup_steps = m.warmup;
  oc.cosine_decay = m.cosine;
  oc.grad_clip = m.grad_clip;
  oc.weight_decay = m.weight_decay;
  if (oc.rule == slm::OptimizerRule::lion) oc.beta2 = 0.99;
  return oc;
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const GenCorpusFlags& f, const CLI::App& cmd, Io io) {
  require(f.common.out, "--out");
  const auto docs = generate_synthetic_corpus(f.common.seed, f.n_docs, f.dist);
  write_corpus(f.common.out, docs);
  write_config_snapshot(cmd, snapshot_path(f.common.out));
  io.out << "wrote " << docs.size() << " documents to " << f.common.out << "\n";
  return 0;
}

int cmd_chunk(const ChunkFlags& f, const CLI::App& cmd, Io io) {
  require_file(f.input, "input corpus");
  require(f.common.out, "--out");
  const auto tok = make_tokenizer(f.tokenizer);
  const auto docs = read_corpus(f.input);
  std::vector<ChunkedDocument> chunked;
  chunked.reserve(docs.size());
  for (const auto& d : docs) chunked.push_back(chunk_document(d, *tok, f.chunks, f.chunk_size));
  write_chunked_corpus(f.common.out, chunked, *tok);
  write_config_snapshot(cmd, snapshot_path(f.common.out));

  std::vector<std::int64_t> pre, post;
  for (const auto& c : chunked) {
    pre.push_back(c.original_tokens);
    post.push_back(c.total_tokens);
  }
  io.out << format_token_stats_table(summarize_counts(pre, "empty corpus"), summarize_counts(post, "empty corpus"));
  io.out << "wrote " << chunked.size() << " chunked documents to " << f.common.out << "\n";
  return 0;
}

int cmd_build_dataset(const BuildFlags& f, const CLI::App& cmd, Io io) {
  require_file(f.input, "input corpus");
  require(f.common.out, "--out");
  if (f.stub == !f.endpoint.empty()) throw UsageError("give exactly one of --stub or --endpoint");

  const auto tok = make_tokenizer(f.tokenizer);
  const auto docs = read_corpus(f.input);
  std::unique_ptr<CompletionClientInterface> client;
  if (f.stub) {
    client = std::make_unique<StubCompletionClient>();
  } else {
    HttpCompletionClient::Options o;
    o.base_url = f.endpoint;
    o.path = f.endpoint_path;
    o.model = f.model;
    o.api_key_env = f.api_key_env;
    client = std::make_unique<HttpCompletionClient>(o);
  }
  BuildOptions bo;
  bo.split.test_fraction = f.test_fraction;
  bo.split.seed = f.common.seed;
  bo.retry.max_attempts = f.max_attempts;
  bo.params.seed = f.common.seed;
  bo.max_in_flight = f.max_in_flight;
  bo.chunk_count = f.chunks;
  bo.chunk_size = f.chunk_size;
  if (!f.request_pools.empty()) bo.pools = RequestPools::load(f.request_pools);

  const auto build = build_docassist(docs, *tok, *client, bo);
  const fs::path dir = f.common.out;
  fs::create_directories(dir);
  write_docassist(dir / "train.jsonl", build.train);
  write_docassist(dir / "test.jsonl", build.test);
  std::vector<json> annotations;
  for (const auto& a : build.annotations) {
    annotations.push_back({{"doc_id", a.doc_id},
                           {"summary", a.summary},
                           {"suggested_questions", a.suggested_questions},
                           {"answers", a.answers},
                           {"prompt_tokens", a.prompt_tokens},
                           {"completion_tokens", a.completion_tokens},
                           {"attempts", a.attempts},
                           {"warnings", a.warnings}});
  }
  write_jsonl(dir / "annotations.jsonl", annotations);
  write_json_file(dir / "usage.json", build.usage.to_json());
  json failures = json::array();
  for (const auto& fl : build.failures) failures.push_back({{"doc_id", fl.doc_id}, {"message", fl.message}});
  json metadata = build.metadata;
  metadata["failures"] = failures;
  write_json_file(dir / "metadata.json", metadata);
  write_config_snapshot(cmd, dir / "config.json");

  io.out << format_usage_table(build.usage);
  io.out << "examples: " << build.train.size() + build.test.size() << " (train " << build.train.size() << ", test "
         << build.test.size() << ")\n";
  io.out << "documents annotated: " << build.annotations.size() << ", failed: " << build.failures.size() << "\n";
  for (const auto& fl : build.failures) io.err << "warning: " << fl.doc_id << ": " << fl.message << "\n";
  return 0;
}

// Model, tokenizer and optimizer state for a training run.
struct TrainingSetup {
  std::unique_ptr<slm::Parameters> params;
  std::unique_ptr<VocabTokenizer> tok;
  slm::OptimizerState state;
  std::vector<double> prior_curve;
};

TrainingSetup prepare_training(const ModelFlags& m, std::uint64_t seed, const std::vector<std::string>& texts) {
  if (!m.init.empty() && !m.resume.empty()) throw UsageError("--init and --resume are mutually exclusive");
  TrainingSetup s;
  const std::string& from = !m.resume.empty() ? m.resume : m.init;
  if (!from.empty()) {
    require_file(from, "checkpoint");
    auto ck = slm::load_checkpoint(from);
    s.params = std::make_unique<slm::Parameters>(std::move(ck.params));
    s.tok = std::make_unique<VocabTokenizer>(VocabTokenizer::from_json(ck.tokenizer));
    if (!m.resume.empty()) {
      if (ck.optimizer) s.state = std::move(*ck.optimizer);
      if (ck.metadata.contains("loss_curve")) s.prior_curve = ck.metadata["loss_curve"].get<std::vector<double>>();
    }
    return s;
  }
  s.tok = std::make_unique<VocabTokenizer>(VocabTokenizer::build(texts, m.vocab_pieces));
  slm::ModelConfig cfg;
  cfg.n_layers = m.layers;
  cfg.n_heads = m.heads;
  cfg.d_model = m.d_model;
  cfg.max_seq_len = m.max_seq_len;
  cfg.bias_enabled = !m.no_bias;
  cfg.vocab_size = static_cast<int>(s.tok->vocab_size());
  s.params = std::make_unique<slm::Parameters>(cfg);
  s.params->init_random(seed);
  return s;
}

int run_training(const std::string& kind, const ModelFlags& m, const CommonFlags& common, TrainingSetup& s,
                 const std::vector<slm::Sequence>& data, json metadata, const CLI::App& cmd, Io io) {
  if (data.empty()) throw std::runtime_error("no training sequences fit the model context");
  const auto oc = optimizer_config(m, common.seed);
  if (s.state.step >= oc.steps) {
    throw UsageError("checkpoint is already at step " + std::to_string(s.state.step) + "; raise --steps");
  }
  io.out << kind << ": " << data.size() << " sequences, " << s.params->size() << " parameters, vocab "
         << s.tok->vocab_size() << "\n";
  const auto result = slm::train(*s.params, data, oc,
                                 [&](int step, double loss) {
                                   if (m.log_every > 0 && (step % m.log_every == 0 || step == 1)) {
                                     io.out << "step " << step << " loss " << loss << "\n";
                                   }
                                 },
                                 &s.state);
  std::vector<double> curve = s.prior_curve;
  curve.insert(curve.end(), result.loss_curve.begin(), result.loss_curve.end());

  metadata["kind"] = kind;
  metadata["optimizer"] = oc.to_json();
  metadata["loss_curve"] = curve;
  metadata["sequences"] = data.size();
  if (!m.preset.empty()) metadata["preset"] = slm::preset(m.preset).to_json();
  slm::save_checkpoint(common.out, *s.params, s.tok->to_json(), metadata, &s.state);
  slm::write_loss_csv(common.out + ".loss.csv", curve);
  write_config_snapshot(cmd, snapshot_path(common.out));
  io.out << "final loss " << result.loss_curve.back() << "; wrote " << common.out << "\n";
  return 0;
}

int cmd_train(const TrainFlags& f, const CLI::App& cmd, Io io) {
  require_file(f.input, "input corpus");
  require(f.common.out, "--out");
  const auto docs = read_corpus(f.input);
  std::vector<std::string> texts;
  for (const auto& d : docs) texts.push_back(d.text);
  auto s = prepare_training(f.model, f.common.seed, texts);
  const std::size_t window = static_cast<std::size_t>(s.params->config().max_seq_len);
  std::vector<slm::Sequence> data;
  for (const auto& t : texts) {
    const TokenSeq ids = s.tok->encode(t);
    for (std::size_t at = 0; at + 1 < ids.size(); at += window) {
      TokenSeq w(ids.begin() + static_cast<std::ptrdiff_t>(at),
                 ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), at + window)));
      if (w.size() >= 2) data.push_back(slm::pretrain_sequence(std::move(w), s.params->config()));
    }
  }
  return run_training("pretrain", f.model, f.common, s, data, json::object(), cmd, io);
}

int cmd_finetune(const TrainFlags& f, const CLI::App& cmd, Io io) {
  require_file(f.input, "training set");
  require(f.common.out, "--out");
  const auto examples = read_docassist(f.input);
  auto s = prepare_training(f.model, f.common.seed, finetune_texts(examples));
  const auto enc = encode_examples(examples, *s.tok, s.params->config());
  if (enc.skipped > 0) {
    io.err << "warning: skipped " << enc.skipped << " of " << examples.size()
           << " examples longer than max_seq_len " << s.params->config().max_seq_len << "\n";
  }
  return run_training("finetune", f.model, f.common, s, enc.sequences, json{{"skipped", enc.skipped}}, cmd, io);
}

int cmd_eval(const EvalFlags& f, const CLI::App& cmd, Io io) {
  require_file(f.input, "test set");
  const int sources = int{f.gold} + int{!f.checkpoint.empty()} + int{!f.predictions.empty()};
  if (sources != 1) throw UsageError("give exactly one of --checkpoint, --predictions or --gold");
  const auto test = read_docassist(f.input);
  if (test.empty()) throw std::runtime_error("test set is empty");

  std::vector<std::string> outputs;
  if (f.gold) {
    for (const auto& ex : test) outputs.push_back(serialize_reply({ex.task, ex.target}));
  } else if (!f.predictions.empty()) {
    require_file(f.predictions, "predictions file");
    for (const auto& row : read_jsonl(f.predictions)) outputs.push_back(row.at("prediction").get<std::string>());
    if (outputs.size() != test.size()) {
      throw std::runtime_error("predictions file has " + std::to_string(outputs.size()) + " rows, test set has " +
                               std::to_string(test.size()));
    }
  } else {
    require_file(f.checkpoint, "checkpoint");
    const auto ck = slm::load_checkpoint(f.checkpoint);
    const auto tok = VocabTokenizer::from_json(ck.tokenizer);
    std::size_t failed = 0;
    for (const auto& ex : test) {
      try {
        outputs.push_back(generate_reply(ck.params, tok, finetune_text(ex).prompt, f.max_new));
      } catch (const std::length_error&) {
        ++failed;
        outputs.emplace_back();
      }
    }
    if (failed > 0) io.err << "warning: " << failed << " prompts did not fit the model context\n";
    if (!f.common.out.empty()) {
      std::vector<json> rows;
      for (std::size_t i = 0; i < test.size(); ++i) {
        rows.push_back({{"doc_id", test[i].doc_id}, {"task", to_string(test[i].task)}, {"prediction", outputs[i]}});
      }
      write_jsonl(f.common.out + ".predictions.jsonl", rows);
    }
  }

  std::vector<std::optional<Intent>> predicted;
  std::vector<Intent> gold;
  std::map<Intent, std::vector<EvalPair>> pairs;
  std::size_t unparseable = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto reply = try_parse_reply(outputs[i]);
    if (!reply) ++unparseable;
    predicted.push_back(reply ? std::optional<Intent>(reply->intent) : std::nullopt);
    gold.push_back(test[i].task);
    pairs[test[i].task].push_back({reply ? reply->response : outputs[i], test[i].target, test[i].document_text});
  }

  const HashedBagEmbedder embedder;
  std::unique_ptr<StubJudge> judge;
  if (f.judge_score > 0.0) judge = std::make_unique<StubJudge>(f.judge_score);
  std::map<Intent, TaskReport> reports;
  for (Intent task : kAllIntents) {
    if (!pairs.contains(task)) continue;
    reports[task] = evaluate_task(pairs[task], task, embedder, judge.get());
    io.out << format_task_table(f.model_name, reports[task]) << "\n";
  }
  json report{{"model", f.model_name}, {"n", test.size()}, {"unparseable", unparseable}};
  for (const auto& [task, r] : reports) report["tasks"][std::string(to_string(task))] = r.to_json();
  if (reports.size() == std::size(kAllIntents)) {
    const auto overall = aggregate_overall(reports[Intent::summarization], reports[Intent::question_suggestion],
                                           reports[Intent::question_answering]);
    io.out << format_overall_table(f.model_name, overall) << "\n";
    report["overall"] = overall.to_json();
  }
  const double acc = intent_accuracy(predicted, gold);
  io.out << format_intent_table(f.model_name, acc);
  report["intent_accuracy"] = acc;
  if (unparseable > 0) io.err << "warning: " << unparseable << " outputs did not follow the reply protocol\n";
  if (!f.common.out.empty()) {
    write_json_file(f.common.out, report);
    write_config_snapshot(cmd, snapshot_path(f.common.out));
  }
  return 0;
}

int cmd_bench(const BenchFlags& f, const CLI::App& cmd, Io io) {
  if (f.manifest.empty() == f.simulated.empty()) throw UsageError("give exactly one of --manifest or --simulated");
  std::vector<std::unique_ptr<bench::GenerationBackendInterface>> backends;
  if (!f.manifest.empty()) {
    require_file(f.manifest, "backend manifest");
    backends = bench::load_manifest(f.manifest);
  } else {
    const auto comma = f.simulated.find(',');
    if (comma == std::string::npos) throw UsageError("--simulated expects PREFILL,DECODE rates in tokens/s");
    backends.push_back(std::make_unique<bench::SimulatedBackend>(
        std::stod(f.simulated.substr(0, comma)), std::stod(f.simulated.substr(comma + 1)),
        bench::SimulatedBackend::counting_script(f.max_new)));
  }

  const auto tok = make_tokenizer(f.tokenizer);
  Document doc;
  if (!f.corpus.empty()) {
    require_file(f.corpus, "corpus");
    const auto docs = read_corpus(f.corpus);
    auto it = std::find_if(docs.begin(), docs.end(), [&](const Document& d) {
      return f.doc_id.empty() ? tok->count(d.text) >= static_cast<std::size_t>(kDefaultChunkSize) *
                                                          static_cast<std::size_t>(*std::max_element(
                                                              f.chunks.begin(), f.chunks.end()))
                              : d.id == f.doc_id;
    });
    if (it == docs.end()) throw std::runtime_error("no suitable document in " + f.corpus);
    doc = *it;
  } else {
    doc = generate_synthetic_corpus(f.common.seed, 1, LengthDistribution{1000.0, 0.0, 1000, 1000}).front();
  }
  const auto cd = chunk_document(doc, *tok);

  bench::SweepConfig sc;
  sc.chunk_counts = f.chunks;
  sc.repeats = f.repeats;
  sc.max_new = f.max_new;
  sc.warmup_runs = f.warmup;
  bench::SweepReport report;
  for (auto& b : backends) {
    report.merge(bench::sweep(*b, cd, *tok, sc, [&](const bench::SweepCell& c) {
      io.err << b->name() << " chunks=" << c.chunk_count << " ok=" << c.n_ok << " failed=" << c.n_failed << "\n";
    }));
  }
  io.out << bench::render_report(report);
  if (!f.common.out.empty()) {
    json j = report.to_json();
    j["document"] = doc.id;
    j["config"] = sc.to_json();
    write_json_file(f.common.out, j);
    write_config_snapshot(cmd, snapshot_path(f.common.out));
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, Io io) {
  CLI::App app{"Document-assistance toolkit for small language models", "docslm"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenCorpusFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Write a synthetic corpus (JSONL)");
  add_common(gen_cmd, gen.common, "Output corpus path");
  gen_cmd->add_option("--n-docs", gen.n_docs, "Number of documents");
  gen_cmd->add_option("--mean", gen.dist.mean, "Mean length in tokens");
  gen_cmd->add_option("--std", gen.dist.std, "Length standard deviation");
  gen_cmd->add_option("--min", gen.dist.min, "Minimum length");
  gen_cmd->add_option("--max", gen.dist.max, "Maximum length");

  ChunkFlags chunk;
  auto* chunk_cmd = app.add_subcommand("chunk", "Chunk a corpus and print token statistics");
  add_common(chunk_cmd, chunk.common, "Output chunked corpus path");
  chunk_cmd->add_option("input", chunk.input, "Corpus JSONL");
  chunk_cmd->add_option("--tokenizer", chunk.tokenizer, "fallback or vocab:<path>");
  chunk_cmd->add_option("--chunks", chunk.chunks, "Maximum chunks per document");
  chunk_cmd->add_option("--chunk-size", chunk.chunk_size, "Tokens per chunk");

  BuildFlags build;
  auto* build_cmd = app.add_subcommand("build-dataset", "Annotate a corpus and write the DocAssist splits");
  add_common(build_cmd, build.common, "Output directory");
  build_cmd->add_option("input", build.input, "Corpus JSONL");
  build_cmd->add_option("--tokenizer", build.tokenizer, "fallback or vocab:<path>");
  build_cmd->add_flag("--stub", build.stub, "Use the offline stub annotator");
  build_cmd->add_option("--endpoint", build.endpoint, "Base URL of a chat-completion endpoint");
  build_cmd->add_option("--endpoint-path", build.endpoint_path, "Request path on the endpoint");
  build_cmd->add_option("--model", build.model, "Model name sent to the endpoint");
  build_cmd->add_option("--api-key-env", build.api_key_env, "Environment variable holding the API key");
  build_cmd->add_option("--test-fraction", build.test_fraction, "Fraction of examples held out");
  build_cmd->add_option("--max-in-flight", build.max_in_flight, "Concurrent annotation requests");
  build_cmd->add_option("--max-attempts", build.max_attempts, "Attempts per document");
  build_cmd->add_option("--chunks", build.chunks, "Maximum chunks per document");
  build_cmd->add_option("--chunk-size", build.chunk_size, "Tokens per chunk");
  build_cmd->add_option("--request-pools", build.request_pools, "JSON file of request phrasings");

  TrainFlags train;
  auto* train_cmd = app.add_subcommand("train", "Pre-train on a corpus with the language-modeling loss");
  add_common(train_cmd, train.common, "Output checkpoint path");
  train_cmd->add_option("input", train.input, "Corpus JSONL");
  add_model_flags(train_cmd, train.model);

  TrainFlags finetune;
  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune on DocAssist examples (loss on replies only)");
  add_common(finetune_cmd, finetune.common, "Output checkpoint path");
  finetune_cmd->add_option("input", finetune.input, "DocAssist JSONL");
  add_model_flags(finetune_cmd, finetune.model);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a DocAssist test set");
  add_common(eval_cmd, eval.common, "Output report JSON");
  eval_cmd->add_option("input", eval.input, "DocAssist test JSONL");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Generate predictions with this checkpoint");
  eval_cmd->add_option("--predictions", eval.predictions, "JSONL of {\"prediction\": ...} rows in test order");
  eval_cmd->add_flag("--gold", eval.gold, "Use the gold replies as predictions");
  eval_cmd->add_option("--judge-score", eval.judge_score, "Constant judge score in [1, 4.5]; 0 leaves GEval out");
  eval_cmd->add_option("--max-new", eval.max_new, "Maximum generated tokens");
  eval_cmd->add_option("--model-name", eval.model_name, "Row label in the tables");

  BenchFlags bench_flags;
  auto* bench_cmd = app.add_subcommand("bench", "Chunk-sweep efficiency benchmark");
  add_common(bench_cmd, bench_flags.common, "Output report JSON");
  bench_cmd->add_option("--manifest", bench_flags.manifest, "Backend manifest JSON");
  bench_cmd->add_option("--simulated", bench_flags.simulated, "PREFILL,DECODE rates of a simulated backend");
  bench_cmd->add_option("--corpus", bench_flags.corpus, "Corpus JSONL holding the benchmark document");
  bench_cmd->add_option("--doc-id", bench_flags.doc_id, "Document id within the corpus");
  bench_cmd->add_option("--tokenizer", bench_flags.tokenizer, "Tokenizer used to chunk the document");
  bench_cmd->add_option("--chunks", bench_flags.chunks, "Chunk counts to sweep")->delimiter(',');
  bench_cmd->add_option("--repeats", bench_flags.repeats, "Prompts per cell");
  bench_cmd->add_option("--max-new", bench_flags.max_new, "Maximum generated tokens");
  bench_cmd->add_option("--warmup", bench_flags.warmup, "Untimed runs before each cell");

  ChatOptions chat;
  std::string chat_config;
  auto* chat_cmd = app.add_subcommand("chat", "Chat about a document with a fine-tuned checkpoint");
  chat_cmd->add_option("--config", chat_config, "Flat JSON file of settings");
  chat_cmd->add_option("--checkpoint", chat.checkpoint, "Fine-tuned checkpoint");
  chat_cmd->add_option("--document", chat.document, "Plain-text document");
  chat_cmd->add_option("--out", chat.session_log, "Session log (appended); defaults to <document>.session.log");
  chat_cmd->add_option("--max-new", chat.max_new, "Maximum generated tokens per reply");
  chat_cmd->add_option("--tokenizer", chat.tokenizer, "Tokenizer used to chunk the document");

  std::vector<const char*> argv{"docslm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, io.out, io.err);
  }

  const auto with_config = [](CLI::App* cmd, const std::string& path) {
    if (path.empty()) return;
    require_file(path, "config file");
    try {
      apply_json_config(*cmd, path);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  };
  try {
    if (gen_cmd->parsed()) {
      with_config(gen_cmd, gen.common.config);
      return cmd_gen_corpus(gen, *gen_cmd, io);
    }
    if (chunk_cmd->parsed()) {
      with_config(chunk_cmd, chunk.common.config);
      return cmd_chunk(chunk, *chunk_cmd, io);
    }
    if (build_cmd->parsed()) {
      with_config(build_cmd, build.common.config);
      return cmd_build_dataset(build, *build_cmd, io);
    }
    if (train_cmd->parsed()) {
      with_config(train_cmd, train.common.config);
      return cmd_train(train, *train_cmd, io);
    }
    if (finetune_cmd->parsed()) {
      with_config(finetune_cmd, finetune.common.config);
      return cmd_finetune(finetune, *finetune_cmd, io);
    }
    if (eval_cmd->parsed()) {
      with_config(eval_cmd, eval.common.config);
      return cmd_eval(eval, *eval_cmd, io);
    }
    if (bench_cmd->parsed()) {
      with_config(bench_cmd, bench_flags.common.config);
      return cmd_bench(bench_flags, *bench_cmd, io);
    }
    if (chat_cmd->parsed()) {
      with_config(chat_cmd, chat_config);
      require_file(chat.checkpoint, "checkpoint");
      require_file(chat.document, "document");
      if (chat.session_log.empty()) chat.session_log = chat.document + ".session.log";
      return run_chat(chat, io);
    }
  } catch (const UsageError& e) {
    io.err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    io.err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace docslm::cli
