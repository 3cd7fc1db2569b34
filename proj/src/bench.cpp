#include "docslm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "docslm/format.hpp"
#include "docslm/http.hpp"
#include "docslm/jsonl.hpp"
#include "docslm/prompts.hpp"

namespace docslm::bench {

using Clock = std::chrono::steady_clock;

namespace {

double seconds(Clock::duration d) { return std::chrono::duration<double>(d).count(); }

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json EfficiencyRecord::to_json() const {
  return {{"prompt_tokens", prompt_tokens}, {"output_tokens", output_tokens}, {"ttft_s", ttft_s},
          {"itps", itps},                   {"otps", optional_number(otps)},  {"runtime_s", runtime_s}};
}

EfficiencyRecord EfficiencyRecord::from_json(const nlohmann::json& j) {
  EfficiencyRecord r;
  r.prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
  r.output_tokens = j.at("output_tokens").get<std::int64_t>();
  r.ttft_s = j.at("ttft_s").get<double>();
  r.itps = j.at("itps").get<double>();
  if (j.contains("otps") && !j["otps"].is_null()) r.otps = j["otps"].get<double>();
  r.runtime_s = j.at("runtime_s").get<double>();
  return r;
}

EfficiencyRecord measure(GenerationBackendInterface& backend, const std::string& prompt, int max_new) {
  if (max_new < 1) throw std::invalid_argument("max_new must be >= 1");
  EfficiencyRecord r;
  r.prompt_tokens = static_cast<std::int64_t>(backend.count_prompt_tokens(prompt));

  Clock::time_point first{};
  std::int64_t n = 0;
  const auto start = Clock::now();
  backend.generate(prompt, max_new, [&](TokenId, std::string_view) {
    const auto now = Clock::now();
    if (n == 0) first = now;
    ++n;
  });
  const auto end = Clock::now();
  if (n == 0) throw std::runtime_error("no output");

  r.output_tokens = n;
  r.ttft_s = seconds(first - start);
  r.runtime_s = seconds(end - start);
  // A zero-length interval is below clock resolution; keep the rates finite.
  const double ttft = std::max(r.ttft_s, 1e-9);
  r.itps = static_cast<double>(r.prompt_tokens) / ttft;
  if (n >= 2) r.otps = static_cast<double>(n - 1) / std::max(seconds(end - first), 1e-9);
  return r;
}

EfficiencyRecord mean_record(const std::vector<EfficiencyRecord>& records) {
  if (records.empty()) throw std::invalid_argument("no records to average");
  EfficiencyRecord m;
  double prompt = 0, output = 0, otps = 0;
  int n_otps = 0;
  for (const auto& r : records) {
    prompt += static_cast<double>(r.prompt_tokens);
    output += static_cast<double>(r.output_tokens);
    m.ttft_s += r.ttft_s;
    m.itps += r.itps;
    m.runtime_s += r.runtime_s;
    if (r.otps) {
      otps += *r.otps;
      ++n_otps;
    }
  }
  const double n = static_cast<double>(records.size());
  m.prompt_tokens = std::llround(prompt / n);
  m.output_tokens = std::llround(output / n);
  m.ttft_s /= n;
  m.itps /= n;
  m.runtime_s /= n;
  if (n_otps > 0) m.otps = otps / n_otps;
  return m;
}

// ---------------------------------------------------------------------------

void SweepConfig::validate() const {
  if (chunk_counts.empty()) throw std::invalid_argument("no chunk counts to sweep");
  for (std::size_t i = 0; i < chunk_counts.size(); ++i) {
    if (chunk_counts[i] < 0 || chunk_counts[i] > kDefaultChunkCount) {
      throw std::invalid_argument("chunk counts must lie in 0.." + std::to_string(kDefaultChunkCount));
    }
    if (i > 0 && chunk_counts[i] <= chunk_counts[i - 1]) {
      throw std::invalid_argument("chunk counts must be strictly ascending");
    }
  }
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  if (max_new < 1) throw std::invalid_argument("max_new must be >= 1");
  if (warmup_runs < 0) throw std::invalid_argument("warmup_runs must be >= 0");
}

nlohmann::json SweepConfig::to_json() const {
  return {{"chunk_counts", chunk_counts}, {"repeats", repeats}, {"max_new", max_new}, {"warmup_runs", warmup_runs}};
}

nlohmann::json SweepCell::to_json() const {
  return {{"model", model},
          {"chunk_count", chunk_count},
          {"n_ok", n_ok},
          {"n_failed", n_failed},
          {"mean", mean ? mean->to_json() : nlohmann::json(nullptr)},
          {"errors", errors}};
}

SweepCell SweepCell::from_json(const nlohmann::json& j) {
  SweepCell c;
  c.model = j.at("model").get<std::string>();
  c.chunk_count = j.at("chunk_count").get<int>();
  c.n_ok = j.value("n_ok", 0);
  c.n_failed = j.value("n_failed", 0);
  if (j.contains("mean") && !j["mean"].is_null()) c.mean = EfficiencyRecord::from_json(j["mean"]);
  c.errors = j.value("errors", std::vector<std::string>{});
  return c;
}

std::vector<std::string> SweepReport::models() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.model) == out.end()) out.push_back(c.model);
  }
  return out;
}

std::vector<int> SweepReport::chunk_counts() const {
  std::vector<int> out;
  for (const auto& c : cells) out.push_back(c.chunk_count);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const SweepCell* SweepReport::find(std::string_view model, int chunk_count) const {
  for (const auto& c : cells) {
    if (c.model == model && c.chunk_count == chunk_count) return &c;
  }
  return nullptr;
}

void SweepReport::merge(const SweepReport& other) {
  for (const auto& c : other.cells) {
    auto it = std::find_if(cells.begin(), cells.end(),
                           [&](const SweepCell& x) { return x.model == c.model && x.chunk_count == c.chunk_count; });
    if (it != cells.end()) {
      *it = c;
    } else {
      cells.push_back(c);
    }
  }
}

nlohmann::json SweepReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) arr.push_back(c.to_json());
  return {{"metric_definitions", kMetricDefinitions}, {"cells", arr}};
}

SweepReport SweepReport::from_json(const nlohmann::json& j) {
  SweepReport r;
  for (const auto& c : j.at("cells")) r.cells.push_back(SweepCell::from_json(c));
  return r;
}

SweepReport sweep(GenerationBackendInterface& backend, const ChunkedDocument& doc,
                  const TokenizerInterface& doc_tokenizer, const SweepConfig& cfg,
                  const std::function<void(const SweepCell&)>& on_cell) {
  cfg.validate();
  const int needed = cfg.chunk_counts.back();
  if (static_cast<int>(doc.chunks.size()) < needed) {
    throw std::invalid_argument("document " + doc.doc_id + " has " + std::to_string(doc.chunks.size()) +
                                " chunks; the sweep needs " + std::to_string(needed));
  }
  SweepReport report;
  for (int k : cfg.chunk_counts) {
    const auto prompts =
        k == 0 ? benchmark_prompt_set(BenchmarkPromptKind::bare_question, nullptr, nullptr, 0)
               : benchmark_prompt_set(BenchmarkPromptKind::summarize_chunks, &doc, &doc_tokenizer, k);
    SweepCell cell;
    cell.model = backend.name();
    cell.chunk_count = k;
    for (int w = 0; w < cfg.warmup_runs; ++w) {
      try {
        measure(backend, prompts[static_cast<std::size_t>(w) % prompts.size()], cfg.max_new);
      } catch (const std::exception&) {
        // warm-up failures surface again in the timed runs
      }
    }
    std::vector<EfficiencyRecord> records;
    for (int i = 0; i < cfg.repeats; ++i) {
      try {
        records.push_back(measure(backend, prompts[static_cast<std::size_t>(i) % prompts.size()], cfg.max_new));
      } catch (const std::exception& e) {
        ++cell.n_failed;
        cell.errors.push_back(e.what());
      }
    }
    cell.n_ok = static_cast<int>(records.size());
    if (!records.empty()) cell.mean = mean_record(records);
    if (on_cell) on_cell(cell);
    report.cells.push_back(std::move(cell));
  }
  return report;
}

std::string panel_title(int chunk_count) {
  const char letter = static_cast<char>('a' + chunk_count);
  std::string title = std::string("(") + letter + ") Prompt: ";
  if (chunk_count == 0) return title + "questions only";
  title += std::to_string(chunk_count) + (chunk_count == 1 ? " chunk" : " chunks");
  return title + " ~ " + std::to_string(chunk_count * kDefaultChunkSize) + " tokens";
}

std::string render_report(const SweepReport& report) {
  std::string out = "Metrics: ";
  out += kMetricDefinitions;
  out += "\n";
  const auto models = report.models();
  for (int k : report.chunk_counts()) {
    out += "\n" + panel_title(k) + "\n";
    std::vector<std::vector<std::string>> rows{{"Model", "ITPS (t/s)", "OTPS (t/s)", "TTFT (s)", "Runtime (s)"}};
    for (const auto& m : models) {
      const SweepCell* c = report.find(m, k);
      if (c == nullptr) continue;
      if (c->incomplete()) {
        rows.push_back({m, "—", "—", "—", "—"});
        continue;
      }
      const auto& r = *c->mean;
      rows.push_back({m, fixed(r.itps, 2), r.otps ? fixed(*r.otps, 2) : "—", fixed(r.ttft_s, 2), fixed(r.runtime_s, 2)});
    }
    out += render_table(rows);
  }
  return out;
}

// ---------------------------------------------------------------------------

SimulatedBackend::SimulatedBackend(double prefill_rate, double decode_rate, TokenSeq script, std::string name,
                                   std::shared_ptr<const TokenizerInterface> tokenizer)
    : prefill_rate_(prefill_rate),
      decode_rate_(decode_rate),
      script_(std::move(script)),
      name_(std::move(name)),
      tokenizer_(tokenizer ? std::move(tokenizer) : std::make_shared<FallbackTokenizer>()) {
  if (!(prefill_rate_ > 0.0) || !(decode_rate_ > 0.0)) throw std::invalid_argument("rates must be positive");
}

TokenSeq SimulatedBackend::counting_script(int n) {
  TokenSeq s(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = static_cast<TokenId>('a' + i % 26);
  return s;
}

void SimulatedBackend::generate(const std::string& prompt, int max_new, const TokenSink& on_token) {
  const auto start = Clock::now();
  const double prompt_tokens = static_cast<double>(tokenizer_->count(prompt));
  const auto to_duration = [](double s) {
    return std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s));
  };
  auto deadline = start + to_duration(prompt_tokens / prefill_rate_);
  const auto gap = to_duration(1.0 / decode_rate_);
  const std::size_t n = std::min(script_.size(), static_cast<std::size_t>(std::max(max_new, 0)));
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) deadline += gap;
    std::this_thread::sleep_until(deadline);
    const TokenId id = script_[i];
    const char c = static_cast<char>(id & 0xff);
    on_token(id, std::string_view(&c, 1));
  }
}

SlmBackend::SlmBackend(std::shared_ptr<const slm::Parameters> params,
                       std::shared_ptr<const TokenizerInterface> tokenizer, std::string name,
                       slm::DecodeOptions decode)
    : params_(std::move(params)), tokenizer_(std::move(tokenizer)), name_(std::move(name)), decode_(decode) {
  if (!params_ || !tokenizer_) throw std::invalid_argument("slm backend needs parameters and a tokenizer");
}

std::unique_ptr<SlmBackend> SlmBackend::from_checkpoint(const std::filesystem::path& path, std::string name,
                                                        slm::DecodeOptions decode) {
  auto ck = slm::load_checkpoint(path);
  auto tok = std::make_shared<VocabTokenizer>(VocabTokenizer::from_json(ck.tokenizer));
  if (!decode.eos) decode.eos = VocabTokenizer::kEos;
  auto params = std::make_shared<const slm::Parameters>(std::move(ck.params));
  return std::make_unique<SlmBackend>(std::move(params), std::move(tok), std::move(name), decode);
}

void SlmBackend::generate(const std::string& prompt, int max_new, const TokenSink& on_token) {
  const TokenSeq ids = tokenizer_->encode(prompt);
  slm::generate(*params_, ids, max_new, decode_, [&](TokenId id) {
    const TokenId one[1] = {id};
    on_token(id, tokenizer_->decode(one));
    return true;
  });
}

HttpStreamingBackend::HttpStreamingBackend(Options options)
    : options_(std::move(options)), tokenizer_(make_tokenizer(options_.tokenizer)) {}

void HttpStreamingBackend::generate(const std::string& prompt, int max_new, const TokenSink& on_token) {
  nlohmann::json body{{"model", options_.model}, {"prompt", prompt}, {"max_tokens", max_new}, {"stream", true}};
  HttpHeaders headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  }
  SseParser parser;
  bool done = false;
  std::string error;
  HttpResponse res;
  try {
    res = http_post(options_.base_url, options_.path, body.dump(), headers, options_.timeout_s,
                             [&](std::string_view bytes) {
                               parser.feed(bytes, [&](std::string_view data) {
                                 if (done) return;
                                 if (data == "[DONE]") {
                                   done = true;
                                   return;
                                 }
                                 try {
                                   const auto j = nlohmann::json::parse(data);
                                   const auto text = j.at("choices").at(0).value("text", std::string());
                                   if (!text.empty()) on_token(-1, text);
                                 } catch (const nlohmann::json::exception& e) {
                                   if (error.empty()) error = std::string("bad stream event: ") + e.what();
                                 }
                               });
                               return error.empty();
                             });
  } catch (const std::exception&) {
    // Aborting the stream surfaces as a transport error; report the cause.
    if (error.empty()) throw;
  }
  if (!error.empty()) throw std::runtime_error(error);
  if (res.status != 200) throw std::runtime_error("endpoint returned HTTP " + std::to_string(res.status));
}

// ---------------------------------------------------------------------------

std::unique_ptr<GenerationBackendInterface> make_backend(const nlohmann::json& entry,
                                                         const std::filesystem::path& base_dir) {
  const std::string adapter = entry.at("adapter").get<std::string>();
  const std::string name = entry.value("name", adapter);
  if (adapter == "simulated") {
    return std::make_unique<SimulatedBackend>(entry.at("prefill_rate").get<double>(),
                                              entry.at("decode_rate").get<double>(),
                                              SimulatedBackend::counting_script(entry.value("script_length", 256)),
                                              name);
  }
  if (adapter == "slm") {
    std::filesystem::path ck = entry.at("checkpoint").get<std::string>();
    if (ck.is_relative()) ck = base_dir / ck;
    slm::DecodeOptions decode;
    if (entry.contains("temperature")) {
      decode.mode = slm::DecodeMode::temperature;
      decode.temperature = entry["temperature"].get<double>();
      decode.seed = entry.value("seed", std::uint64_t{0});
    }
    return SlmBackend::from_checkpoint(ck, name, decode);
  }
  if (adapter == "http") {
    HttpStreamingBackend::Options o;
    o.name = name;
    o.base_url = entry.value("base_url", o.base_url);
    o.path = entry.value("path", o.path);
    o.model = entry.value("model", o.model);
    o.api_key_env = entry.value("api_key_env", o.api_key_env);
    o.timeout_s = entry.value("timeout_s", o.timeout_s);
    o.tokenizer = entry.value("tokenizer", o.tokenizer);
    return std::make_unique<HttpStreamingBackend>(o);
  }
  throw std::invalid_argument("unknown backend adapter: " + adapter);
}

std::vector<std::unique_ptr<GenerationBackendInterface>> load_manifest(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  std::vector<std::unique_ptr<GenerationBackendInterface>> out;
  for (const auto& entry : j.at("backends")) out.push_back(make_backend(entry, path.parent_path()));
  if (out.empty()) throw std::invalid_argument(path.string() + ": manifest lists no backends");
  return out;
}

}  // namespace docslm::bench
