#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <set>
#include <thread>

#include "docslm/annotator.hpp"
#include "docslm/jsonl.hpp"
#include "test_util.hpp"

using namespace docslm;
using docslm::testing::TempDir;

namespace {

const std::string kGood = R"({"tasks": {"summarization": "A short summary.",
  "question_suggestion": ["What is A?", "What is B?", "What is C?"],
  "question_answering": ["A is one.", "B is two.", "C is three."]}})";

ChunkedDocument sample_chunked(const TokenizerInterface& tok) {
  return chunk_document({"doc-1", "Alpha reports growth. Beta tracks cost. Gamma lists risks.", SourceKind::slide},
                        tok);
}

// Local chat-completion endpoint on an ephemeral port.
class FakeEndpoint {
 public:
  explicit FakeEndpoint(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("annotation JSON schema") {
  std::string err;
  const auto p = parse_annotation_json(kGood, &err);
  REQUIRE(p.has_value());
  CHECK(p->summary == "A short summary.");
  CHECK(p->questions.size() == 3);
  CHECK(p->answers[2] == "C is three.");

  CHECK(parse_annotation_json("```json\n" + kGood + "\n```", &err).has_value());
  const std::string inner = kGood.substr(1, kGood.size() - 2);
  CHECK(parse_annotation_json(inner, &err).has_value());

  CHECK_FALSE(parse_annotation_json("not json", &err));
  CHECK(err.find("invalid JSON") != std::string::npos);
  CHECK_FALSE(parse_annotation_json(R"({"summary": "x"})", &err));
  CHECK(err == "missing \"tasks\" object");
  CHECK_FALSE(parse_annotation_json(R"({"tasks": {"summarization": "  ", "question_suggestion": [], "question_answering": []}})", &err));
  CHECK(err == "summarization is empty");
  CHECK_FALSE(parse_annotation_json(R"({"tasks": {"summarization": "s", "question_suggestion": ["a", "b"], "question_answering": ["1", "2", "3"]}})", &err));
  CHECK(err.find("expected 3") != std::string::npos);
  CHECK_FALSE(parse_annotation_json(R"({"tasks": {"summarization": "s", "question_suggestion": ["a", "b", 3], "question_answering": ["1", "2", "3"]}})", &err));
  CHECK_FALSE(parse_annotation_json(R"({"tasks": {"summarization": "s", "question_suggestion": ["a", "b", "c"]}})", &err));
  CHECK(err == "question_answering must be an array");
}

TEST_CASE("stub client answers deterministically from the document") {
  FallbackTokenizer tok;
  StubCompletionClient client;
  const auto cd = sample_chunked(tok);
  const auto a = annotate_document(cd, tok, client);
  const auto b = annotate_document(cd, tok, client);
  CHECK(a.summary == b.summary);
  CHECK(a.summary.find("alpha") != std::string::npos);
  CHECK(a.suggested_questions.size() == 3);
  CHECK(a.attempts == 1);
  CHECK(a.prompt_tokens == static_cast<std::int64_t>(split_pieces(client.prompts().front()).size()));
  CHECK(client.call_count() == 2);
  CHECK(client.prompts()[0].find("### Document Excerpt 1:") != std::string::npos);
}

TEST_CASE("retries on schema failures and accumulates usage") {
  FallbackTokenizer tok;
  StubCompletionClient client([](const std::string&, int call) { return call < 2 ? std::string("oops") : kGood; });
  const auto r = annotate_document(sample_chunked(tok), tok, client, RetryPolicy{3});
  CHECK(r.attempts == 3);
  CHECK(r.completion_tokens == 2 * 1 + static_cast<std::int64_t>(split_pieces(kGood).size()));

  StubCompletionClient bad([](const std::string&, int) { return std::string("{\"tasks\": {}}"); });
  try {
    annotate_document(sample_chunked(tok), tok, bad, RetryPolicy{2});
    FAIL("expected AnnotationError");
  } catch (const AnnotationError& e) {
    CHECK(e.attempts() == 2);
    CHECK(e.raw_text() == "{\"tasks\": {}}");
  }
  CHECK(bad.call_count() == 2);

  StubCompletionClient broken([](const std::string&, int) -> std::string { throw std::runtime_error("down"); });
  CHECK_THROWS_AS(annotate_document(sample_chunked(tok), tok, broken), CompletionTransportError);
  CHECK(broken.call_count() == 1);
  CHECK_THROWS_AS(annotate_document(sample_chunked(tok), tok, client, RetryPolicy{0}), std::invalid_argument);
}

TEST_CASE("long questions are flagged, not rejected") {
  FallbackTokenizer tok;
  StubCompletionClient client([](const std::string&, int) {
    return std::string(R"({"tasks": {"summarization": "s",
      "question_suggestion": ["one two three four five six seven eight nine ten eleven twelve?", "b?", "c?"],
      "question_answering": ["1", "2", "3"]}})");
  });
  const auto r = annotate_document(sample_chunked(tok), tok, client);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("question 1 has 12 words") != std::string::npos);
}

TEST_CASE("expand_annotation yields five examples") {
  AnnotationResult a;
  a.doc_id = "d";
  a.summary = "sum";
  a.suggested_questions = {"q1?", "q2?", "q3?"};
  a.answers = {"a1", "a2", "a3"};
  const auto pools = RequestPools::defaults();
  const auto ex = expand_annotation(a, "text", pools, 4);
  REQUIRE(ex.size() == 5);
  CHECK(ex[0].task == Intent::summarization);
  CHECK(std::find(pools.summarization.begin(), pools.summarization.end(), ex[0].request) != pools.summarization.end());
  CHECK(ex[1].task == Intent::question_suggestion);
  CHECK(nlohmann::json::parse(ex[1].target) == nlohmann::json({"q1?", "q2?", "q3?"}));
  CHECK(ex[4].request == "q3?");
  CHECK(ex[4].target == "a3");
  CHECK(expand_annotation(a, "text", pools, 4) == ex);
  a.answers.pop_back();
  CHECK_THROWS_AS(expand_annotation(a, "text", pools, 4), std::invalid_argument);

  const auto ft = finetune_text(ex[2]);
  CHECK(ft.prompt.find("<request>\nq1?\n</request>") != std::string::npos);
  CHECK(parse_reply(ft.target) == AssistantReply{Intent::question_answering, "a1"});
}

TEST_CASE("split is seeded and sized by rounding") {
  std::vector<DocAssistExample> all;
  for (int i = 0; i < 100; ++i) all.push_back({"d" + std::to_string(i), Intent::summarization, "r", "t", "x"});
  std::vector<DocAssistExample> tr1, te1, tr2, te2, tr3, te3;
  split_examples(all, {0.1, 7}, tr1, te1);
  split_examples(all, {0.1, 7}, tr2, te2);
  split_examples(all, {0.1, 8}, tr3, te3);
  CHECK(te1.size() == 10);
  CHECK(tr1.size() == 90);
  CHECK(te1 == te2);
  CHECK(te1 != te3);
  split_examples(all, {0.005, 7}, tr1, te1);
  CHECK(te1.size() == 1);
  split_examples(all, {0.0, 7}, tr1, te1);
  CHECK(te1.empty());
  CHECK_THROWS(split_examples(all, {1.0, 7}, tr1, te1));
}

TEST_CASE("build_docassist") {
  FallbackTokenizer tok;
  const auto docs = generate_synthetic_corpus(31, 12, LengthDistribution{400, 200, 1, 1500});
  StubCompletionClient client;
  BuildOptions opt;
  opt.split = {0.2, 5};
  const auto b = build_docassist(docs, tok, client, opt);
  CHECK(b.train.size() + b.test.size() == 60);
  CHECK(b.test.size() == 12);
  CHECK(b.annotations.size() == 12);
  CHECK(b.failures.empty());
  CHECK(b.usage.prompt.count == 12);
  CHECK(b.metadata["examples"] == 60);
  CHECK(std::is_sorted(b.annotations.begin(), b.annotations.end(),
                       [](const auto& x, const auto& y) { return x.doc_id < y.doc_id; }));

  SUBCASE("independent of concurrency") {
    FallbackTokenizer tok2;
    StubCompletionClient client2;
    BuildOptions serial = opt;
    serial.max_in_flight = 1;
    const auto s = build_docassist(docs, tok2, client2, serial);
    CHECK(s.train == b.train);
    CHECK(s.test == b.test);
    CHECK(s.usage.to_json() == b.usage.to_json());
  }
  SUBCASE("partial failure is reported") {
    const std::string bad_id = docs[3].id;
    StubCompletionClient flaky([&](const std::string& prompt, int) {
      const auto good = StubCompletionClient::canned_annotation(prompt);
      return prompt.find(tok.decode(chunk_document(docs[3], tok).chunks[0])) != std::string::npos ? "nope" : good;
    });
    const auto f = build_docassist(docs, tok, flaky, opt);
    REQUIRE(f.failures.size() == 1);
    CHECK(f.failures[0].doc_id == bad_id);
    CHECK(f.annotations.size() == 11);
    CHECK(f.train.size() + f.test.size() == 55);
  }
  SUBCASE("total failure throws") {
    StubCompletionClient dead([](const std::string&, int) -> std::string { throw std::runtime_error("x"); });
    try {
      build_docassist(docs, tok, dead, opt);
      FAIL("expected DatasetBuildError");
    } catch (const DatasetBuildError& e) {
      CHECK(e.failures().size() == 12);
    }
  }
}

TEST_CASE("usage table layout") {
  std::vector<AnnotationResult> rs(2);
  rs[0].prompt_tokens = 1000;
  rs[0].completion_tokens = 100;
  rs[1].prompt_tokens = 3000;
  rs[1].completion_tokens = 300;
  const auto u = usage_report(rs);
  CHECK(u.prompt.mean == 2000.0);
  const std::string t = format_usage_table(u);
  CHECK(t.find("Token Type") != std::string::npos);
  CHECK(t.find("2,000.00 ± 1,000.00") != std::string::npos);
  CHECK(t.find("1,000 -- 3,000") != std::string::npos);
  CHECK(t.find("Completion Tokens") != std::string::npos);
  CHECK_THROWS(usage_report({}));
}

TEST_CASE("docassist persistence") {
  TempDir dir("docassist");
  const std::vector<DocAssistExample> ex{{"a", Intent::question_answering, "Why?", "doc \"text\"\n", "Because."},
                                         {"b", Intent::question_suggestion, "Suggest", "d", "[\"q?\"]"}};
  write_docassist(dir / "x.jsonl", ex);
  CHECK(read_docassist(dir / "x.jsonl") == ex);
  const auto row = read_jsonl(dir / "x.jsonl").front();
  for (const char* key : {"doc_id", "task", "request", "document", "target"}) CHECK(row.contains(key));
  CHECK_THROWS(DocAssistExample::from_json({{"doc_id", "a"}, {"task", "chat"}, {"request", ""}, {"document", ""}, {"target", ""}}));
}

TEST_CASE("http completion client") {
  std::string seen_auth, seen_model;
  FakeEndpoint server([&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    seen_model = body["model"];
    nlohmann::json reply{{"choices", {{{"message", {{"role", "assistant"}, {"content", kGood}}}}}},
                         {"usage", {{"prompt_tokens", 1234}, {"completion_tokens", 56}}}};
    res.set_content(reply.dump(), "application/json");
  });

  ::setenv("DOCSLM_TEST_KEY", "secret-value", 1);
  HttpCompletionClient::Options o;
  o.base_url = server.url();
  o.model = "annotator";
  o.api_key_env = "DOCSLM_TEST_KEY";
  HttpCompletionClient client(o);
  FallbackTokenizer tok;
  const auto r = annotate_document(sample_chunked(tok), tok, client);
  CHECK(r.summary == "A short summary.");
  CHECK(r.prompt_tokens == 1234);
  CHECK(r.completion_tokens == 56);
  CHECK(seen_auth == "Bearer secret-value");
  CHECK(seen_model == "annotator");

  ::unsetenv("DOCSLM_TEST_KEY");
  client.complete("hi", {});
  CHECK(seen_auth.empty());
}

TEST_CASE("http client errors") {
  FakeEndpoint server([](const httplib::Request&, httplib::Response& res) {
    res.status = 503;
    res.set_content("busy", "text/plain");
  });
  HttpCompletionClient::Options o;
  o.base_url = server.url();
  HttpCompletionClient client(o);
  CHECK_THROWS_WITH(client.complete("x", {}), doctest::Contains("HTTP 503"));

  o.base_url = "http://127.0.0.1:1";
  o.timeout_s = 2;
  HttpCompletionClient nowhere(o);
  CHECK_THROWS(nowhere.complete("x", {}));
}
