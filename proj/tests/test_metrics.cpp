#include <doctest.h>

#include <cmath>

#include "docslm/jsonl.hpp"
#include "docslm/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace docslm;
using docslm::testing::random_words;

namespace {

// Pairs that share material so that every n-gram order gets exercised.
std::pair<std::string, std::string> related_pair(Rng& rng, std::size_t max_words) {
  std::string a = random_words(rng, max_words);
  std::string b = rng.below(3) == 0 ? random_words(rng, max_words) : a;
  if (b == a && !a.empty()) {
    auto words = oracle::tokenize(a);
    std::string out;
    for (const auto& w : words) {
      if (rng.below(4) == 0) continue;
      if (!out.empty()) out += ' ';
      out += rng.below(6) == 0 ? std::string("Q") : w;
      if (rng.below(6) == 0) out += " " + words[rng.below(words.size())];
    }
    b = out;
  }
  if (rng.below(5) == 0) {
    for (auto& ch : a) ch = static_cast<char>(rng.below(2) ? std::toupper(static_cast<unsigned char>(ch)) : ch);
  }
  return {a, b};
}

}  // namespace

TEST_CASE("bleu matches the brute-force oracle") {
  Rng rng(101);
  for (int i = 0; i < 400; ++i) {
    const auto [c, r] = related_pair(rng, 20);
    CHECK(std::abs(bleu(c, r) - oracle::bleu(c, {r})) <= 1e-9);
    CHECK(std::abs(bleu(c, r, 2) - oracle::bleu(c, {r}, 2)) <= 1e-9);
  }
}

TEST_CASE("multi-reference bleu matches the oracle") {
  Rng rng(102);
  for (int i = 0; i < 200; ++i) {
    const auto [c, r0] = related_pair(rng, 14);
    std::vector<std::string> refs{r0};
    const std::size_t extra = rng.below(3);
    for (std::size_t k = 0; k < extra; ++k) refs.push_back(related_pair(rng, 14).second);
    CHECK(std::abs(bleu_multi(c, refs) - oracle::bleu(c, refs)) <= 1e-9);
  }
}

TEST_CASE("rouge matches the brute-force oracle") {
  Rng rng(103);
  for (int i = 0; i < 400; ++i) {
    const auto [c, r] = related_pair(rng, 11);
    const auto s = rouge(c, r);
    CHECK(std::abs(s.rouge1 - oracle::rouge_n(c, r, 1)) <= 1e-9);
    CHECK(std::abs(s.rouge2 - oracle::rouge_n(c, r, 2)) <= 1e-9);
    CHECK(std::abs(s.rougeL - oracle::rouge_l(c, r)) <= 1e-9);
    const auto tc = oracle::tokenize(c), tr = oracle::tokenize(r);
    CHECK(lcs_length(tc, tr) == oracle::lcs_length(tc, tr));
  }
}

TEST_CASE("metric edge cases") {
  CHECK(bleu("", "a b c") == 0.0);
  CHECK(bleu("a b c", "") == 0.0);
  CHECK(bleu("x y", "a b") == 0.0);
  CHECK(bleu("The cat", "the CAT") == doctest::Approx(1.0));
  CHECK(bleu("one", "one") == doctest::Approx(1.0));
  // Candidate shorter than the reference pays the brevity penalty.
  CHECK(bleu("a b c d", "a b c d e f g h") == doctest::Approx(std::exp(1.0 - 2.0)));
  CHECK_THROWS(bleu("a", "a", 0));

  const auto same = rouge("w", "w");
  CHECK(same.rouge1 == 1.0);
  CHECK(same.rouge2 == 1.0);  // no bigrams on either side, identical
  CHECK(same.rougeL == 1.0);
  const auto diff = rouge("w", "v");
  CHECK(diff.rouge2 == 0.0);
  const auto empty = rouge("", "");
  CHECK(empty.rouge1 == 0.0);
  CHECK(empty.rougeL == 0.0);
}

TEST_CASE("metrics are symmetric where the definition is") {
  Rng rng(104);
  for (int i = 0; i < 100; ++i) {
    const auto [a, b] = related_pair(rng, 12);
    const auto ab = rouge(a, b), ba = rouge(b, a);
    CHECK(ab.rouge1 == doctest::Approx(ba.rouge1));
    CHECK(ab.rougeL == doctest::Approx(ba.rougeL));
    CHECK(bleu(a, b) >= 0.0);
    CHECK(bleu(a, b) <= 1.0 + 1e-12);
  }
}

TEST_CASE("sts score") {
  const HashedBagEmbedder e;
  CHECK(sts_score("a b c", "c b a", e) == doctest::Approx(1.0));
  CHECK(sts_score("a b", "a b", e) == 1.0);
  CHECK(sts_score("", "a", e) == 0.0);
  CHECK(sts_score("alpha", "omega", HashedBagEmbedder(1 << 20)) == 0.0);
  const double partial = sts_score("a b", "a c", HashedBagEmbedder(1 << 20));
  CHECK(partial == doctest::Approx(0.5));
  const StubJudge j(2.0);
  CHECK(j.judge("x", "y", Intent::summarization) == 2.0);
}

TEST_CASE("self-bleu") {
  const std::vector<std::string> same{"what is this", "what is this", "what is this"};
  CHECK(self_bleu(same) == doctest::Approx(1.0));
  const std::vector<std::string> apart{"alpha beta gamma", "delta epsilon zeta", "eta theta iota"};
  CHECK(self_bleu(apart) == 0.0);
  CHECK_THROWS(self_bleu(std::vector<std::string>{"one"}));

  Rng rng(105);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::string> texts;
    for (int k = 0; k < 3; ++k) texts.push_back(random_words(rng, 8) + " x");
    double expected = 0.0;
    for (std::size_t a = 0; a < texts.size(); ++a) {
      std::vector<std::string> others;
      for (std::size_t b = 0; b < texts.size(); ++b) {
        if (b != a) others.push_back(texts[b]);
      }
      expected += oracle::bleu(texts[a], others);
    }
    CHECK(std::abs(self_bleu(texts) - expected / 3.0) <= 1e-9);
  }
}

TEST_CASE("geval rescale") {
  CHECK(rescale_geval(1.0) == 0.0);
  CHECK(rescale_geval(4.5) == 1.0);
  CHECK(rescale_geval(0.0) == 0.0);
  CHECK(rescale_geval(9.0) == 1.0);
  CHECK(rescale_geval(2.75) == doctest::Approx(0.5));
}

TEST_CASE("question sets") {
  CHECK(question_set(R"(["A?", "B?"])") == std::vector<std::string>{"A?", "B?"});
  CHECK(question_set("A?\n\n  \nB?") == std::vector<std::string>{"A?", "B?"});
  CHECK(question_set(R"([1, 2])") == std::vector<std::string>{"[1, 2]"});
  CHECK(question_set("").empty());
}

TEST_CASE("evaluate_task on identical pairs") {
  const HashedBagEmbedder e;
  const StubJudge judge(4.5);
  const std::vector<EvalPair> summ{{"The report covers revenue.", "The report covers revenue.", "doc"},
                                   {"Short one", "Short one", "doc"}};
  const auto r = evaluate_task(summ, Intent::summarization, e, &judge);
  CHECK(r.bleu == doctest::Approx(1.0));
  CHECK(r.rouge2 == doctest::Approx(1.0));
  CHECK(r.geval_rescaled.value() == 1.0);
  CHECK(r.average == doctest::Approx(1.0));
  CHECK_FALSE(r.diversity.has_value());

  const std::vector<EvalPair> qs{{R"(["What is x?", "Why y?", "How z?"])", R"(["What is x?", "Why y?", "How z?"])", ""}};
  const auto q = evaluate_task(qs, Intent::question_suggestion, e, &judge);
  CHECK(q.average == doctest::Approx(1.0));
  CHECK_FALSE(q.geval_rescaled.has_value());
  REQUIRE(q.diversity.has_value());
  CHECK(*q.diversity < 0.5);

  const auto no_judge = evaluate_task(summ, Intent::question_answering, e, nullptr);
  CHECK(no_judge.geval_missing);
  CHECK(no_judge.average == doctest::Approx(1.0));
  CHECK(format_task_table("m", no_judge).find("GEval omitted") != std::string::npos);

  CHECK_THROWS(evaluate_task({}, Intent::summarization, e, &judge));
}

TEST_CASE("task and overall averages") {
  TaskReport s{Intent::summarization, 1, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, std::nullopt, 0, false};
  CHECK(task_average(s) == doctest::Approx(0.35));
  TaskReport q{Intent::question_suggestion, 1, 0.2, 0.2, 0.2, 0.2, 0.2, std::nullopt, 0.9, 0, false};
  CHECK(task_average(q) == doctest::Approx(0.2));
  s.average = task_average(s);
  q.average = task_average(q);
  TaskReport a = s;
  a.task = Intent::question_answering;
  a.geval_rescaled = 0.8;
  const auto o = aggregate_overall(s, q, a);
  CHECK(o.bleu == doctest::Approx((0.1 + 0.2 + 0.1) / 3));
  CHECK(o.geval.value() == doctest::Approx(0.7));
  CHECK(o.average == doctest::Approx((o.bleu + o.rouge1 + o.rouge2 + o.rougeL + o.sts + 0.7) / 6));

  const auto back = TaskReport::from_json(s.to_json());
  CHECK(back.geval_rescaled == s.geval_rescaled);
  CHECK(back.average == s.average);
  CHECK(TaskReport::from_json(q.to_json()).diversity == q.diversity);
}

TEST_CASE("published averages follow the implemented formula") {
  const auto tables = read_json_file(std::string(DOCSLM_FIXTURES) + "/reference_tables.json");
  for (const auto& [task_name, table] : tables.items()) {
    const auto task = parse_intent(task_name);
    REQUIRE(task.has_value());
    const double tol = table.at("tolerance").get<double>();
    for (const auto& row : table.at("rows")) {
      TaskReport r;
      r.task = *task;
      r.bleu = row["bleu"];
      r.rouge1 = row["rouge1"];
      r.rouge2 = row["rouge2"];
      r.rougeL = row["rougeL"];
      r.sts = row["sts"];
      if (row.contains("geval")) r.geval_rescaled = row["geval"].get<double>();
      if (row.contains("diversity")) r.diversity = row["diversity"].get<double>();
      INFO(task_name, " ", row["model"].get<std::string>());
      CHECK(std::abs(task_average(r) - row["average"].get<double>()) <= tol);
    }
  }
}

TEST_CASE("table layouts") {
  TaskReport r{Intent::question_suggestion, 3, 0.5, 0.5, 0.5, 0.5, 0.5, std::nullopt, 0.04, 0.5, false};
  const std::string t = format_task_table("tiny", r);
  CHECK(t.find("Diversity") != std::string::npos);
  CHECK(t.find("0.04") != std::string::npos);
  CHECK(t.find("0.5000") != std::string::npos);
  CHECK(format_intent_table("tiny", 0.9981).find("99.81") != std::string::npos);
}
