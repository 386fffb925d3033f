#include <atomic>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "atktag/llm_baseline.hpp"

#include "helpers.hpp"

using namespace atktag;

namespace {

Corpus llm_corpus() {
    Corpus c;
    c.sentences.push_back(testutil::sentence("attackers dumped lsass memory", {"TA0006"}));
    c.sentences.push_back(testutil::sentence("scheduled task persists the implant", {"TA0003"}));
    c.sentences.push_back(testutil::sentence("beacon traffic over dns tunnels", {"TA0011"}));
    c.sentences.push_back(testutil::sentence("operators enumerated domain accounts", {"TA0007"}));
    return c;
}

std::string sentence_from_prompt(const std::string& prompt) {
    std::string_view marker = "cyber-intelligence text: \n";
    std::size_t at = prompt.rfind(marker);
    std::string s = prompt.substr(at + marker.size());
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
    return s;
}

} // namespace

TEST_CASE("prompt embeds the template and the sentence", "[llm]") {
    PromptRequest req = build_prompt("Adversaries hide in plain sight.");
    CHECK(req.temperature == 1.0);
    CHECK(req.prompt_text.find("Look at this cyber-intelligence text and label it with a "
                               "mitre tag") != std::string::npos);
    CHECK(req.prompt_text.find("RETURN YOUR RESPONSE IN THE FOLLOWING JSON FORMAT WITHOUT "
                               "MARKDOWN:") != std::string::npos);
    CHECK(req.prompt_text.find("MITRE_TAGS:") != std::string::npos);
    CHECK(req.prompt_text.find("* TA0006 - Credential Access") != std::string::npos);
    CHECK(req.prompt_text.find("* TA0004 - Privilege Escalation") != std::string::npos);
    CHECK(req.prompt_text.find("Adversaries hide in plain sight.") != std::string::npos);
    CHECK(req.prompt_text.find(kPromptSlot) == std::string::npos);  // slot consumed
    // all 14 tags present
    for (const char* id : {"TA0001", "TA0002", "TA0003", "TA0004", "TA0005", "TA0006",
                           "TA0007", "TA0008", "TA0009", "TA0010", "TA0011", "TA0040",
                           "TA0042", "TA0043"})
        CHECK(req.prompt_text.find(std::string("* ") + id + " - ") != std::string::npos);
}

TEST_CASE("prompt building is byte-deterministic and brace-safe", "[llm]") {
    CHECK(build_prompt("same input").prompt_text == build_prompt("same input").prompt_text);
    PromptRequest req = build_prompt("payload {input-sentence} with {braces}");
    // the sentence is spliced once; its braces are not re-expanded
    CHECK(req.prompt_text.find("payload {input-sentence} with {braces}") != std::string::npos);
    CHECK_THROWS_AS(build_prompt("   "), EmptySentence);
}

TEST_CASE("response normalization accepts the documented shapes", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();

    LlmVerdict v1 = normalize_response(R"({"Tag": "TA0007 - Discovery"})", tax);
    REQUIRE(v1.normalized.has_value());
    CHECK(v1.normalized->value() == "TA0007");
    CHECK_FALSE(v1.failure_reason.has_value());

    LlmVerdict v2 = normalize_response("```json\n{\"Tag\":\"Discovery\"}\n```", tax);
    REQUIRE(v2.normalized.has_value());
    CHECK(v2.normalized->value() == "TA0007");

    LlmVerdict v3 = normalize_response(R"({"Tag": "ta0040"})", tax);
    REQUIRE(v3.normalized.has_value());
    CHECK(v3.normalized->value() == "TA0040");

    LlmVerdict v4 = normalize_response(R"({"Tag": "dEfEnSe EvAsIoN"})", tax);
    REQUIRE(v4.normalized.has_value());
    CHECK(v4.normalized->value() == "TA0005");
}

TEST_CASE("unmappable responses become failure verdicts", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();

    LlmVerdict bad_name = normalize_response(R"({"Tag": "Quantum Evasion"})", tax);
    CHECK_FALSE(bad_name.normalized.has_value());
    REQUIRE(bad_name.failure_reason.has_value());
    CHECK(*bad_name.failure_reason == "unmappable tactic");

    LlmVerdict unknown_id = normalize_response(R"({"Tag": "TA9999"})", tax);
    REQUIRE(unknown_id.failure_reason.has_value());
    CHECK(*unknown_id.failure_reason == "unmappable tactic");

    LlmVerdict not_json = normalize_response("the tag is discovery", tax);
    CHECK_FALSE(not_json.normalized.has_value());
    REQUIRE(not_json.failure_reason.has_value());
    CHECK(not_json.failure_reason->find("unmappable") == 0);

    LlmVerdict no_tag = normalize_response(R"({"Label": "Discovery"})", tax);
    REQUIRE(no_tag.failure_reason.has_value());
    CHECK(no_tag.failure_reason->find("unmappable") == 0);
}

TEST_CASE("echo client scores perfectly", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    Corpus corpus = llm_corpus();
    std::map<std::string, std::string> gt;
    for (const LabeledSentence& s : corpus.sentences)
        gt[s.text] = s.tactic_labels.begin()->value();

    FunctionChatClient client([&](const PromptRequest& req) {
        ChatResult res;
        res.ok = true;
        res.content = R"({"Tag": ")" + gt.at(sentence_from_prompt(req.prompt_text)) + R"("})";
        return res;
    });

    std::ostringstream audit;
    LlmEvalOptions options;
    options.audit = &audit;
    options.concurrency = 2;
    EvalReport report = evaluate_llm(corpus, client, tax, options);
    CHECK(report.accuracy == 1.0);
    CHECK(report.total_predictions == 4);
    for (const auto& [tactic, row] : report.per_tactic) CHECK(row.accuracy() == 1.0);

    // one audit line per sentence, in corpus order
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(audit.str());
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        auto rec = LlmAuditRecord::from_json(nlohmann::json::parse(lines[i]));
        CHECK(rec.text == corpus.sentences[i].text);
        CHECK(rec.correct);
    }
}

TEST_CASE("fixed wrong client scores zero everywhere", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    Corpus corpus = llm_corpus();
    FunctionChatClient client([](const PromptRequest&) {
        return ChatResult{true, R"({"Tag": "TA0001 - Initial Access"})", ""};
    });
    EvalReport report = evaluate_llm(corpus, client, tax);
    CHECK(report.accuracy == 0.0);
    for (const auto& [tactic, row] : report.per_tactic) {
        CHECK(row.correct == 0);
        CHECK(row.accuracy() == 0.0);
    }
}

TEST_CASE("malformed responses score zero and are recorded unmappable", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    Corpus corpus = llm_corpus();
    FunctionChatClient client([](const PromptRequest&) {
        return ChatResult{true, "absolutely not json", ""};
    });
    std::ostringstream audit;
    LlmEvalOptions options;
    options.audit = &audit;
    EvalReport report = evaluate_llm(corpus, client, tax, options);
    CHECK(report.accuracy == 0.0);

    std::istringstream in(audit.str());
    std::string line;
    std::size_t records = 0;
    while (std::getline(in, line)) {
        auto rec = LlmAuditRecord::from_json(nlohmann::json::parse(line));
        CHECK_FALSE(rec.normalized.has_value());
        CHECK_FALSE(rec.correct);
        CHECK(normalize_response(rec.raw_response, tax).failure_reason->find("unmappable") == 0);
        ++records;
    }
    CHECK(records == 4);
}

TEST_CASE("transport failures are retried with backoff then recorded", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    Corpus corpus;
    corpus.sentences.push_back(testutil::sentence("flaky transport case", {"TA0007"}));

    std::atomic<int> calls{0};
    FunctionChatClient flaky([&](const PromptRequest&) {
        if (++calls < 3) return ChatResult{false, "", "connection reset"};
        return ChatResult{true, R"({"Tag": "TA0007"})", ""};
    });
    std::vector<int> sleeps;
    LlmEvalOptions options;
    options.concurrency = 1;
    options.sleeper = [&](int ms) { sleeps.push_back(ms); };
    EvalReport ok = evaluate_llm(corpus, flaky, tax, options);
    CHECK(ok.accuracy == 1.0);
    CHECK(calls == 3);
    CHECK(sleeps == std::vector<int>{1000, 2000});  // exponential from 1s

    std::atomic<int> dead_calls{0};
    FunctionChatClient dead([&](const PromptRequest&) {
        ++dead_calls;
        return ChatResult{false, "", "no route"};
    });
    std::ostringstream audit;
    LlmEvalOptions dead_options;
    dead_options.concurrency = 1;
    dead_options.sleeper = [](int) {};
    dead_options.audit = &audit;
    EvalReport fail = evaluate_llm(corpus, dead, tax, dead_options);
    CHECK(fail.accuracy == 0.0);
    CHECK(dead_calls == 3);  // three attempts, then the failure is recorded
    auto rec = LlmAuditRecord::from_json(nlohmann::json::parse(audit.str()));
    CHECK(rec.raw_response.empty());
    CHECK_FALSE(rec.correct);
}

TEST_CASE("resume replays persisted records without re-sending", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    Corpus corpus = llm_corpus();

    std::atomic<int> calls{0};
    FunctionChatClient counter([&](const PromptRequest& req) {
        ++calls;
        ChatResult res;
        res.ok = true;
        res.content = R"({"Tag": "TA0006"})";
        (void)req;
        return res;
    });

    LlmEvalOptions first_two;
    first_two.concurrency = 1;
    std::ostringstream audit;
    first_two.audit = &audit;
    // simulate an interrupted run: only the first two sentences were done
    Corpus prefix;
    prefix.sentences.assign(corpus.sentences.begin(), corpus.sentences.begin() + 2);
    evaluate_llm(prefix, counter, tax, first_two);
    CHECK(calls == 2);

    std::vector<LlmAuditRecord> done;
    std::istringstream in(audit.str());
    std::string line;
    while (std::getline(in, line))
        done.push_back(LlmAuditRecord::from_json(nlohmann::json::parse(line)));

    LlmEvalOptions resumed;
    resumed.concurrency = 1;
    resumed.resume = done;
    EvalReport report = evaluate_llm(corpus, counter, tax, resumed);
    CHECK(calls == 4);  // only the remaining two sentences hit the client
    CHECK(report.total_predictions == 4);
    CHECK(report.correct == 1);  // TA0006 matches only the first sentence
}

TEST_CASE("evaluation needs at least one labeled sentence", "[llm]") {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    Corpus unlabeled;
    unlabeled.sentences.push_back(testutil::sentence("nothing here", {}));
    FunctionChatClient client([](const PromptRequest&) {
        return ChatResult{true, "{}", ""};
    });
    CHECK_THROWS_AS(evaluate_llm(unlabeled, client, tax), EmptyTestSet);
}
