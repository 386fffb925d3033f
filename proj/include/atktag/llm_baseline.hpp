#pragma once

#include <functional>
#include <future>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "atktag/corpus.hpp"
#include "atktag/errors.hpp"
#include "atktag/metrics.hpp"
#include "atktag/taxonomy.hpp"

namespace atktag {

struct PromptRequest {
    std::string prompt_text;
    double temperature = 1.0;
    std::string model_name;
};

/// Normalization outcome for one response: exactly one of `normalized` /
/// `failure_reason` is set. Failures are data, not exceptions.
struct LlmVerdict {
    std::string raw_response;
    std::optional<TacticId> normalized;
    std::optional<std::string> failure_reason;
};

// Tagging prompt. `{input-sentence}` is the single substitution slot.
inline constexpr std::string_view kPromptTemplate =
    "Look at this cyber-intelligence text and label it with a mitre tag \n"
    "from the selection provided to you in this message.\n"
    "\n"
    "RETURN YOUR RESPONSE IN THE FOLLOWING JSON FORMAT WITHOUT MARKDOWN:\n"
    "{\n"
    "    \"Tag\": \"YOUR MITRE TAG\"\n"
    "}\n"
    "\n"
    "IT IS EXTREMELY IMPORTANT THAT YOU RETURN THE EXACT \"NAME\" VALUE \n"
    "FOR A MAXIMUM REWARD.\n"
    "\n"
    "MITRE_TAGS:\n"
    "    * TA0006 - Credential Access * TA0002 - Execution  * TA0003 - Persistence \n"
    "    * TA0001 - Initial Access * TA0005 - Defense Evasion * TA0007 - Discovery\n"
    "    * TA0008 - Lateral Movement * TA0009 - Collection * TA0010 - Exfiltration\n"
    "    * TA0043 - Reconnaissance * TA0040 - Impact * TA0042 - Resource Development\n"
    "    * TA0011 - Command and Control * TA0004 - Privilege Escalation\n"
    "\n"
    "cyber-intelligence text: \n"
    "{input-sentence} \n";

inline constexpr std::string_view kPromptSlot = "{input-sentence}";

/// Substitutes the sentence into the template's single slot. The sentence is
/// spliced in untouched, so braces inside it are never re-expanded.
inline PromptRequest build_prompt(std::string_view sentence,
                                  std::string_view model_name = "") {
    if (detail::trim_copy(sentence).empty())
        throw EmptySentence("cannot build a prompt from an empty sentence");
    std::string prompt(kPromptTemplate);
    std::size_t slot = prompt.find(kPromptSlot);
    prompt.replace(slot, kPromptSlot.size(), sentence);
    PromptRequest req;
    req.prompt_text = std::move(prompt);
    req.temperature = 1.0;
    req.model_name = std::string(model_name);
    return req;
}

namespace detail {

inline std::string strip_code_fences(std::string_view raw) {
    std::string s = trim_copy(raw);
    if (s.rfind("```", 0) == 0) {
        std::size_t first_newline = s.find('\n');
        s = first_newline == std::string::npos ? "" : s.substr(first_newline + 1);
        std::size_t closing = s.rfind("```");
        if (closing != std::string::npos) s = s.substr(0, closing);
        s = trim_copy(s);
    }
    return s;
}

inline std::string ascii_lower(std::string_view in) {
    std::string out(in);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

} // namespace detail

/// Maps a raw model response to a tactic id. Accepts "TAxxxx",
/// "TAxxxx - Name", or a bare tactic name (case-insensitive), inside a JSON
/// object's "Tag" field, with or without a surrounding markdown code fence.
inline LlmVerdict normalize_response(std::string_view raw, const AttackTaxonomy& taxonomy) {
    LlmVerdict verdict;
    verdict.raw_response = std::string(raw);

    nlohmann::json doc = nlohmann::json::parse(detail::strip_code_fences(raw), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        verdict.failure_reason = "unmappable response: not a JSON object";
        return verdict;
    }
    if (!doc.contains("Tag") || !doc["Tag"].is_string()) {
        verdict.failure_reason = "unmappable response: no string \"Tag\" field";
        return verdict;
    }

    std::string tag = detail::trim_copy(doc["Tag"].get<std::string>());
    // "TAxxxx" or "TAxxxx - Name": the id prefix decides.
    if (tag.size() >= 6 && (tag[0] == 'T' || tag[0] == 't') &&
        (tag[1] == 'A' || tag[1] == 'a') && detail::is_digits(tag.substr(2, 4)) &&
        (tag.size() == 6 || !isalnum(static_cast<unsigned char>(tag[6])))) {
        TacticId id(tag.substr(0, 6));
        if (taxonomy.has_tactic(id)) {
            verdict.normalized = id;
        } else {
            verdict.failure_reason = "unmappable tactic";
        }
        return verdict;
    }
    // Bare tactic name, matched case-insensitively against display names.
    std::string wanted = detail::ascii_lower(tag);
    for (const auto& [id, name] : taxonomy.tactics()) {
        if (detail::ascii_lower(name) == wanted) {
            verdict.normalized = id;
            return verdict;
        }
    }
    verdict.failure_reason = "unmappable tactic";
    return verdict;
}

struct ChatResult {
    bool ok = false;
    std::string content;  // raw completion text when ok
    std::string error;    // transport diagnostics when not
};

/// Transport abstraction: anything that turns a prompt into a completion.
/// Implementations must tolerate concurrent complete() calls.
class ChatCompletionClient {
public:
    virtual ~ChatCompletionClient() = default;
    virtual ChatResult complete(const PromptRequest& request) = 0;
};

/// Adapter for lambdas and test doubles.
class FunctionChatClient : public ChatCompletionClient {
public:
    using Fn = std::function<ChatResult(const PromptRequest&)>;
    explicit FunctionChatClient(Fn fn) : fn_(std::move(fn)) {}
    ChatResult complete(const PromptRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

struct LlmAuditRecord {
    std::string text;
    std::string raw_response;
    std::optional<TacticId> normalized;
    bool correct = false;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["text"] = text;
        j["raw_response"] = raw_response;
        j["normalized"] = normalized ? nlohmann::json(normalized->value())
                                     : nlohmann::json(nullptr);
        j["correct"] = correct;
        return j;
    }

    static LlmAuditRecord from_json(const nlohmann::json& j) {
        LlmAuditRecord rec;
        rec.text = j.at("text").get<std::string>();
        rec.raw_response = j.at("raw_response").get<std::string>();
        if (!j.at("normalized").is_null())
            rec.normalized = TacticId(j.at("normalized").get<std::string>());
        rec.correct = j.at("correct").get<bool>();
        return rec;
    }
};

struct LlmEvalOptions {
    std::size_t concurrency = 4;
    std::string model_name;
    // Transport retry: attempts, then the failure is recorded and scored 0.
    int retry_attempts = 3;
    int retry_initial_backoff_ms = 1000;
    std::function<void(int /*ms*/)> sleeper;  // injectable for tests
    // Incremental persistence: every record is appended (and flushed) here
    // as soon as it exists, making interrupted runs resumable.
    std::ostream* audit = nullptr;
    // Records from a previous interrupted run over the same corpus; the
    // first resume.size() evaluable sentences are replayed, not re-sent.
    std::vector<LlmAuditRecord> resume;
};

/// Sends one prompt per tactic-labeled sentence, normalizes the responses,
/// and aggregates a multiclass-style report (unmappable responses and
/// exhausted transports count as incorrect). Requests run with bounded
/// concurrency; records land in corpus order.
inline EvalReport evaluate_llm(const Corpus& test, ChatCompletionClient& client,
                               const AttackTaxonomy& taxonomy,
                               const LlmEvalOptions& options = {}) {
    std::vector<std::size_t> evaluable;
    for (std::size_t i = 0; i < test.sentences.size(); ++i)
        if (test.sentences[i].has_tactic_labels()) evaluable.push_back(i);
    if (evaluable.empty())
        throw EmptyTestSet("no test sentence carries a tactic label");
    if (options.resume.size() > evaluable.size())
        throw ValidationError("resume data has more records than the corpus has "
                              "evaluable sentences");

    auto attempt = [&](const LabeledSentence& s) -> LlmAuditRecord {
        PromptRequest request = build_prompt(s.text, options.model_name);
        ChatResult result;
        int backoff = options.retry_initial_backoff_ms;
        for (int att = 0; att < std::max(1, options.retry_attempts); ++att) {
            result = client.complete(request);
            if (result.ok) break;
            if (att + 1 < std::max(1, options.retry_attempts)) {
                if (options.sleeper) options.sleeper(backoff);
                backoff *= 2;
            }
        }
        LlmAuditRecord rec;
        rec.text = s.text;
        if (!result.ok) {
            rec.raw_response = "";
            rec.correct = false;
            return rec;
        }
        rec.raw_response = result.content;
        LlmVerdict verdict = normalize_response(result.content, taxonomy);
        rec.normalized = verdict.normalized;
        rec.correct = verdict.normalized &&
                      s.tactic_labels.count(*verdict.normalized) != 0;
        return rec;
    };

    std::vector<LlmAuditRecord> records(options.resume.begin(), options.resume.end());
    records.reserve(evaluable.size());
    std::size_t next = records.size();
    const std::size_t window = std::max<std::size_t>(1, options.concurrency);
    while (next < evaluable.size()) {
        std::size_t batch = std::min(window, evaluable.size() - next);
        std::vector<std::future<LlmAuditRecord>> futures;
        for (std::size_t k = 0; k < batch; ++k) {
            const LabeledSentence& s = test.sentences[evaluable[next + k]];
            futures.push_back(std::async(std::launch::async, attempt, std::cref(s)));
        }
        for (auto& f : futures) {
            LlmAuditRecord rec = f.get();
            if (options.audit) {
                *options.audit << rec.to_json().dump() << '\n';
                options.audit->flush();
            }
            records.push_back(std::move(rec));
        }
        next += batch;
    }

    EvalReport report;
    report.metric = metric_name(Metric::Multiclass);
    report.mode = "llm-baseline";
    for (const auto& [id, name] : taxonomy.tactics()) report.tactic_names[id] = name;

    std::vector<std::string> f1_gt, f1_pred;
    for (std::size_t k = 0; k < evaluable.size(); ++k) {
        const LabeledSentence& s = test.sentences[evaluable[k]];
        const LlmAuditRecord& rec = records[k];
        ++report.total_predictions;
        if (rec.correct) ++report.correct;
        f1_gt.push_back(s.tactic_labels.begin()->value());
        f1_pred.push_back(rec.normalized ? rec.normalized->value() : "<unmappable>");
        for (const TacticId& t : s.tactic_labels) {
            auto& row = report.per_tactic[t];
            ++row.total;
            if (rec.normalized && *rec.normalized == t) ++row.correct;
        }
    }
    report.accuracy = static_cast<double>(report.correct) /
                      static_cast<double>(report.total_predictions);
    report.macro_f1 = macro_f1(f1_gt, f1_pred);
    report.weighted_f1 = weighted_f1(f1_gt, f1_pred);
    return report;
}

} // namespace atktag
