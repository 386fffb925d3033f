#pragma once

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atktag/errors.hpp"
#include "atktag/rng.hpp"
#include "atktag/taxonomy.hpp"

namespace atktag {

/// One text unit plus its gold labels. Either label set may be empty;
/// sentences without tactic labels are kept at ingestion and filtered by
/// callers that need labeled data.
struct LabeledSentence {
    std::string text;
    std::set<TacticId> tactic_labels;
    std::set<TechniqueId> technique_labels;
    std::string source = "unknown";

    bool has_tactic_labels() const { return !tactic_labels.empty(); }

    bool operator==(const LabeledSentence&) const = default;
};

/// Ordered sentence collection. Order is significant: split determinism
/// depends on it.
struct Corpus {
    std::vector<LabeledSentence> sentences;
    std::string taxonomy_version;

    bool empty() const { return sentences.empty(); }
    std::size_t size() const { return sentences.size(); }

    bool operator==(const Corpus&) const = default;
};

/// Recipe for a synthetic fixture corpus.
struct DistributionSpec {
    std::map<TacticId, std::size_t> counts;
    double overlap = 0.0;   // fraction of tokens drawn from the shared pool
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string trim_copy(std::string_view s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Round-half-to-even, the default IEEE rounding of nearbyint.
inline std::size_t round_half_even(double x) {
    return static_cast<std::size_t>(std::nearbyint(x));
}

} // namespace detail

/// Parses a corpus file: UTF-8 JSONL, one object per line with keys
/// "text" (required), "tactics" (required, may be empty), "techniques" and
/// "source" (optional). Duplicate labels within a line are collapsed with a
/// warning. Blank lines are skipped.
inline Corpus ingest(std::string_view bytes, std::vector<std::string>* warnings = nullptr) {
    Corpus corpus;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= bytes.size()) {
        std::size_t eol = bytes.find('\n', pos);
        std::string_view line = (eol == std::string_view::npos)
                                    ? bytes.substr(pos)
                                    : bytes.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? bytes.size() + 1 : eol + 1;
        ++line_no;
        if (detail::trim_copy(line).empty()) continue;

        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object())
            throw ParseError("line " + std::to_string(line_no) + ": not a JSON object");
        if (!obj.contains("text") || !obj["text"].is_string())
            throw ParseError("line " + std::to_string(line_no) + ": missing string 'text'");
        if (!obj.contains("tactics") || !obj["tactics"].is_array())
            throw ParseError("line " + std::to_string(line_no) + ": missing array 'tactics'");

        LabeledSentence s;
        s.text = obj["text"].get<std::string>();
        if (detail::trim_copy(s.text).empty())
            throw ParseError("line " + std::to_string(line_no) + ": empty text");

        auto add_labels = [&](const nlohmann::json& arr, auto& out, auto make_id,
                              const char* what) {
            for (const auto& raw : arr) {
                if (!raw.is_string())
                    throw ParseError("line " + std::to_string(line_no) + ": " + what +
                                     " entries must be strings");
                try {
                    auto id = make_id(raw.get<std::string>());
                    if (!out.insert(id).second && warnings)
                        warnings->push_back("line " + std::to_string(line_no) +
                                            ": duplicate " + std::string(what) + " label " +
                                            id.value());
                } catch (const ValidationError& e) {
                    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
                }
            }
        };
        add_labels(obj["tactics"], s.tactic_labels,
                   [](const std::string& v) { return TacticId(v); }, "tactic");
        if (obj.contains("techniques")) {
            if (!obj["techniques"].is_array())
                throw ParseError("line " + std::to_string(line_no) + ": 'techniques' must be an array");
            add_labels(obj["techniques"], s.technique_labels,
                       [](const std::string& v) { return TechniqueId(v); }, "technique");
        }
        if (obj.contains("source")) {
            if (!obj["source"].is_string())
                throw ParseError("line " + std::to_string(line_no) + ": 'source' must be a string");
            s.source = obj["source"].get<std::string>();
        }
        corpus.sentences.push_back(std::move(s));
    }
    if (corpus.empty()) throw EmptyCorpus("corpus file contains no sentences");
    return corpus;
}

/// Serializes a corpus back to the JSONL format read by ingest().
inline std::string to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const LabeledSentence& s : corpus.sentences) {
        nlohmann::json obj;
        obj["text"] = s.text;
        nlohmann::json tactics = nlohmann::json::array();
        for (const TacticId& t : s.tactic_labels) tactics.push_back(t.value());
        obj["tactics"] = std::move(tactics);
        nlohmann::json techniques = nlohmann::json::array();
        for (const TechniqueId& t : s.technique_labels) techniques.push_back(t.value());
        obj["techniques"] = std::move(techniques);
        obj["source"] = s.source;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

/// Deterministic stratified partition. Stratification key is the
/// lexicographically smallest tactic label of each sentence; within each
/// stratum, round(fraction * stratum_size) sentences (round half to even)
/// land in train, selected by a seeded shuffle. Strata are processed in
/// ascending key order over one splitmix64 stream; both outputs preserve
/// the input's relative sentence order.
inline std::pair<Corpus, Corpus> stratified_split(const Corpus& corpus,
                                                  double train_fraction,
                                                  std::uint64_t seed) {
    if (corpus.empty()) throw EmptyCorpus("cannot split an empty corpus");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw InvalidFraction("train fraction must lie in (0, 1), got " +
                              std::to_string(train_fraction));
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i)
        if (!corpus.sentences[i].has_tactic_labels())
            throw EmptyCorpus("sentence " + std::to_string(i) +
                              " has no tactic label; filter unlabeled sentences before splitting");

    std::map<TacticId, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i)
        strata[*corpus.sentences[i].tactic_labels.begin()].push_back(i);

    SplitMix64 rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [key, indices] : strata) {
        (void)key;
        rng.shuffle(indices);
        std::size_t k = detail::round_half_even(train_fraction *
                                                static_cast<double>(indices.size()));
        for (std::size_t i = 0; i < indices.size(); ++i)
            (i < k ? train_idx : test_idx).push_back(indices[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());

    Corpus train{.sentences = {}, .taxonomy_version = corpus.taxonomy_version};
    Corpus test{.sentences = {}, .taxonomy_version = corpus.taxonomy_version};
    for (std::size_t i : train_idx) train.sentences.push_back(corpus.sentences[i]);
    for (std::size_t i : test_idx) test.sentences.push_back(corpus.sentences[i]);
    return {std::move(train), std::move(test)};
}

namespace detail {

// Synthetic token pools. Tokens are lower-case alphanumerics of length >= 8
// so they survive tokenization unchanged and cannot collide with anything a
// model container stores by accident.
inline std::string synth_specific_token(const TacticId& tactic,
                                        const TechniqueId* technique,
                                        std::uint64_t k) {
    std::string t = "t" + tactic.value().substr(2);           // digits of the tactic id
    t += "x";
    t += technique ? technique->value().substr(1) : "9999";   // digits of the technique id
    t += "w";
    std::string num = std::to_string(k);
    t += std::string(3 - std::min<std::size_t>(3, num.size()), '0') + num;
    return t;
}

inline std::string synth_shared_token(std::uint64_t k) {
    std::string num = std::to_string(k);
    return "zzshared" + std::string(3 - std::min<std::size_t>(3, num.size()), '0') + num;
}

} // namespace detail

/// Generates a deterministic fixture corpus. Each tactic gets the requested
/// number of sentences; tokens come from a pool specific to the sentence's
/// (tactic, technique) pair, except that each token independently comes from
/// a shared pool with probability `overlap`. Overlap 0 therefore yields
/// pairwise-disjoint vocabularies at both label levels. One technique label
/// is drawn uniformly from the tactic's children when it has any.
inline Corpus synth_corpus(const DistributionSpec& spec, const AttackTaxonomy& taxonomy) {
    if (spec.overlap < 0.0 || spec.overlap > 1.0)
        throw InvalidFraction("overlap must lie in [0, 1]");
    std::size_t total = 0;
    for (const auto& [tactic, count] : spec.counts) {
        if (!taxonomy.has_tactic(tactic))
            throw UnknownTactic("distribution references unknown tactic " + tactic.value());
        total += count;
    }
    if (total == 0) throw EmptyCorpus("distribution has a zero total count");

    constexpr std::uint64_t kSpecificPool = 64;
    constexpr std::uint64_t kSharedPool = 256;

    SplitMix64 rng(spec.seed);
    Corpus corpus;
    corpus.taxonomy_version = taxonomy.version();
    for (const auto& [tactic, count] : spec.counts) {
        std::vector<TechniqueId> techs(taxonomy.techniques_for(tactic).begin(),
                                       taxonomy.techniques_for(tactic).end());
        for (std::size_t i = 0; i < count; ++i) {
            const TechniqueId* tech = nullptr;
            if (!techs.empty())
                tech = &techs[rng.next_below(techs.size())];

            std::size_t len = 8 + rng.next_below(5);
            std::string text;
            for (std::size_t j = 0; j < len; ++j) {
                bool shared = rng.next_unit() < spec.overlap;
                std::string tok = shared
                    ? detail::synth_shared_token(rng.next_below(kSharedPool))
                    : detail::synth_specific_token(tactic, tech, rng.next_below(kSpecificPool));
                if (!text.empty()) text += ' ';
                text += tok;
            }

            LabeledSentence s;
            s.text = std::move(text);
            s.tactic_labels.insert(tactic);
            if (tech) s.technique_labels.insert(*tech);
            s.source = "synth";
            corpus.sentences.push_back(std::move(s));
        }
    }
    return corpus;
}

/// Parses a DistributionSpec file: JSON {"counts": {tacticId: int},
/// "overlap": number, "seed": int}.
inline DistributionSpec load_distribution_spec(std::string_view bytes) {
    nlohmann::json doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ParseError("distribution spec is not a JSON object");
    if (!doc.contains("counts") || !doc["counts"].is_object())
        throw ParseError("distribution spec missing object 'counts'");
    DistributionSpec spec;
    for (auto it = doc["counts"].begin(); it != doc["counts"].end(); ++it) {
        if (!it.value().is_number_unsigned())
            throw ParseError("count for " + it.key() + " must be a non-negative integer");
        spec.counts[TacticId(it.key())] = it.value().get<std::size_t>();
    }
    if (doc.contains("overlap")) {
        if (!doc["overlap"].is_number())
            throw ParseError("'overlap' must be a number");
        spec.overlap = doc["overlap"].get<double>();
    }
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_unsigned())
            throw ParseError("'seed' must be a non-negative integer");
        spec.seed = doc["seed"].get<std::uint64_t>();
    }
    return spec;
}

} // namespace atktag
