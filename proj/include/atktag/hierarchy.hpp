#pragma once

#include <future>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "atktag/corpus.hpp"
#include "atktag/errors.hpp"
#include "atktag/linear.hpp"
#include "atktag/taxonomy.hpp"
#include "atktag/vectorize.hpp"

namespace atktag {

struct VectorizerConfig {
    Vectorizer::Kind kind = Vectorizer::Kind::Vocabulary;
    int hash_bits = 18;
    std::uint32_t hash_seed = 0;
};

struct TrainOptions {
    bool train_flat_technique = false;
    // Fraction of each tactic-specific data set fed to that tactic's
    // technique model. 1.0 uses everything the caller supplied (the global
    // split restricted per tactic); anything lower re-splits per tactic,
    // stratified by technique, with the training seed.
    double technique_split_fraction = 1.0;
};

/// Tactic model plus per-tactic technique models sharing one vectorizer.
/// The optional flat technique model serves the non-hierarchical technique
/// task modes. Immutable once trained; prediction is safe concurrently.
struct HierarchicalModel {
    Vectorizer vectorizer;
    LinearModel tactic_model;
    std::map<TacticId, LinearModel> technique_models;
    std::optional<LinearModel> flat_technique_model;
    AttackTaxonomy taxonomy;

    bool trained() const { return vectorizer.fitted() && !tactic_model.classes.empty(); }

    bool operator==(const HierarchicalModel&) const = default;
};

struct ScoredTechnique {
    TechniqueId technique;
    double score = 0.0;

    bool operator==(const ScoredTechnique&) const = default;
};

struct PairTuple {
    TacticId tactic;
    double tactic_score = 0.0;
    std::vector<ScoredTechnique> techniques;

    bool operator==(const PairTuple&) const = default;
};

/// Ranked tactics, each carrying its ranked technique list; flattening the
/// tuples yields the (tactic, technique) pair set.
using PairPrediction = std::vector<PairTuple>;

struct TaskMode {
    enum class Kind {
        MulticlassTactic,         // top-1 tactic
        MulticlassTechnique,      // top-1 technique, flat model
        MultilabelTactic,         // top-n tactics
        MultilabelTechnique,      // top-n techniques, flat model
        MixedMultilabel,          // top-n tactics plus top-n techniques
        MulticlassHierarchical,   // single (tactic, technique) pair
        MultilabelHierarchical,   // n tactics x m techniques
    };

    Kind kind = Kind::MulticlassTactic;
    std::size_t n = 1;
    std::size_t m = 1;
};

/// Output of predict_task; which fields are populated depends on the mode.
struct TaskOutput {
    TaskMode mode;
    RankedPrediction tactics;     // tactic modes and mixed mode
    RankedPrediction techniques;  // flat technique modes and mixed mode
    PairPrediction pairs;         // hierarchical modes
};

namespace detail {

inline LinearModel train_component(const std::vector<SparseVector>& vectors,
                                   const std::vector<std::string>& labels,
                                   const Hyperparams& hp, const LinearModel* warm,
                                   const std::string& what) {
    try {
        return train_multiclass(vectors, labels, hp, warm);
    } catch (const Error& e) {
        throw Error("while training " + what + ": " + e.what());
    }
}

} // namespace detail

/// Fits the vectorizer once over all training texts, trains the tactic model
/// on one (vector, tactic) pair per tactic label, then per-tactic technique
/// models on the tactic-specific subsets (only labels that are taxonomy
/// children of the tactic count; tactics with fewer than two distinct
/// technique labels get no model). Per-tactic models train as independent
/// concurrent tasks and are merged in ascending tactic order.
inline HierarchicalModel train_hierarchical(const Corpus& corpus,
                                            const AttackTaxonomy& taxonomy,
                                            const VectorizerConfig& vec_config,
                                            const Hyperparams& hp,
                                            const TrainOptions& options = {},
                                            const HierarchicalModel* warm_start = nullptr) {
    if (corpus.empty()) throw EmptyCorpus("cannot train on an empty corpus");

    for (const LabeledSentence& s : corpus.sentences) {
        for (const TacticId& ta : s.tactic_labels)
            if (!taxonomy.has_tactic(ta))
                throw ValidationError("corpus labels tactic " + ta.value() +
                                      " that the taxonomy does not define");
        for (const TechniqueId& te : s.technique_labels)
            if (!taxonomy.has_technique(te))
                throw ValidationError("corpus labels technique " + te.value() +
                                      " that the taxonomy does not define");
    }

    HierarchicalModel model;
    model.taxonomy = taxonomy;

    if (warm_start) {
        // Warm starts keep the prior feature space; refitting would move
        // every index under the copied weights.
        model.vectorizer = warm_start->vectorizer;
    } else {
        std::vector<std::string> texts;
        texts.reserve(corpus.size());
        for (const LabeledSentence& s : corpus.sentences) texts.push_back(s.text);
        model.vectorizer = (vec_config.kind == Vectorizer::Kind::Vocabulary)
                               ? fit_vocabulary_tfidf(texts)
                               : fit_hashed_tfidf(texts, vec_config.hash_bits,
                                                  vec_config.hash_seed);
    }

    std::vector<SparseVector> vectors;
    vectors.reserve(corpus.size());
    for (const LabeledSentence& s : corpus.sentences)
        vectors.push_back(model.vectorizer.transform(s.text));

    // Tactic level: multi-label sentences contribute one pair per label.
    std::vector<SparseVector> tactic_vectors;
    std::vector<std::string> tactic_labels;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        for (const TacticId& ta : corpus.sentences[i].tactic_labels) {
            tactic_vectors.push_back(vectors[i]);
            tactic_labels.push_back(ta.value());
        }
    if (tactic_vectors.empty())
        throw EmptyCorpus("no sentence carries a tactic label");
    model.tactic_model = detail::train_component(
        tactic_vectors, tactic_labels, hp,
        warm_start ? &warm_start->tactic_model : nullptr, "the tactic model");

    // Technique level, one data set per tactic.
    struct TacticSubset {
        std::vector<std::size_t> sentence_ids;
        std::vector<std::vector<TechniqueId>> techniques;  // valid children only
    };
    std::map<TacticId, TacticSubset> subsets;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (const TacticId& ta : corpus.sentences[i].tactic_labels) {
            std::vector<TechniqueId> valid;
            for (const TechniqueId& te : corpus.sentences[i].technique_labels)
                if (taxonomy.validate_pair(ta, te)) valid.push_back(te);
            if (valid.empty()) continue;
            subsets[ta].sentence_ids.push_back(i);
            subsets[ta].techniques.push_back(std::move(valid));
        }
    }

    std::vector<std::pair<TacticId, std::future<LinearModel>>> pending;
    for (auto& [tactic, subset] : subsets) {
        std::vector<std::size_t> selected(subset.sentence_ids.size());
        std::iota(selected.begin(), selected.end(), 0);
        if (options.technique_split_fraction < 1.0) {
            if (!(options.technique_split_fraction > 0.0))
                throw InvalidFraction("technique split fraction must lie in (0, 1]");
            // Fresh per-tactic split, stratified by the smallest technique.
            std::map<TechniqueId, std::vector<std::size_t>> strata;
            for (std::size_t k = 0; k < subset.sentence_ids.size(); ++k)
                strata[*std::min_element(subset.techniques[k].begin(),
                                         subset.techniques[k].end())]
                    .push_back(k);
            SplitMix64 rng(hp.seed);
            selected.clear();
            for (auto& [key, members] : strata) {
                (void)key;
                rng.shuffle(members);
                std::size_t keep = detail::round_half_even(
                    options.technique_split_fraction * static_cast<double>(members.size()));
                for (std::size_t k = 0; k < keep; ++k) selected.push_back(members[k]);
            }
            std::sort(selected.begin(), selected.end());
        }

        std::vector<SparseVector> tech_vectors;
        std::vector<std::string> tech_labels;
        std::set<std::string> distinct;
        for (std::size_t k : selected)
            for (const TechniqueId& te : subset.techniques[k]) {
                tech_vectors.push_back(vectors[subset.sentence_ids[k]]);
                tech_labels.push_back(te.value());
                distinct.insert(te.value());
            }
        if (distinct.size() < 2) continue;  // nothing trainable for this tactic

        const LinearModel* warm = nullptr;
        if (warm_start) {
            auto it = warm_start->technique_models.find(tactic);
            if (it != warm_start->technique_models.end()) warm = &it->second;
        }
        const TacticId id = tactic;
        pending.emplace_back(
            id, std::async(std::launch::async,
                           [vecs = std::move(tech_vectors), labs = std::move(tech_labels),
                            hp, warm, id] {
                               return detail::train_component(
                                   vecs, labs, hp, warm,
                                   "the technique model for " + id.value());
                           }));
    }
    for (auto& [tactic, future] : pending)
        model.technique_models.emplace(tactic, future.get());

    if (options.train_flat_technique) {
        std::vector<SparseVector> flat_vectors;
        std::vector<std::string> flat_labels;
        for (std::size_t i = 0; i < corpus.size(); ++i)
            for (const TechniqueId& te : corpus.sentences[i].technique_labels) {
                flat_vectors.push_back(vectors[i]);
                flat_labels.push_back(te.value());
            }
        if (flat_vectors.empty())
            throw EmptyCorpus("no sentence carries a technique label; "
                              "cannot train the flat technique model");
        const LinearModel* warm = nullptr;
        if (warm_start && warm_start->flat_technique_model)
            warm = &*warm_start->flat_technique_model;
        model.flat_technique_model = detail::train_component(
            flat_vectors, flat_labels, hp, warm, "the flat technique model");
    }
    return model;
}

/// Top-n tactics, then for each the top-m techniques from its tactic-specific
/// model (fewer when the model has fewer classes, an empty list when the
/// tactic has no model). Every returned (tactic, technique) pair is
/// parent-consistent by construction.
inline PairPrediction predict_pairs(const HierarchicalModel& h, std::string_view text,
                                    std::size_t n, std::size_t m) {
    if (!h.trained()) throw NotTrained("hierarchical model has not been trained");
    if (m < 1) throw NOutOfRange("m must be at least 1");

    SparseVector x = h.vectorizer.transform(text);
    PairPrediction out;
    for (const LabelScore& tactic : predict_top_n(h.tactic_model, x, n)) {
        PairTuple tuple;
        tuple.tactic = TacticId(tactic.label);
        tuple.tactic_score = tactic.score;
        auto it = h.technique_models.find(tuple.tactic);
        if (it != h.technique_models.end()) {
            std::size_t take = std::min(m, it->second.classes.size());
            for (const LabelScore& tech : predict_top_n(it->second, x, take))
                tuple.techniques.push_back({TechniqueId(tech.label), tech.score});
        }
        out.push_back(std::move(tuple));
    }
    return out;
}

/// Task-mode dispatch over the trained components.
inline TaskOutput predict_task(const HierarchicalModel& h, std::string_view text,
                               const TaskMode& mode) {
    if (!h.trained()) throw NotTrained("hierarchical model has not been trained");

    auto require_flat = [&]() -> const LinearModel& {
        if (!h.flat_technique_model)
            throw MissingComponent("this task mode needs the flat technique model; "
                                   "train with the flat-technique option enabled");
        return *h.flat_technique_model;
    };

    TaskOutput out;
    out.mode = mode;
    switch (mode.kind) {
        case TaskMode::Kind::MulticlassTactic:
            out.tactics = predict_top_n(h.tactic_model, h.vectorizer.transform(text), 1);
            break;
        case TaskMode::Kind::MulticlassTechnique:
            out.techniques = predict_top_n(require_flat(), h.vectorizer.transform(text), 1);
            break;
        case TaskMode::Kind::MultilabelTactic:
            out.tactics = predict_top_n(h.tactic_model, h.vectorizer.transform(text), mode.n);
            break;
        case TaskMode::Kind::MultilabelTechnique:
            out.techniques = predict_top_n(require_flat(), h.vectorizer.transform(text), mode.n);
            break;
        case TaskMode::Kind::MixedMultilabel: {
            const LinearModel& flat = require_flat();
            SparseVector x = h.vectorizer.transform(text);
            out.tactics = predict_top_n(h.tactic_model, x, mode.n);
            out.techniques = predict_top_n(flat, x, mode.n);
            break;
        }
        case TaskMode::Kind::MulticlassHierarchical:
            out.pairs = predict_pairs(h, text, 1, 1);
            break;
        case TaskMode::Kind::MultilabelHierarchical:
            out.pairs = predict_pairs(h, text, mode.n, mode.m);
            break;
    }
    return out;
}

} // namespace atktag
