#pragma once

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "atktag/corpus.hpp"
#include "atktag/errors.hpp"
#include "atktag/hierarchy.hpp"

namespace atktag {

enum class Metric {
    Multiclass,    // exact top-1 match
    TopNSubset,    // gold labels contained in the top-n set
    Pairs,         // gold (tactic, technique) among the flattened pairs
    Intersection,  // |gold set and top-n set| credit, multi-label data
};

inline std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Multiclass: return "multiclass-accuracy";
        case Metric::TopNSubset: return "top-n-subset-accuracy";
        case Metric::Pairs: return "pair-accuracy";
        case Metric::Intersection: return "intersection-accuracy";
    }
    return "?";
}

inline std::string task_mode_name(const TaskMode& mode) {
    switch (mode.kind) {
        case TaskMode::Kind::MulticlassTactic: return "multiclass-tactic";
        case TaskMode::Kind::MulticlassTechnique: return "multiclass-technique";
        case TaskMode::Kind::MultilabelTactic:
            return "multilabel-tactic(n=" + std::to_string(mode.n) + ")";
        case TaskMode::Kind::MultilabelTechnique:
            return "multilabel-technique(n=" + std::to_string(mode.n) + ")";
        case TaskMode::Kind::MixedMultilabel:
            return "mixed-multilabel(n=" + std::to_string(mode.n) + ")";
        case TaskMode::Kind::MulticlassHierarchical: return "multiclass-hierarchical";
        case TaskMode::Kind::MultilabelHierarchical:
            return "multilabel-hierarchical(n=" + std::to_string(mode.n) +
                   ",m=" + std::to_string(mode.m) + ")";
    }
    return "?";
}

/// Fraction of exact matches between two equal-length label lists.
inline double multiclass_accuracy(const std::vector<std::string>& gt,
                                  const std::vector<std::string>& pred) {
    if (gt.size() != pred.size())
        throw LengthMismatch("label lists differ in length: " + std::to_string(gt.size()) +
                             " vs " + std::to_string(pred.size()));
    if (gt.empty()) throw LengthMismatch("label lists must be non-empty");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt[i] == pred[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(gt.size());
}

namespace detail {

struct F1Counts {
    std::size_t tp = 0, fp = 0, fn = 0;

    double f1() const {
        double denom = static_cast<double>(2 * tp + fp + fn);
        if (denom == 0.0) return 0.0;
        return 2.0 * static_cast<double>(tp) / denom;
    }
};

inline std::map<std::string, F1Counts> confusion(const std::vector<std::string>& gt,
                                                 const std::vector<std::string>& pred) {
    if (gt.size() != pred.size())
        throw LengthMismatch("label lists differ in length: " + std::to_string(gt.size()) +
                             " vs " + std::to_string(pred.size()));
    std::map<std::string, F1Counts> counts;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == pred[i]) {
            ++counts[gt[i]].tp;
        } else {
            ++counts[gt[i]].fn;
            ++counts[pred[i]].fp;
        }
    }
    return counts;
}

} // namespace detail

/// Unweighted mean, over the classes present in gt, of the per-class F1
/// (0 when a class has neither precision nor recall).
inline double macro_f1(const std::vector<std::string>& gt,
                       const std::vector<std::string>& pred) {
    auto counts = detail::confusion(gt, pred);
    std::size_t classes = 0;
    double sum = 0.0;
    for (const auto& [label, c] : counts) {
        if (c.tp + c.fn == 0) continue;  // never in gt, only predicted
        ++classes;
        sum += c.f1();
    }
    return classes == 0 ? 0.0 : sum / static_cast<double>(classes);
}

/// Support-weighted mean of per-class F1 over classes present in gt.
inline double weighted_f1(const std::vector<std::string>& gt,
                          const std::vector<std::string>& pred) {
    auto counts = detail::confusion(gt, pred);
    double sum = 0.0;
    std::size_t support = 0;
    for (const auto& [label, c] : counts) {
        std::size_t n = c.tp + c.fn;
        if (n == 0) continue;
        support += n;
        sum += c.f1() * static_cast<double>(n);
    }
    return support == 0 ? 0.0 : sum / static_cast<double>(support);
}

/// True iff the gold tactic appears among the ranked labels.
inline bool top_n_subset_accuracy(const TacticId& gt, const RankedPrediction& pred) {
    for (const LabelScore& p : pred)
        if (p.label == gt.value()) return true;
    return false;
}

/// True iff the gold (tactic, technique) pair appears among the flattened
/// pairs. Pairs, not bags: the technique must sit under the gold tactic.
inline bool pair_accuracy(const std::pair<TacticId, TechniqueId>& gt,
                          const PairPrediction& pred) {
    for (const PairTuple& tuple : pred) {
        if (tuple.tactic != gt.first) continue;
        for (const ScoredTechnique& t : tuple.techniques)
            if (t.technique == gt.second) return true;
    }
    return false;
}

/// Cardinality of the intersection between the gold tactic set and the
/// ranked label set.
inline std::size_t intersection_count(const std::set<TacticId>& gt,
                                      const RankedPrediction& pred) {
    std::size_t count = 0;
    for (const TacticId& t : gt)
        if (top_n_subset_accuracy(t, pred)) ++count;
    return count;
}

struct TacticBreakdown {
    std::size_t total = 0;
    std::size_t correct = 0;

    double accuracy() const {
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }

    bool operator==(const TacticBreakdown&) const = default;
};

/// Evaluation summary in the shape of the classic report tables: overall
/// accuracy, a per-tactic breakdown, F1 for multiclass runs, and the
/// tactic/technique/pair auxiliary counts for hierarchical runs.
struct EvalReport {
    std::string metric;
    std::string mode;
    std::size_t total_predictions = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::map<TacticId, TacticBreakdown> per_tactic;
    std::map<TacticId, std::string> tactic_names;

    std::optional<double> macro_f1;
    std::optional<double> weighted_f1;

    std::optional<std::size_t> tactics_correct;
    std::optional<std::size_t> techniques_correct;
    std::optional<std::size_t> both_correct;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["metric"] = metric;
        j["mode"] = mode;
        j["total_predictions"] = total_predictions;
        j["correct"] = correct;
        j["accuracy"] = accuracy;
        nlohmann::json per;
        for (const auto& [id, row] : per_tactic) {
            nlohmann::json entry;
            entry["total"] = row.total;
            entry["correct"] = row.correct;
            entry["accuracy"] = row.accuracy();
            auto name = tactic_names.find(id);
            if (name != tactic_names.end()) entry["name"] = name->second;
            per[id.value()] = std::move(entry);
        }
        j["per_tactic"] = std::move(per);
        if (macro_f1) j["macro_f1"] = *macro_f1;
        if (weighted_f1) j["weighted_f1"] = *weighted_f1;
        if (tactics_correct) j["tactics_correct"] = *tactics_correct;
        if (techniques_correct) j["techniques_correct"] = *techniques_correct;
        if (both_correct) j["both_correct"] = *both_correct;
        return j;
    }

    std::string to_table() const {
        std::ostringstream os;
        os << std::fixed << std::setprecision(4);
        auto row = [&](const std::string& label, const std::string& value) {
            os << std::left << std::setw(34) << label << value << '\n';
        };
        row("Evaluation Attribute", "Value");
        row(std::string(20, '-'), std::string(10, '-'));
        {
            std::ostringstream v;
            v << std::fixed << std::setprecision(4) << accuracy;
            row("Accuracy (" + metric + ")", v.str());
        }
        if (macro_f1) {
            std::ostringstream v;
            v << std::fixed << std::setprecision(4) << *macro_f1;
            row("F1 (macro)", v.str());
        }
        if (weighted_f1) {
            std::ostringstream v;
            v << std::fixed << std::setprecision(4) << *weighted_f1;
            row("F1 (weighted)", v.str());
        }
        if (tactics_correct) row("Tactics correct", std::to_string(*tactics_correct));
        if (techniques_correct)
            row("Techniques correct", std::to_string(*techniques_correct));
        if (both_correct) row("Both correct predictions", std::to_string(*both_correct));
        row("Total predictions", std::to_string(total_predictions));
        os << '\n';
        row("Accuracy parsed by Tactic", "");
        for (const auto& [id, breakdown] : per_tactic) {
            std::ostringstream v;
            v << std::fixed << std::setprecision(4) << breakdown.accuracy();
            auto name = tactic_names.find(id);
            std::string label = name != tactic_names.end() && !name->second.empty()
                                    ? name->second + " (" + id.value() + ")"
                                    : id.value();
            row(label, v.str());
        }
        return os.str();
    }
};

namespace detail {

inline bool metric_compatible(const TaskMode& mode, Metric metric) {
    switch (metric) {
        case Metric::Multiclass:
            return mode.kind == TaskMode::Kind::MulticlassTactic ||
                   mode.kind == TaskMode::Kind::MulticlassTechnique;
        case Metric::TopNSubset:
            return mode.kind == TaskMode::Kind::MultilabelTactic ||
                   mode.kind == TaskMode::Kind::MultilabelTechnique ||
                   mode.kind == TaskMode::Kind::MixedMultilabel;
        case Metric::Pairs:
            return mode.kind == TaskMode::Kind::MulticlassHierarchical ||
                   mode.kind == TaskMode::Kind::MultilabelHierarchical;
        case Metric::Intersection:
            return mode.kind == TaskMode::Kind::MultilabelTactic;
    }
    return false;
}

// A sentence takes part in an evaluation only when it carries every label
// kind the metric consumes.
inline bool sentence_evaluable(const LabeledSentence& s, const TaskMode& mode,
                               Metric metric) {
    if (!s.has_tactic_labels()) return false;  // unlabeled rows never count
    switch (mode.kind) {
        case TaskMode::Kind::MulticlassTechnique:
        case TaskMode::Kind::MultilabelTechnique:
            return !s.technique_labels.empty();
        case TaskMode::Kind::MulticlassHierarchical:
        case TaskMode::Kind::MultilabelHierarchical:
            return !s.technique_labels.empty();
        default:
            (void)metric;
            return true;
    }
}

} // namespace detail

/// Runs the task mode over every evaluable test sentence and aggregates the
/// chosen metric overall and per tactic (a sentence counts toward each of
/// its gold tactics). Pair runs also report tactics/techniques/both counts;
/// multiclass runs also report macro and weighted F1 (gold label for F1 =
/// the lexicographically smallest gold label). Intersection runs use the
/// total gold label count as the denominator.
inline EvalReport evaluate_run(const HierarchicalModel& h, const Corpus& test,
                               const TaskMode& mode, Metric metric) {
    if (!detail::metric_compatible(mode, metric))
        throw IncompatibleMetric(metric_name(metric) + " cannot score " +
                                 task_mode_name(mode));

    EvalReport report;
    report.metric = metric_name(metric);
    report.mode = task_mode_name(mode);
    for (const auto& [id, name] : h.taxonomy.tactics()) report.tactic_names[id] = name;

    std::vector<std::string> f1_gt, f1_pred;
    std::size_t tactics_correct = 0, techniques_correct = 0, both_correct = 0;

    for (const LabeledSentence& s : test.sentences) {
        if (!detail::sentence_evaluable(s, mode, metric)) continue;
        TaskOutput out = predict_task(h, s.text, mode);

        switch (metric) {
            case Metric::Multiclass: {
                bool tactic_task = mode.kind == TaskMode::Kind::MulticlassTactic;
                const RankedPrediction& ranked = tactic_task ? out.tactics : out.techniques;
                std::string top1 = ranked.front().label;
                bool hit;
                std::string gold;
                if (tactic_task) {
                    hit = s.tactic_labels.count(TacticId(top1)) != 0;
                    gold = s.tactic_labels.begin()->value();
                } else {
                    hit = s.technique_labels.count(TechniqueId(top1)) != 0;
                    gold = s.technique_labels.begin()->value();
                }
                f1_gt.push_back(gold);
                f1_pred.push_back(top1);
                ++report.total_predictions;
                if (hit) ++report.correct;
                for (const TacticId& t : s.tactic_labels) {
                    auto& row = report.per_tactic[t];
                    ++row.total;
                    // Tactic rows score against their own tactic; technique
                    // tasks attribute the sentence outcome.
                    if (tactic_task ? (top1 == t.value()) : hit) ++row.correct;
                }
                break;
            }
            case Metric::TopNSubset: {
                bool hit = true;
                if (mode.kind == TaskMode::Kind::MultilabelTactic ||
                    mode.kind == TaskMode::Kind::MixedMultilabel)
                    for (const TacticId& t : s.tactic_labels)
                        hit = hit && top_n_subset_accuracy(t, out.tactics);
                if (mode.kind == TaskMode::Kind::MultilabelTechnique ||
                    mode.kind == TaskMode::Kind::MixedMultilabel)
                    for (const TechniqueId& t : s.technique_labels) {
                        bool found = false;
                        for (const LabelScore& p : out.techniques)
                            found = found || p.label == t.value();
                        hit = hit && found;
                    }
                ++report.total_predictions;
                if (hit) ++report.correct;
                for (const TacticId& t : s.tactic_labels) {
                    auto& row = report.per_tactic[t];
                    ++row.total;
                    if (mode.kind == TaskMode::Kind::MultilabelTactic
                            ? top_n_subset_accuracy(t, out.tactics)
                            : hit)
                        ++row.correct;
                }
                break;
            }
            case Metric::Pairs: {
                std::pair<TacticId, TechniqueId> gt{*s.tactic_labels.begin(),
                                                    *s.technique_labels.begin()};
                bool pair_hit = pair_accuracy(gt, out.pairs);
                bool tactic_hit = false;
                bool technique_hit = false;
                for (const PairTuple& tuple : out.pairs) {
                    if (tuple.tactic == gt.first) {
                        tactic_hit = true;
                        for (const ScoredTechnique& t : tuple.techniques)
                            if (t.technique == gt.second) technique_hit = true;
                    }
                }
                if (tactic_hit) ++tactics_correct;
                if (technique_hit) ++techniques_correct;
                if (pair_hit) ++both_correct;
                ++report.total_predictions;
                if (pair_hit) ++report.correct;
                for (const TacticId& t : s.tactic_labels) {
                    auto& row = report.per_tactic[t];
                    ++row.total;
                    if (pair_hit) ++row.correct;
                }
                break;
            }
            case Metric::Intersection: {
                std::size_t count =
                    std::min(intersection_count(s.tactic_labels, out.tactics), mode.n);
                report.total_predictions += s.tactic_labels.size();
                report.correct += count;
                for (const TacticId& t : s.tactic_labels) {
                    auto& row = report.per_tactic[t];
                    ++row.total;
                    if (top_n_subset_accuracy(t, out.tactics)) ++row.correct;
                }
                break;
            }
        }
    }

    if (report.total_predictions == 0)
        throw EmptyTestSet("no test sentence carries the labels this evaluation needs");

    report.accuracy = static_cast<double>(report.correct) /
                      static_cast<double>(report.total_predictions);
    if (metric == Metric::Multiclass) {
        report.macro_f1 = atktag::macro_f1(f1_gt, f1_pred);
        report.weighted_f1 = atktag::weighted_f1(f1_gt, f1_pred);
    }
    if (metric == Metric::Pairs) {
        report.tactics_correct = tactics_correct;
        report.techniques_correct = techniques_correct;
        report.both_correct = both_correct;
    }
    return report;
}

} // namespace atktag
