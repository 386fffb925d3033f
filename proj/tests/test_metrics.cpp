#include <catch2/catch_amalgamated.hpp>

#include "atktag/metrics.hpp"

#include "helpers.hpp"

using namespace atktag;

namespace {

PairPrediction pairs(std::initializer_list<
                     std::pair<const char*, std::initializer_list<const char*>>> spec) {
    PairPrediction out;
    double score = static_cast<double>(spec.size());
    for (const auto& [tactic, techniques] : spec) {
        PairTuple tuple;
        tuple.tactic = TacticId(tactic);
        tuple.tactic_score = score--;
        double ts = 1.0;
        for (const char* t : techniques) tuple.techniques.push_back({TechniqueId(t), ts--});
        out.push_back(std::move(tuple));
    }
    return out;
}

RankedPrediction ranked(std::initializer_list<const char*> labels) {
    RankedPrediction out;
    double score = static_cast<double>(labels.size());
    for (const char* l : labels) out.push_back({l, score--});
    return out;
}

HierarchicalModel trained_fixture(double overlap, std::uint64_t seed,
                                  std::size_t per_tactic = 40) {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    DistributionSpec spec;
    for (const char* t : {"TA0002", "TA0007", "TA0009", "TA0040"})
        spec.counts[TacticId(t)] = per_tactic;
    spec.overlap = overlap;
    spec.seed = seed;
    Corpus corpus = synth_corpus(spec, tax);
    TrainOptions options;
    options.train_flat_technique = true;
    return train_hierarchical(corpus, tax, {}, Hyperparams{.epochs = 5}, options);
}

Corpus test_fixture(double overlap, std::uint64_t seed, std::size_t per_tactic = 15) {
    AttackTaxonomy tax = testutil::fixture_taxonomy();
    DistributionSpec spec;
    for (const char* t : {"TA0002", "TA0007", "TA0009", "TA0040"})
        spec.counts[TacticId(t)] = per_tactic;
    spec.overlap = overlap;
    spec.seed = seed;
    return synth_corpus(spec, tax);
}

} // namespace

TEST_CASE("multiclass accuracy counts exact matches", "[metrics]") {
    CHECK_THAT(multiclass_accuracy({"A", "A", "B"}, {"A", "B", "B"}),
               Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK(multiclass_accuracy({"A", "B"}, {"A", "B"}) == 1.0);
    CHECK(multiclass_accuracy({"A", "B"}, {"B", "A"}) == 0.0);
    CHECK_THROWS_AS(multiclass_accuracy({"A"}, {"A", "B"}), LengthMismatch);
    CHECK_THROWS_AS(multiclass_accuracy({}, {}), LengthMismatch);
}

TEST_CASE("macro f1 averages per-class f1 over gold classes", "[metrics]") {
    // F1_A = 2/3, F1_B = 2/3 -> macro 2/3
    CHECK_THAT(macro_f1({"A", "A", "B"}, {"A", "B", "B"}),
               Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    CHECK(macro_f1({"A", "B", "C"}, {"A", "B", "C"}) == 1.0);
    // C never predicted: F1_A = 0.5, F1_B = 0, F1_C = 0 -> macro 1/6
    CHECK_THAT(macro_f1({"A", "B", "C"}, {"A", "A", "A"}),
               Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-15));
    // classes only ever predicted (never in gt) do not dilute the mean
    CHECK_THAT(macro_f1({"A", "A"}, {"A", "Z"}),
               Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
}

TEST_CASE("weighted f1 weights by gold support", "[metrics]") {
    // A: n=2, F1=2/3; B: n=1, F1=2/3 -> weighted 2/3
    CHECK_THAT(weighted_f1({"A", "A", "B"}, {"A", "B", "B"}),
               Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
    // A: n=2 F1=0.8 (tp=1 wait) -- hand case: gt AAB, pred AAB -> 1.0
    CHECK(weighted_f1({"A", "A", "B"}, {"A", "A", "B"}) == 1.0);
}

TEST_CASE("top-n subset accuracy is membership", "[metrics]") {
    CHECK(top_n_subset_accuracy(TacticId("TA0007"),
                                ranked({"TA0007", "TA0002", "TA0040"})));
    CHECK_FALSE(top_n_subset_accuracy(TacticId("TA0040"),
                                      ranked({"TA0007", "TA0002", "TA0003"})));
    RankedPrediction all;
    for (const auto& [id, name] : testutil::fixture_taxonomy().tactics()) {
        (void)name;
        all.push_back({id.value(), 0.0});
    }
    CHECK(top_n_subset_accuracy(TacticId("TA0010"), all));
}

TEST_CASE("pair accuracy needs the exact pair, not the bag", "[metrics]") {
    PairPrediction pred = pairs({{"TA0007", {"T1082", "T1057"}},
                                 {"TA0002", {"T1059"}},
                                 {"TA0005", {"T1055"}}});
    CHECK(pair_accuracy({TacticId("TA0007"), TechniqueId("T1082")}, pred));
    // gold tactic predicted, gold technique missing from its list
    CHECK_FALSE(pair_accuracy({TacticId("TA0007"), TechniqueId("T1018")}, pred));
    // gold technique present, but only under a different tactic
    CHECK_FALSE(pair_accuracy({TacticId("TA0002"), TechniqueId("T1055")}, pred));
    // gold tactic absent entirely
    CHECK_FALSE(pair_accuracy({TacticId("TA0040"), TechniqueId("T1486")}, pred));
}

TEST_CASE("intersection count", "[metrics]") {
    std::set<TacticId> gt{TacticId("TA0001"), TacticId("TA0002"), TacticId("TA0003"),
                          TacticId("TA0004")};
    CHECK(intersection_count(gt, ranked({"TA0001", "TA0002", "TA0042"})) == 2);
    std::set<TacticId> small{TacticId("TA0001"), TacticId("TA0002")};
    CHECK(intersection_count(small, ranked({"TA0001", "TA0002", "TA0042"})) == 2);
    CHECK(intersection_count(small, ranked({"TA0040", "TA0042", "TA0043"})) == 0);
}

TEST_CASE("incompatible metric and mode combinations are rejected", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.0, 3);
    Corpus test = test_fixture(0.0, 4);
    CHECK_THROWS_AS(evaluate_run(h, test, {TaskMode::Kind::MulticlassTactic},
                                 Metric::Pairs),
                    IncompatibleMetric);
    CHECK_THROWS_AS(evaluate_run(h, test, {TaskMode::Kind::MultilabelHierarchical, 3, 3},
                                 Metric::TopNSubset),
                    IncompatibleMetric);
    CHECK_THROWS_AS(evaluate_run(h, test, {TaskMode::Kind::MulticlassHierarchical},
                                 Metric::Intersection),
                    IncompatibleMetric);
}

TEST_CASE("evaluation rejects corpora with nothing to score", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.0, 3);
    Corpus empty_labels;
    empty_labels.sentences.push_back(testutil::sentence("no labels at all", {}));
    CHECK_THROWS_AS(evaluate_run(h, empty_labels, {TaskMode::Kind::MulticlassTactic},
                                 Metric::Multiclass),
                    EmptyTestSet);
}

TEST_CASE("pair-mode evaluation ships the auxiliary counts", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.2, 5);
    Corpus test = test_fixture(0.2, 6);
    EvalReport report = evaluate_run(h, test, {TaskMode::Kind::MultilabelHierarchical, 3, 3},
                                     Metric::Pairs);
    CHECK(report.total_predictions == test.size());
    REQUIRE(report.tactics_correct.has_value());
    REQUIRE(report.techniques_correct.has_value());
    REQUIRE(report.both_correct.has_value());
    CHECK(*report.techniques_correct == *report.both_correct);
    CHECK(*report.tactics_correct >= *report.both_correct);
    CHECK(report.correct == *report.both_correct);

    // single-label data: per-tactic counts recombine exactly
    std::size_t total = 0, correct = 0;
    for (const auto& [tactic, row] : report.per_tactic) {
        total += row.total;
        correct += row.correct;
    }
    CHECK(total == report.total_predictions);
    CHECK(correct == report.correct);
}

TEST_CASE("tactic top-n at n=1 equals multiclass accuracy", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.4, 7);
    Corpus test = test_fixture(0.4, 8);
    EvalReport top1 = evaluate_run(h, test, {TaskMode::Kind::MultilabelTactic, 1},
                                   Metric::TopNSubset);
    EvalReport mc = evaluate_run(h, test, {TaskMode::Kind::MulticlassTactic},
                                 Metric::Multiclass);
    CHECK(top1.total_predictions == mc.total_predictions);
    CHECK(top1.correct == mc.correct);
    CHECK(top1.accuracy == mc.accuracy);
    CHECK(mc.macro_f1.has_value());
    CHECK(mc.weighted_f1.has_value());
}

TEST_CASE("top-n accuracy never decreases with n", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.5, 9);
    Corpus test = test_fixture(0.5, 10);
    double prev = -1.0;
    for (std::size_t n = 1; n <= h.tactic_model.classes.size(); ++n) {
        EvalReport r = evaluate_run(h, test, {TaskMode::Kind::MultilabelTactic, n},
                                    Metric::TopNSubset);
        CHECK(r.accuracy >= prev);
        prev = r.accuracy;
    }
    CHECK(prev == 1.0);  // n = class count and single-label gold
}

TEST_CASE("intersection evaluation uses the gold label count as denominator", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.0, 11);
    // build a small multi-label corpus by merging pairs of sentences
    Corpus base = test_fixture(0.0, 12, 6);
    Corpus multi;
    for (std::size_t i = 0; i + 1 < base.sentences.size(); i += 2) {
        LabeledSentence s;
        s.text = base.sentences[i].text + " " + base.sentences[i + 1].text;
        s.tactic_labels = base.sentences[i].tactic_labels;
        for (const TacticId& t : base.sentences[i + 1].tactic_labels)
            s.tactic_labels.insert(t);
        multi.sentences.push_back(std::move(s));
    }
    EvalReport r = evaluate_run(h, multi, {TaskMode::Kind::MultilabelTactic, 3},
                                Metric::Intersection);
    std::size_t expected_total = 0;
    for (const LabeledSentence& s : multi.sentences) expected_total += s.tactic_labels.size();
    CHECK(r.total_predictions == expected_total);
    CHECK(r.correct <= r.total_predictions);
    CHECK(r.accuracy > 0.5);  // separable corpus, most labels recovered

    std::size_t per_tactic_total = 0;
    for (const auto& [tactic, row] : r.per_tactic) per_tactic_total += row.total;
    CHECK(per_tactic_total == expected_total);
}

TEST_CASE("reports serialize to sorted-key json and a table", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.3, 13);
    Corpus test = test_fixture(0.3, 14);
    EvalReport r = evaluate_run(h, test, {TaskMode::Kind::MultilabelTactic, 3},
                                Metric::TopNSubset);
    nlohmann::json j = r.to_json();
    CHECK(j.contains("accuracy"));
    CHECK(j.contains("per_tactic"));
    CHECK(j["total_predictions"].get<std::size_t>() == r.total_predictions);
    // nlohmann objects iterate in sorted key order; dump twice is stable
    CHECK(j.dump() == r.to_json().dump());

    std::string table = r.to_table();
    CHECK(table.find("Accuracy") != std::string::npos);
    CHECK(table.find("Total predictions") != std::string::npos);
    CHECK(table.find("parsed by Tactic") != std::string::npos);
    CHECK(table.find("Discovery") != std::string::npos);
}

TEST_CASE("unlabeled sentences are excluded from evaluation", "[metrics]") {
    HierarchicalModel h = trained_fixture(0.0, 15);
    Corpus test = test_fixture(0.0, 16, 5);
    std::size_t labeled = test.size();
    test.sentences.push_back(testutil::sentence("completely unlabeled text", {}));
    EvalReport r = evaluate_run(h, test, {TaskMode::Kind::MultilabelTactic, 3},
                                Metric::TopNSubset);
    CHECK(r.total_predictions == labeled);
}
