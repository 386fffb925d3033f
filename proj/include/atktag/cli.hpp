#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "atktag/corpus.hpp"
#include "atktag/errors.hpp"
#include "atktag/hierarchy.hpp"
#include "atktag/llm_baseline.hpp"
#include "atktag/llm_http.hpp"
#include "atktag/metrics.hpp"
#include "atktag/model_io.hpp"
#include "atktag/taxonomy.hpp"

namespace atktag {

/// Fully parsed and validated command line. Exit-code contract: 0 success,
/// 1 runtime failure, 2 usage error.
struct Command {
    enum class Verb { Split, Train, Predict, Evaluate, Synth, LlmEval };

    Verb verb = Verb::Split;
    bool help_only = false;
    std::string help_text;

    // shared inputs
    std::string corpus_path;
    std::string taxonomy_path;
    std::string model_path;
    std::uint64_t seed = 0;

    // split
    std::string train_out;
    std::string test_out;
    double fraction = 0.8;

    // train
    std::string out_path;
    std::string from_model;
    std::optional<int> hash_bits;
    std::uint32_t hash_seed = 0;
    Hyperparams hp;
    bool train_flat_technique = false;
    double technique_split = 1.0;
    bool include_unlabeled = false;

    // predict / evaluate
    std::string input_path = "-";
    std::string test_path;
    std::string mode_name = "pairs";
    std::size_t top_n = 3;
    std::size_t top_m = 3;
    std::string report_out;
    bool json_output = false;

    // llm-eval
    std::string audit_path;
    std::string mock;
    std::string llm_model_name;
    bool resume = false;
    std::size_t concurrency = 4;
};

namespace cli_detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path);
}

inline void require_readable(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(std::string(what) + " file does not exist or is unreadable: " + path);
}

inline Corpus drop_unlabeled(Corpus corpus, const char* context) {
    std::size_t before = corpus.sentences.size();
    std::erase_if(corpus.sentences,
                  [](const LabeledSentence& s) { return !s.has_tactic_labels(); });
    std::size_t dropped = before - corpus.sentences.size();
    if (dropped > 0)
        std::cerr << "note: dropped " << dropped << " sentence(s) without tactic labels for "
                  << context << "\n";
    if (corpus.empty()) throw EmptyCorpus("no tactic-labeled sentences left");
    return corpus;
}

inline HierarchicalModel load_hierarchical(const std::string& path) {
    LoadedModel loaded = load_model(read_file(path));
    if (!loaded.hierarchical)
        throw Error(path + " holds a standalone model; this command needs a "
                           "hierarchical bundle");
    return std::move(*loaded.hierarchical);
}

inline std::pair<TaskMode, Metric> resolve_mode(const std::string& name, std::size_t n,
                                                std::size_t m) {
    TaskMode mode;
    mode.n = n;
    mode.m = m;
    if (name == "tactic-top1") {
        mode.kind = TaskMode::Kind::MulticlassTactic;
        return {mode, Metric::Multiclass};
    }
    if (name == "technique-top1") {
        mode.kind = TaskMode::Kind::MulticlassTechnique;
        return {mode, Metric::Multiclass};
    }
    if (name == "tactic-topn") {
        mode.kind = TaskMode::Kind::MultilabelTactic;
        return {mode, Metric::TopNSubset};
    }
    if (name == "technique-topn") {
        mode.kind = TaskMode::Kind::MultilabelTechnique;
        return {mode, Metric::TopNSubset};
    }
    if (name == "mixed-topn") {
        mode.kind = TaskMode::Kind::MixedMultilabel;
        return {mode, Metric::TopNSubset};
    }
    if (name == "pair-top1") {
        mode.kind = TaskMode::Kind::MulticlassHierarchical;
        return {mode, Metric::Pairs};
    }
    if (name == "pairs") {
        mode.kind = TaskMode::Kind::MultilabelHierarchical;
        return {mode, Metric::Pairs};
    }
    if (name == "intersection") {
        mode.kind = TaskMode::Kind::MultilabelTactic;
        return {mode, Metric::Intersection};
    }
    throw UsageError("unknown evaluation mode '" + name +
                     "' (expected tactic-top1, technique-top1, tactic-topn, "
                     "technique-topn, mixed-topn, pair-top1, pairs, or intersection)");
}

inline nlohmann::json pair_prediction_json(std::string_view text, const PairPrediction& pred) {
    nlohmann::json line;
    line["text"] = std::string(text);
    nlohmann::json tactics = nlohmann::json::array();
    for (const PairTuple& tuple : pred) {
        nlohmann::json t;
        t["tactic"] = tuple.tactic.value();
        t["score"] = tuple.tactic_score;
        nlohmann::json techs = nlohmann::json::array();
        for (const ScoredTechnique& tech : tuple.techniques) {
            nlohmann::json e;
            e["technique"] = tech.technique.value();
            e["score"] = tech.score;
            techs.push_back(std::move(e));
        }
        t["techniques"] = std::move(techs);
        tactics.push_back(std::move(t));
    }
    line["tactics"] = std::move(tactics);
    return line;
}

} // namespace cli_detail

/// Parses argv (including the program name). Throws UsageError for anything
/// malformed; --help produces a Command with help_only set.
inline Command parse_args(const std::vector<std::string>& argv) {
    Command cmd;
    CLI::App app{"attack-tagger: hierarchical multi-label tagging of cyber-threat "
                 "intelligence text with MITRE ATT&CK tactics and techniques"};
    app.require_subcommand(1);

    auto* split = app.add_subcommand("split", "Stratified train/test split of a corpus");
    split->add_option("--corpus", cmd.corpus_path, "input corpus (JSONL)")->required();
    split->add_option("--train-out", cmd.train_out, "output path for the train part")->required();
    split->add_option("--test-out", cmd.test_out, "output path for the test part")->required();
    split->add_option("--fraction", cmd.fraction, "train fraction in (0,1)")
        ->default_val(0.8);
    split->add_option("--seed", cmd.seed, "shuffle seed")->default_val(0);

    auto* train = app.add_subcommand("train", "Train a hierarchical tagging model");
    train->add_option("--corpus", cmd.corpus_path, "training corpus (JSONL)")->required();
    auto* tax_opt = train->add_option("--taxonomy", cmd.taxonomy_path, "taxonomy file (JSON)");
    train->add_option("--out", cmd.out_path, "output model container")->required();
    auto* hash_opt = train->add_option(
        "--hash-bits", [&cmd](const std::vector<std::string>& values) {
            try {
                cmd.hash_bits = std::stoi(values.front());
            } catch (...) {
                return false;
            }
            return true;
        },
        "use the hashed feature space with this many index bits (omitting the "
        "flag selects the stored-vocabulary space)");
    hash_opt->type_name("INT");
    train->add_option("--hash-seed", cmd.hash_seed, "hash seed")->default_val(0);
    train->add_option("--eta0", cmd.hp.eta0, "initial learning rate")->default_val(0.1);
    train->add_option("--alpha", cmd.hp.alpha, "L2 regularization strength")
        ->default_val(1e-4);
    train->add_option("--epochs", cmd.hp.epochs, "training epochs")->default_val(10);
    train->add_option("--seed", cmd.hp.seed, "sample-order seed")->default_val(0);
    train->add_flag("--train-flat-technique", cmd.train_flat_technique,
                    "also train the flat (non-hierarchical) technique model");
    train->add_option("--technique-split", cmd.technique_split,
                      "fraction of each tactic-specific data set used for its "
                      "technique model; 1.0 uses all of it")
        ->default_val(1.0);
    train->add_flag("--include-unlabeled", cmd.include_unlabeled,
                    "let sentences without tactic labels feed the vectorizer and "
                    "flat technique model instead of dropping them");
    auto* from_opt = train->add_option(
        "--from", cmd.from_model,
        "warm-start from this model container (keeps its vectorizer and taxonomy; "
        "weights are copied for shared classes)");
    from_opt->excludes(tax_opt);
    from_opt->excludes(hash_opt);

    auto* predict = app.add_subcommand("predict", "Tag sentences, one JSON line each");
    predict->add_option("--model", cmd.model_path, "model container")->required();
    predict->add_option("--in", cmd.input_path,
                        "input file with one sentence per line, or - for stdin")
        ->default_val("-");
    predict->add_option("-n", cmd.top_n, "tactics per sentence")->default_val(3);
    predict->add_option("-m", cmd.top_m, "techniques per tactic")->default_val(3);

    auto* evaluate = app.add_subcommand("evaluate", "Score a model against a labeled corpus");
    evaluate->add_option("--model", cmd.model_path, "model container")->required();
    evaluate->add_option("--test", cmd.test_path, "test corpus (JSONL)")->required();
    evaluate->add_option("--mode", cmd.mode_name,
                         "tactic-top1 | technique-top1 | tactic-topn | technique-topn | "
                         "mixed-topn | pair-top1 | pairs | intersection")
        ->default_val("pairs");
    evaluate->add_option("-n", cmd.top_n, "tactics per sentence")->default_val(3);
    evaluate->add_option("-m", cmd.top_m, "techniques per tactic")->default_val(3);
    evaluate->add_option("--out", cmd.report_out, "also write the JSON report here");
    evaluate->add_flag("--json", cmd.json_output, "print JSON instead of the table");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus from a "
                                              "distribution spec");
    synth->add_option("--spec", cmd.input_path, "distribution spec (JSON)")->required();
    synth->add_option("--taxonomy", cmd.taxonomy_path, "taxonomy file (JSON)")->required();
    synth->add_option("--out", cmd.out_path, "output corpus path (JSONL)")->required();

    auto* llm = app.add_subcommand("llm-eval", "Run the LLM tagging baseline over a corpus");
    llm->add_option("--test", cmd.test_path, "test corpus (JSONL)")->required();
    llm->add_option("--taxonomy", cmd.taxonomy_path, "taxonomy file (JSON)")->required();
    llm->add_option("--audit", cmd.audit_path, "per-sentence JSONL audit file")->required();
    llm->add_flag("--resume", cmd.resume,
                  "skip sentences already present in the audit file");
    llm->add_option("--mock", cmd.mock,
                    "offline client: echo | wrong:TAxxxx | malformed (omit to use the "
                    "HTTP endpoint from ATTACK_TAGGER_LLM_* environment variables)");
    llm->add_option("--concurrency", cmd.concurrency, "parallel requests")->default_val(4);
    llm->add_option("--model-name", cmd.llm_model_name, "model name sent with requests");

    std::vector<const char*> cargs;
    cargs.reserve(argv.size());
    for (const std::string& a : argv) cargs.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp&) {
        cmd.help_only = true;
        cmd.help_text = app.help();
        return cmd;
    } catch (const CLI::ParseError& e) {
        throw UsageError(std::string(e.what()) + "\n\n" + app.help());
    }

    if (split->parsed()) cmd.verb = Command::Verb::Split;
    else if (train->parsed()) cmd.verb = Command::Verb::Train;
    else if (predict->parsed()) cmd.verb = Command::Verb::Predict;
    else if (evaluate->parsed()) cmd.verb = Command::Verb::Evaluate;
    else if (synth->parsed()) cmd.verb = Command::Verb::Synth;
    else if (llm->parsed()) cmd.verb = Command::Verb::LlmEval;

    if (train->parsed() && cmd.taxonomy_path.empty() && cmd.from_model.empty())
        throw UsageError("train needs either --taxonomy or --from\n\n" + train->help());
    if (evaluate->parsed()) cli_detail::resolve_mode(cmd.mode_name, 1, 1);  // name check
    if (llm->parsed() && !cmd.mock.empty() && cmd.mock != "echo" &&
        cmd.mock != "malformed" && cmd.mock.rfind("wrong:", 0) != 0)
        throw UsageError("--mock must be echo, malformed, or wrong:TAxxxx");
    return cmd;
}

namespace cli_detail {

inline int run_split(const Command& cmd) {
    Corpus corpus = drop_unlabeled(ingest(read_file(cmd.corpus_path)), "splitting");
    auto [train, test] = stratified_split(corpus, cmd.fraction, cmd.seed);
    write_file(cmd.train_out, to_jsonl(train));
    write_file(cmd.test_out, to_jsonl(test));
    std::cerr << "split " << corpus.size() << " sentences into " << train.size()
              << " train / " << test.size() << " test\n";
    return 0;
}

inline int run_train(const Command& cmd) {
    std::vector<std::string> warnings;
    Corpus corpus = ingest(read_file(cmd.corpus_path), &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    if (!cmd.include_unlabeled) corpus = drop_unlabeled(std::move(corpus), "training");

    HierarchicalModel model;
    TrainOptions options;
    options.train_flat_technique = cmd.train_flat_technique;
    options.technique_split_fraction = cmd.technique_split;

    if (!cmd.from_model.empty()) {
        HierarchicalModel prior = load_hierarchical(cmd.from_model);
        model = train_hierarchical(corpus, prior.taxonomy, {}, cmd.hp, options, &prior);
    } else {
        AttackTaxonomy taxonomy = load_taxonomy(read_file(cmd.taxonomy_path));
        VectorizerConfig vec;
        if (cmd.hash_bits) {
            vec.kind = Vectorizer::Kind::Hashed;
            vec.hash_bits = *cmd.hash_bits;
            vec.hash_seed = cmd.hash_seed;
        }
        model = train_hierarchical(corpus, taxonomy, vec, cmd.hp, options);
    }
    write_file(cmd.out_path, save_model(model));
    std::cerr << "trained tactic model over " << model.tactic_model.classes.size()
              << " tactics, " << model.technique_models.size()
              << " technique model(s); wrote " << cmd.out_path << "\n";
    return 0;
}

inline int run_predict(const Command& cmd) {
    HierarchicalModel model = load_hierarchical(cmd.model_path);
    std::size_t n = std::min(cmd.top_n, model.tactic_model.classes.size());

    std::ifstream file;
    std::istream* in = &std::cin;
    if (cmd.input_path != "-") {
        file.open(cmd.input_path, std::ios::binary);
        if (!file) throw Error("cannot open " + cmd.input_path);
        in = &file;
    }
    std::string line;
    while (std::getline(*in, line)) {
        if (detail::trim_copy(line).empty()) continue;
        PairPrediction pred = predict_pairs(model, line, n, cmd.top_m);
        std::cout << pair_prediction_json(line, pred).dump() << "\n";
    }
    return 0;
}

inline int run_evaluate(const Command& cmd) {
    HierarchicalModel model = load_hierarchical(cmd.model_path);
    Corpus test = ingest(read_file(cmd.test_path));
    std::size_t n = std::min(cmd.top_n, model.tactic_model.classes.size());
    auto [mode, metric] = resolve_mode(cmd.mode_name, n, cmd.top_m);
    EvalReport report = evaluate_run(model, test, mode, metric);
    if (cmd.json_output)
        std::cout << report.to_json().dump(2) << "\n";
    else
        std::cout << report.to_table();
    if (!cmd.report_out.empty())
        write_file(cmd.report_out, report.to_json().dump(2) + "\n");
    return 0;
}

inline int run_synth(const Command& cmd) {
    DistributionSpec spec = load_distribution_spec(read_file(cmd.input_path));
    AttackTaxonomy taxonomy = load_taxonomy(read_file(cmd.taxonomy_path));
    Corpus corpus = synth_corpus(spec, taxonomy);
    write_file(cmd.out_path, to_jsonl(corpus));
    std::cerr << "wrote " << corpus.size() << " synthetic sentences to " << cmd.out_path
              << "\n";
    return 0;
}

inline int run_llm_eval(const Command& cmd) {
    Corpus test = ingest(read_file(cmd.test_path));
    AttackTaxonomy taxonomy = load_taxonomy(read_file(cmd.taxonomy_path));

    LlmEvalOptions options;
    options.concurrency = cmd.concurrency;
    options.model_name = cmd.llm_model_name;

    if (cmd.resume) {
        std::ifstream existing(cmd.audit_path);
        std::string line;
        while (existing && std::getline(existing, line)) {
            if (detail::trim_copy(line).empty()) continue;
            options.resume.push_back(LlmAuditRecord::from_json(nlohmann::json::parse(line)));
        }
        if (!options.resume.empty())
            std::cerr << "resuming after " << options.resume.size() << " recorded result(s)\n";
    }

    std::ofstream audit(cmd.audit_path,
                        std::ios::binary | (cmd.resume ? std::ios::app : std::ios::trunc));
    if (!audit) throw Error("cannot write " + cmd.audit_path);
    options.audit = &audit;

    std::unique_ptr<ChatCompletionClient> client;
    if (cmd.mock == "echo") {
        std::map<std::string, std::string> gt;
        for (const LabeledSentence& s : test.sentences)
            if (s.has_tactic_labels()) gt[s.text] = s.tactic_labels.begin()->value();
        client = std::make_unique<FunctionChatClient>([gt](const PromptRequest& req) {
            ChatResult res;
            res.ok = true;
            // Recover the sentence from the prompt's final block.
            std::string_view marker = "cyber-intelligence text: \n";
            std::size_t at = req.prompt_text.rfind(marker);
            std::string sentence = req.prompt_text.substr(at + marker.size());
            if (!sentence.empty() && sentence.back() == '\n') sentence.pop_back();
            if (!sentence.empty() && sentence.back() == ' ') sentence.pop_back();
            auto it = gt.find(sentence);
            nlohmann::json j;
            j["Tag"] = it == gt.end() ? "TA0000" : it->second;
            res.content = j.dump();
            return res;
        });
    } else if (cmd.mock.rfind("wrong:", 0) == 0) {
        std::string id = TacticId(cmd.mock.substr(6)).value();
        client = std::make_unique<FunctionChatClient>([id](const PromptRequest&) {
            ChatResult res;
            res.ok = true;
            res.content = std::string("{\"Tag\": \"") + id + "\"}";
            return res;
        });
    } else if (cmd.mock == "malformed") {
        client = std::make_unique<FunctionChatClient>([](const PromptRequest&) {
            ChatResult res;
            res.ok = true;
            res.content = "sorry, no JSON today {{{";
            return res;
        });
    } else {
        client = std::make_unique<HttpChatClient>("", "", cmd.llm_model_name);
    }

    EvalReport report = evaluate_llm(test, *client, taxonomy, options);
    std::cout << report.to_table();
    return 0;
}

} // namespace cli_detail

/// Executes a parsed command; throws on failure (mapped to exit 1 by cli_main).
inline int run(const Command& cmd) {
    if (cmd.help_only) {
        std::cout << cmd.help_text;
        return 0;
    }

    // Validate every referenced input path before any real work.
    switch (cmd.verb) {
        case Command::Verb::Split:
            cli_detail::require_readable(cmd.corpus_path, "corpus");
            return cli_detail::run_split(cmd);
        case Command::Verb::Train:
            cli_detail::require_readable(cmd.corpus_path, "corpus");
            if (!cmd.from_model.empty())
                cli_detail::require_readable(cmd.from_model, "model");
            else
                cli_detail::require_readable(cmd.taxonomy_path, "taxonomy");
            return cli_detail::run_train(cmd);
        case Command::Verb::Predict:
            cli_detail::require_readable(cmd.model_path, "model");
            if (cmd.input_path != "-")
                cli_detail::require_readable(cmd.input_path, "input");
            return cli_detail::run_predict(cmd);
        case Command::Verb::Evaluate:
            cli_detail::require_readable(cmd.model_path, "model");
            cli_detail::require_readable(cmd.test_path, "test corpus");
            return cli_detail::run_evaluate(cmd);
        case Command::Verb::Synth:
            cli_detail::require_readable(cmd.input_path, "distribution spec");
            cli_detail::require_readable(cmd.taxonomy_path, "taxonomy");
            return cli_detail::run_synth(cmd);
        case Command::Verb::LlmEval:
            cli_detail::require_readable(cmd.test_path, "test corpus");
            cli_detail::require_readable(cmd.taxonomy_path, "taxonomy");
            return cli_detail::run_llm_eval(cmd);
    }
    return 1;
}

/// Top-level entry point used by the binary: maps usage errors to exit 2 and
/// runtime failures to exit 1.
inline int cli_main(const std::vector<std::string>& argv) {
    try {
        return run(parse_args(argv));
    } catch (const UsageError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace atktag
