#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "atktag/corpus.hpp"
#include "atktag/taxonomy.hpp"

namespace testutil {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

inline std::string repo_path(const std::string& rel) {
    return std::string(ATKTAG_REPO_ROOT) + "/" + rel;
}

inline atktag::AttackTaxonomy fixture_taxonomy() {
    return atktag::load_taxonomy(read_file(repo_path("data/taxonomy_enterprise_v14.json")));
}

inline atktag::LabeledSentence sentence(std::string text,
                                        std::initializer_list<const char*> tactics,
                                        std::initializer_list<const char*> techniques = {}) {
    atktag::LabeledSentence s;
    s.text = std::move(text);
    for (const char* t : tactics) s.tactic_labels.insert(atktag::TacticId(t));
    for (const char* t : techniques) s.technique_labels.insert(atktag::TechniqueId(t));
    s.source = "test";
    return s;
}

// The fourteen tactic counts from the baseline distribution fixture.
inline atktag::DistributionSpec baseline_distribution(double overlap, std::uint64_t seed) {
    atktag::DistributionSpec spec =
        atktag::load_distribution_spec(read_file(repo_path("data/baseline_distribution.json")));
    spec.overlap = overlap;
    spec.seed = seed;
    return spec;
}

} // namespace testutil
