#pragma once

#include <compare>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

#include "atktag/errors.hpp"

namespace atktag {

namespace detail {

inline std::string ascii_upper(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    return out;
}

inline bool is_digits(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

} // namespace detail

/// Tactic identifier: "TA" followed by four decimal digits. Input is
/// canonicalized to upper case before validation; comparisons are on the
/// canonical form.
class TacticId {
public:
    TacticId() = default;

    explicit TacticId(std::string_view raw) : value_(detail::ascii_upper(raw)) {
        if (value_.size() != 6 || value_.substr(0, 2) != "TA" ||
            !detail::is_digits(value_.substr(2))) {
            throw ValidationError("invalid tactic id '" + std::string(raw) +
                                  "' (expected TA followed by 4 digits)");
        }
    }

    const std::string& value() const { return value_; }
    auto operator<=>(const TacticId&) const = default;

private:
    std::string value_;
};

/// Technique identifier: "T" followed by four decimal digits. Sub-technique
/// ids (Txxxx.yyy) are rejected with a dedicated message so that a corpus or
/// taxonomy file with finer-grained labels fails loudly instead of mixing
/// label granularities.
class TechniqueId {
public:
    TechniqueId() = default;

    explicit TechniqueId(std::string_view raw) : value_(detail::ascii_upper(raw)) {
        if (value_.find('.') != std::string::npos) {
            throw ValidationError("sub-technique id '" + std::string(raw) +
                                  "' is not supported; use the parent technique id");
        }
        if (value_.size() != 5 || value_[0] != 'T' ||
            !detail::is_digits(value_.substr(1))) {
            throw ValidationError("invalid technique id '" + std::string(raw) +
                                  "' (expected T followed by 4 digits)");
        }
    }

    const std::string& value() const { return value_; }
    auto operator<=>(const TechniqueId&) const = default;

private:
    std::string value_;
};

/// The tactic/technique knowledge structure: display names plus the
/// many-to-many technique -> tactic parent map. Immutable after load;
/// safe for concurrent reads.
class AttackTaxonomy {
public:
    AttackTaxonomy() = default;

    AttackTaxonomy(std::string version,
                   std::map<TacticId, std::string> tactics,
                   std::map<TechniqueId, std::string> techniques,
                   std::map<TechniqueId, std::set<TacticId>> parents)
        : version_(std::move(version)),
          tactics_(std::move(tactics)),
          techniques_(std::move(techniques)),
          parents_(std::move(parents)) {
        for (const auto& [tech, parent_set] : parents_) {
            if (parent_set.empty())
                throw ValidationError("technique " + tech.value() + " has no parent tactics");
            if (!techniques_.count(tech))
                throw ValidationError("parent map references unknown technique " + tech.value());
            for (const TacticId& ta : parent_set) {
                if (!tactics_.count(ta))
                    throw ValidationError("technique " + tech.value() +
                                          " lists unknown parent tactic " + ta.value());
                children_[ta].insert(tech);
            }
        }
        for (const auto& [tech, name] : techniques_) {
            (void)name;
            if (!parents_.count(tech))
                throw ValidationError("technique " + tech.value() + " has no parent tactics");
        }
    }

    const std::string& version() const { return version_; }
    const std::map<TacticId, std::string>& tactics() const { return tactics_; }
    const std::map<TechniqueId, std::string>& techniques() const { return techniques_; }
    const std::map<TechniqueId, std::set<TacticId>>& parents() const { return parents_; }

    bool has_tactic(const TacticId& id) const { return tactics_.count(id) != 0; }
    bool has_technique(const TechniqueId& id) const { return techniques_.count(id) != 0; }

    /// Techniques whose parent set contains `tactic`; possibly empty.
    const std::set<TechniqueId>& techniques_for(const TacticId& tactic) const {
        if (!has_tactic(tactic))
            throw UnknownTactic("unknown tactic " + tactic.value());
        auto it = children_.find(tactic);
        if (it == children_.end()) {
            static const std::set<TechniqueId> empty;
            return empty;
        }
        return it->second;
    }

    /// True iff both ids exist and tactic is a parent of technique.
    bool validate_pair(const TacticId& tactic, const TechniqueId& technique) const {
        if (!has_tactic(tactic) || !has_technique(technique)) return false;
        auto it = parents_.find(technique);
        return it != parents_.end() && it->second.count(tactic) != 0;
    }

    bool operator==(const AttackTaxonomy& other) const {
        return version_ == other.version_ && tactics_ == other.tactics_ &&
               techniques_ == other.techniques_ && parents_ == other.parents_;
    }

private:
    std::string version_;
    std::map<TacticId, std::string> tactics_;
    std::map<TechniqueId, std::string> techniques_;
    std::map<TechniqueId, std::set<TacticId>> parents_;
    std::map<TacticId, std::set<TechniqueId>> children_;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed)
            if (it.key() == key) { known = true; break; }
        if (!known)
            throw ParseError("unknown key '" + it.key() + "' in " + where);
    }
}

} // namespace detail

/// Parses and validates a taxonomy file (UTF-8 JSON, see docs/FORMATS.md).
/// Unknown keys are rejected. Identical bytes always yield a structurally
/// identical taxonomy.
inline AttackTaxonomy load_taxonomy(std::string_view bytes) {
    nlohmann::json doc = nlohmann::json::parse(bytes, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ParseError("taxonomy file is not a JSON object");
    detail::reject_unknown_keys(doc, {"version", "tactics", "techniques"}, "taxonomy file");
    if (!doc.contains("version") || !doc["version"].is_string())
        throw ParseError("taxonomy file missing string 'version'");
    if (!doc.contains("tactics") || !doc["tactics"].is_array())
        throw ParseError("taxonomy file missing array 'tactics'");
    if (!doc.contains("techniques") || !doc["techniques"].is_array())
        throw ParseError("taxonomy file missing array 'techniques'");

    std::map<TacticId, std::string> tactics;
    for (const auto& entry : doc["tactics"]) {
        if (!entry.is_object() || !entry.contains("id") || !entry.contains("name") ||
            !entry["id"].is_string() || !entry["name"].is_string())
            throw ParseError("tactic entries must be objects with string 'id' and 'name'");
        detail::reject_unknown_keys(entry, {"id", "name"}, "tactic entry");
        TacticId id(entry["id"].get<std::string>());
        if (!tactics.emplace(id, entry["name"].get<std::string>()).second)
            throw ValidationError("duplicate tactic id " + id.value());
    }

    std::map<TechniqueId, std::string> techniques;
    std::map<TechniqueId, std::set<TacticId>> parents;
    for (const auto& entry : doc["techniques"]) {
        if (!entry.is_object() || !entry.contains("id") || !entry.contains("name") ||
            !entry.contains("tactic_ids") || !entry["id"].is_string() ||
            !entry["name"].is_string() || !entry["tactic_ids"].is_array())
            throw ParseError("technique entries must be objects with string 'id', 'name' "
                             "and array 'tactic_ids'");
        detail::reject_unknown_keys(entry, {"id", "name", "tactic_ids"}, "technique entry");
        TechniqueId id(entry["id"].get<std::string>());
        if (!techniques.emplace(id, entry["name"].get<std::string>()).second)
            throw ValidationError("duplicate technique id " + id.value());
        std::set<TacticId>& parent_set = parents[id];
        for (const auto& raw : entry["tactic_ids"]) {
            if (!raw.is_string())
                throw ParseError("tactic_ids entries must be strings");
            parent_set.insert(TacticId(raw.get<std::string>()));
        }
        if (parent_set.empty())
            throw ValidationError("technique " + id.value() + " has an empty tactic_ids list");
    }

    return AttackTaxonomy(doc["version"].get<std::string>(), std::move(tactics),
                          std::move(techniques), std::move(parents));
}

} // namespace atktag
