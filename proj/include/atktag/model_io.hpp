#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>

#include "atktag/errors.hpp"
#include "atktag/hierarchy.hpp"

namespace atktag {

// Container layout (all integers little-endian, strings u32-length-prefixed
// UTF-8, full byte-level description in docs/FORMATS.md):
//   magic "ATKTAG1\0" | u32 format version | string taxonomy version
//   u32 section count | sections...
// section = string role | u64 payload length | payload
// Roles: "vectorizer", "taxonomy", "model" (standalone classifier), "tactic",
// "technique:<TacticId>", "technique-flat".
inline constexpr char kContainerMagic[8] = {'A', 'T', 'K', 'T', 'A', 'G', '1', '\0'};
inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

class ByteWriter {
public:
    std::string& out() { return buf_; }

    void raw(const void* data, std::size_t len) {
        buf_.append(static_cast<const char*>(data), len);
    }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    bool exhausted() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

    std::string_view raw(std::size_t len) {
        need(len);
        std::string_view out = data_.substr(pos_, len);
        pos_ += len;
        return out;
    }
    std::uint8_t u8() { return static_cast<std::uint8_t>(raw(1)[0]); }
    std::uint32_t u32() {
        std::string_view b = raw(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::string_view b = raw(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        std::uint32_t len = u32();
        return std::string(raw(len));
    }

private:
    void need(std::size_t len) {
        if (remaining() < len)
            throw FormatError("container truncated: need " + std::to_string(len) +
                              " bytes, have " + std::to_string(remaining()));
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

inline void write_vectorizer(ByteWriter& w, const Vectorizer& v) {
    if (!v.fitted()) throw NotFitted("cannot serialize an unfitted vectorizer");
    if (v.kind() == Vectorizer::Kind::Vocabulary) {
        w.u8(0);
        w.u64(v.vocabulary().size());
        for (const auto& [token, index] : v.vocabulary()) {
            w.str(token);
            w.u32(index);
            w.f64(v.idf()[index]);
        }
    } else {
        w.u8(1);
        w.u32(static_cast<std::uint32_t>(v.hash_bits()));
        w.u32(v.hash_seed());
        w.u64(v.idf().size());
        for (double value : v.idf()) w.f64(value);
    }
}

inline Vectorizer read_vectorizer(ByteReader& r) {
    std::uint8_t kind = r.u8();
    if (kind == 0) {
        std::uint64_t count = r.u64();
        std::map<std::string, std::uint32_t> vocabulary;
        std::vector<double> idf(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::string token = r.str();
            std::uint32_t index = r.u32();
            double value = r.f64();
            if (index >= count)
                throw FormatError("vocabulary index " + std::to_string(index) +
                                  " out of range");
            vocabulary.emplace(std::move(token), index);
            idf[index] = value;
        }
        if (vocabulary.size() != count)
            throw FormatError("vocabulary contains duplicate tokens");
        return Vectorizer::make_vocabulary(std::move(vocabulary), std::move(idf));
    }
    if (kind == 1) {
        int bits = static_cast<int>(r.u32());
        std::uint32_t seed = r.u32();
        std::uint64_t len = r.u64();
        if (bits < Vectorizer::kMinHashBits || bits > Vectorizer::kMaxHashBits ||
            len != (std::uint64_t{1} << bits))
            throw FormatError("hashed vectorizer header is inconsistent");
        std::vector<double> idf(len);
        for (std::uint64_t i = 0; i < len; ++i) idf[i] = r.f64();
        return Vectorizer::make_hashed(bits, seed, std::move(idf));
    }
    throw FormatError("unknown vectorizer kind byte " + std::to_string(kind));
}

inline void write_linear_model(ByteWriter& w, const LinearModel& m) {
    w.u32(static_cast<std::uint32_t>(m.classes.size()));
    w.u64(m.dimension);
    for (const std::string& label : m.classes) w.str(label);
    for (double b : m.bias) w.f64(b);
    for (double value : m.weights) w.f64(value);
    w.f64(m.meta.hp.eta0);
    w.f64(m.meta.hp.alpha);
    w.u32(m.meta.hp.epochs);
    w.u64(m.meta.hp.seed);
    w.u64(m.meta.corpus_fingerprint);
}

inline LinearModel read_linear_model(ByteReader& r) {
    LinearModel m;
    std::uint32_t n_classes = r.u32();
    m.dimension = r.u64();
    m.classes.reserve(n_classes);
    for (std::uint32_t i = 0; i < n_classes; ++i) m.classes.push_back(r.str());
    m.bias.resize(n_classes);
    for (std::uint32_t i = 0; i < n_classes; ++i) m.bias[i] = r.f64();
    m.weights.resize(static_cast<std::size_t>(n_classes) * m.dimension);
    for (double& value : m.weights) value = r.f64();
    m.meta.hp.eta0 = r.f64();
    m.meta.hp.alpha = r.f64();
    m.meta.hp.epochs = r.u32();
    m.meta.hp.seed = r.u64();
    m.meta.corpus_fingerprint = r.u64();
    return m;
}

inline void write_taxonomy(ByteWriter& w, const AttackTaxonomy& t) {
    w.str(t.version());
    w.u32(static_cast<std::uint32_t>(t.tactics().size()));
    for (const auto& [id, name] : t.tactics()) {
        w.str(id.value());
        w.str(name);
    }
    w.u32(static_cast<std::uint32_t>(t.techniques().size()));
    for (const auto& [id, name] : t.techniques()) {
        w.str(id.value());
        w.str(name);
        const auto& parents = t.parents().at(id);
        w.u32(static_cast<std::uint32_t>(parents.size()));
        for (const TacticId& p : parents) w.str(p.value());
    }
}

inline AttackTaxonomy read_taxonomy(ByteReader& r) {
    std::string version = r.str();
    std::map<TacticId, std::string> tactics;
    std::uint32_t n_tactics = r.u32();
    for (std::uint32_t i = 0; i < n_tactics; ++i) {
        TacticId id(r.str());
        tactics[id] = r.str();
    }
    std::map<TechniqueId, std::string> techniques;
    std::map<TechniqueId, std::set<TacticId>> parents;
    std::uint32_t n_techniques = r.u32();
    for (std::uint32_t i = 0; i < n_techniques; ++i) {
        TechniqueId id(r.str());
        techniques[id] = r.str();
        std::uint32_t n_parents = r.u32();
        for (std::uint32_t k = 0; k < n_parents; ++k)
            parents[id].insert(TacticId(r.str()));
    }
    try {
        return AttackTaxonomy(std::move(version), std::move(tactics), std::move(techniques),
                              std::move(parents));
    } catch (const ValidationError& e) {
        throw FormatError(std::string("embedded taxonomy is invalid: ") + e.what());
    }
}

inline void append_section(ByteWriter& w, std::string_view role, ByteWriter& payload) {
    w.str(role);
    w.u64(payload.out().size());
    w.raw(payload.out().data(), payload.out().size());
}

inline std::string container_header(std::string_view taxonomy_version,
                                    std::uint32_t section_count) {
    ByteWriter w;
    w.raw(kContainerMagic, sizeof kContainerMagic);
    w.u32(kContainerVersion);
    w.str(taxonomy_version);
    w.u32(section_count);
    return std::move(w.out());
}

} // namespace detail

/// Serializes a standalone classifier together with its vectorizer.
/// Deterministic: identical inputs yield identical bytes.
inline std::string save_model(const LinearModel& model, const Vectorizer& vectorizer,
                              std::string_view taxonomy_version) {
    detail::ByteWriter body;
    detail::ByteWriter vec;
    detail::write_vectorizer(vec, vectorizer);
    detail::append_section(body, "vectorizer", vec);
    detail::ByteWriter m;
    detail::write_linear_model(m, model);
    detail::append_section(body, "model", m);
    return detail::container_header(taxonomy_version, 2) + body.out();
}

/// Serializes a hierarchical bundle: vectorizer, embedded taxonomy, tactic
/// model, per-tactic technique models in ascending tactic order, and the
/// flat technique model when present.
inline std::string save_model(const HierarchicalModel& model) {
    if (!model.trained()) throw NotTrained("cannot serialize an untrained model");
    detail::ByteWriter body;

    detail::ByteWriter vec;
    detail::write_vectorizer(vec, model.vectorizer);
    detail::append_section(body, "vectorizer", vec);

    detail::ByteWriter tax;
    detail::write_taxonomy(tax, model.taxonomy);
    detail::append_section(body, "taxonomy", tax);

    detail::ByteWriter tactic;
    detail::write_linear_model(tactic, model.tactic_model);
    detail::append_section(body, "tactic", tactic);

    std::uint32_t sections = 3;
    for (const auto& [id, m] : model.technique_models) {
        detail::ByteWriter w;
        detail::write_linear_model(w, m);
        detail::append_section(body, "technique:" + id.value(), w);
        ++sections;
    }
    if (model.flat_technique_model) {
        detail::ByteWriter w;
        detail::write_linear_model(w, *model.flat_technique_model);
        detail::append_section(body, "technique-flat", w);
        ++sections;
    }
    return detail::container_header(model.taxonomy.version(), sections) + body.out();
}

/// Result of load_model: exactly one of `plain` / `hierarchical` is set.
struct LoadedModel {
    std::uint32_t format_version = 0;
    std::string taxonomy_version;
    std::optional<std::pair<LinearModel, Vectorizer>> plain;
    std::optional<HierarchicalModel> hierarchical;
};

inline LoadedModel load_model(std::string_view bytes) {
    detail::ByteReader r(bytes);
    std::string_view magic = r.raw(sizeof kContainerMagic);
    if (std::memcmp(magic.data(), kContainerMagic, sizeof kContainerMagic) != 0)
        throw FormatError("not a model container (bad magic)");
    LoadedModel out;
    out.format_version = r.u32();
    if (out.format_version > kContainerVersion)
        throw VersionMismatch("container format version " +
                              std::to_string(out.format_version) +
                              " is newer than the supported version " +
                              std::to_string(kContainerVersion));
    if (out.format_version == 0)
        throw FormatError("container format version 0 is invalid");
    out.taxonomy_version = r.str();

    std::uint32_t section_count = r.u32();
    std::optional<Vectorizer> vectorizer;
    std::optional<AttackTaxonomy> taxonomy;
    std::optional<LinearModel> plain_model;
    std::optional<LinearModel> tactic_model;
    std::map<TacticId, LinearModel> technique_models;
    std::optional<LinearModel> flat_model;

    for (std::uint32_t s = 0; s < section_count; ++s) {
        std::string role = r.str();
        std::uint64_t len = r.u64();
        detail::ByteReader payload(r.raw(len));
        if (role == "vectorizer") {
            vectorizer = detail::read_vectorizer(payload);
        } else if (role == "taxonomy") {
            taxonomy = detail::read_taxonomy(payload);
        } else if (role == "model") {
            plain_model = detail::read_linear_model(payload);
        } else if (role == "tactic") {
            tactic_model = detail::read_linear_model(payload);
        } else if (role == "technique-flat") {
            flat_model = detail::read_linear_model(payload);
        } else if (role.rfind("technique:", 0) == 0) {
            technique_models.emplace(TacticId(role.substr(10)),
                                     detail::read_linear_model(payload));
        } else {
            throw FormatError("unknown section role '" + role + "'");
        }
        if (!payload.exhausted())
            throw FormatError("section '" + role + "' has trailing bytes");
    }
    if (!r.exhausted()) throw FormatError("container has trailing bytes");
    if (!vectorizer) throw FormatError("container is missing the vectorizer section");

    if (plain_model) {
        if (tactic_model || !technique_models.empty() || flat_model)
            throw FormatError("container mixes standalone and hierarchical sections");
        out.plain = std::make_pair(std::move(*plain_model), std::move(*vectorizer));
        return out;
    }
    if (!tactic_model)
        throw FormatError("container is missing the tactic model section");
    if (!taxonomy)
        throw FormatError("container is missing the taxonomy section");

    HierarchicalModel h;
    h.vectorizer = std::move(*vectorizer);
    h.taxonomy = std::move(*taxonomy);
    h.tactic_model = std::move(*tactic_model);
    h.technique_models = std::move(technique_models);
    h.flat_technique_model = std::move(flat_model);
    out.hierarchical = std::move(h);
    return out;
}

} // namespace atktag
