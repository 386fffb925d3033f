#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "atktag/errors.hpp"
#include "atktag/murmur3.hpp"

namespace atktag {

/// Sparse feature vector: strictly increasing indices, no stored zeros.
struct SparseVector {
    std::size_t dimension = 0;
    std::vector<std::pair<std::uint32_t, double>> entries;

    double l2_norm() const {
        double sum = 0.0;
        for (const auto& [i, v] : entries) { (void)i; sum += v * v; }
        return std::sqrt(sum);
    }

    bool operator==(const SparseVector&) const = default;
};

/// Lower-cases and splits on every non-alphanumeric codepoint, dropping
/// tokens shorter than two codepoints. ASCII letters are folded to lower
/// case; codepoints above U+007F are kept verbatim as token constituents.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    std::size_t current_len = 0;  // codepoints

    auto flush = [&] {
        if (current_len >= 2) tokens.push_back(current);
        current.clear();
        current_len = 0;
    };

    for (std::size_t i = 0; i < text.size();) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (c < 0x80) {
            if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
                current += static_cast<char>(c);
                ++current_len;
            } else if (c >= 'A' && c <= 'Z') {
                current += static_cast<char>(c - 'A' + 'a');
                ++current_len;
            } else {
                flush();
            }
            ++i;
        } else {
            // Multi-byte sequence: copy it whole, count one codepoint.
            std::size_t len = 1;
            if ((c & 0xe0) == 0xc0) len = 2;
            else if ((c & 0xf0) == 0xe0) len = 3;
            else if ((c & 0xf8) == 0xf0) len = 4;
            len = std::min(len, text.size() - i);
            current.append(text.substr(i, len));
            ++current_len;
            i += len;
        }
    }
    flush();
    return tokens;
}

/// TF-IDF featurizer. Two kinds:
///  - vocabulary: fitted token -> index map, indices in lexicographic token
///    order;
///  - hashed: tokens map to murmur3_32(token, hash_seed) mod 2^hash_bits with
///    the contribution sign taken from bit 31 of the hash. No token string is
///    retained, which is what makes hashed models safe to publish.
/// Both kinds carry smooth IDF weights ln((1+N)/(1+df)) + 1 and produce
/// L2-normalized outputs.
class Vectorizer {
public:
    enum class Kind { Vocabulary, Hashed };

    static constexpr int kMinHashBits = 8;
    static constexpr int kMaxHashBits = 26;

    Vectorizer() = default;

    Kind kind() const { return kind_; }
    std::size_t dimension() const { return idf_.size(); }
    bool fitted() const { return !idf_.empty(); }
    const std::vector<double>& idf() const { return idf_; }
    const std::map<std::string, std::uint32_t>& vocabulary() const { return vocabulary_; }
    int hash_bits() const { return hash_bits_; }
    std::uint32_t hash_seed() const { return hash_seed_; }

    SparseVector transform(std::string_view text) const {
        if (!fitted()) throw NotFitted("vectorizer has not been fitted");
        std::map<std::uint32_t, double> weights;
        for (const std::string& tok : tokenize(text)) {
            if (kind_ == Kind::Vocabulary) {
                auto it = vocabulary_.find(tok);
                if (it == vocabulary_.end()) continue;  // out-of-vocabulary
                weights[it->second] += 1.0;
            } else {
                std::uint32_t h = murmur3_32(tok, hash_seed_);
                std::uint32_t index = h & (static_cast<std::uint32_t>(dimension()) - 1);
                weights[index] += (h >> 31) ? -1.0 : 1.0;
            }
        }

        SparseVector v;
        v.dimension = dimension();
        for (auto& [index, count] : weights) {
            double w = count * idf_[index];
            if (w != 0.0) v.entries.emplace_back(index, w);
        }
        double norm = v.l2_norm();
        if (norm > 0.0)
            for (auto& [index, value] : v.entries) { (void)index; value /= norm; }
        return v;
    }

    bool operator==(const Vectorizer&) const = default;

    // Construction helpers used by the fitting functions and the container
    // reader; invariants (idf length, sorted vocabulary) are the caller's.
    static Vectorizer make_vocabulary(std::map<std::string, std::uint32_t> vocabulary,
                                      std::vector<double> idf) {
        Vectorizer v;
        v.kind_ = Kind::Vocabulary;
        v.vocabulary_ = std::move(vocabulary);
        v.idf_ = std::move(idf);
        return v;
    }

    static Vectorizer make_hashed(int hash_bits, std::uint32_t hash_seed,
                                  std::vector<double> idf) {
        Vectorizer v;
        v.kind_ = Kind::Hashed;
        v.hash_bits_ = hash_bits;
        v.hash_seed_ = hash_seed;
        v.idf_ = std::move(idf);
        return v;
    }

private:
    Kind kind_ = Kind::Vocabulary;
    std::map<std::string, std::uint32_t> vocabulary_;  // vocabulary kind only
    int hash_bits_ = 0;                                // hashed kind only
    std::uint32_t hash_seed_ = 0;                      // hashed kind only
    std::vector<double> idf_;
};

namespace detail {

inline double smooth_idf(std::size_t n_docs, std::size_t df) {
    return std::log((1.0 + static_cast<double>(n_docs)) /
                    (1.0 + static_cast<double>(df))) + 1.0;
}

} // namespace detail

/// Fits a vocabulary-kind vectorizer: vocabulary = all distinct training
/// tokens in lexicographic order, IDF from per-token document frequencies.
inline Vectorizer fit_vocabulary_tfidf(const std::vector<std::string>& train_texts) {
    std::map<std::string, std::size_t> df;
    for (const std::string& text : train_texts) {
        std::set<std::string> seen;
        for (std::string& tok : tokenize(text)) seen.insert(std::move(tok));
        for (const std::string& tok : seen) ++df[tok];
    }
    if (df.empty())
        throw EmptyVocabulary("no training text yields a token of length >= 2");

    std::map<std::string, std::uint32_t> vocabulary;
    std::vector<double> idf;
    idf.reserve(df.size());
    std::uint32_t index = 0;
    for (const auto& [tok, count] : df) {
        vocabulary.emplace(tok, index++);
        idf.push_back(detail::smooth_idf(train_texts.size(), count));
    }
    return Vectorizer::make_vocabulary(std::move(vocabulary), std::move(idf));
}

/// Fits a hashed-kind vectorizer. Document frequencies are counted over the
/// hashed index space: an index is present in a document iff any of the
/// document's tokens hashes to it, so colliding tokens share one df entry
/// and no token identity survives fitting.
inline Vectorizer fit_hashed_tfidf(const std::vector<std::string>& train_texts,
                                   int hash_bits, std::uint32_t hash_seed) {
    if (hash_bits < Vectorizer::kMinHashBits || hash_bits > Vectorizer::kMaxHashBits)
        throw ValidationError("hash_bits must lie in [" +
                              std::to_string(Vectorizer::kMinHashBits) + ", " +
                              std::to_string(Vectorizer::kMaxHashBits) + "], got " +
                              std::to_string(hash_bits));
    const std::size_t dim = std::size_t{1} << hash_bits;
    std::vector<std::size_t> df(dim, 0);
    for (const std::string& text : train_texts) {
        std::set<std::uint32_t> seen;
        for (const std::string& tok : tokenize(text))
            seen.insert(murmur3_32(tok, hash_seed) & static_cast<std::uint32_t>(dim - 1));
        for (std::uint32_t index : seen) ++df[index];
    }
    std::vector<double> idf(dim);
    for (std::size_t i = 0; i < dim; ++i)
        idf[i] = detail::smooth_idf(train_texts.size(), df[i]);
    return Vectorizer::make_hashed(hash_bits, hash_seed, std::move(idf));
}

} // namespace atktag
