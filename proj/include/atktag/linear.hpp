#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "atktag/errors.hpp"
#include "atktag/rng.hpp"
#include "atktag/vectorize.hpp"

namespace atktag {

struct Hyperparams {
    double eta0 = 0.1;        // initial learning rate
    double alpha = 1e-4;      // L2 coefficient
    std::uint32_t epochs = 10;
    std::uint64_t seed = 0;

    bool operator==(const Hyperparams&) const = default;
};

struct TrainingMeta {
    Hyperparams hp;
    std::uint64_t corpus_fingerprint = 0;

    bool operator==(const TrainingMeta&) const = default;
};

struct LabelScore {
    std::string label;
    double score = 0.0;

    bool operator==(const LabelScore&) const = default;
};

/// Labels ranked by descending score, ties broken by ascending label.
using RankedPrediction = std::vector<LabelScore>;

/// One-vs-rest linear classifier: one weight row and bias per class, class
/// order lexicographic. Immutable once trained; scoring is safe concurrently.
struct LinearModel {
    std::vector<std::string> classes;  // distinct, sorted
    std::vector<double> weights;       // row-major, |classes| x dimension
    std::vector<double> bias;          // |classes|
    std::size_t dimension = 0;
    TrainingMeta meta;

    std::span<const double> row(std::size_t c) const {
        return {weights.data() + c * dimension, dimension};
    }

    bool operator==(const LinearModel&) const = default;
};

namespace detail {

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// Order-sensitive digest of the training inputs, stored in the model meta
// so a container records what it was trained on.
inline std::uint64_t corpus_fingerprint(const std::vector<SparseVector>& vectors,
                                        const std::vector<std::string>& labels) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    std::uint64_t dim = vectors.empty() ? 0 : vectors.front().dimension;
    h = fnv1a64(&dim, sizeof dim, h);
    std::uint64_t n = vectors.size();
    h = fnv1a64(&n, sizeof n, h);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        std::uint32_t nnz = static_cast<std::uint32_t>(vectors[i].entries.size());
        h = fnv1a64(&nnz, sizeof nnz, h);
        for (const auto& [index, value] : vectors[i].entries) {
            h = fnv1a64(&index, sizeof index, h);
            h = fnv1a64(&value, sizeof value, h);
        }
        h = fnv1a64(labels[i].data(), labels[i].size() + 1, h);
    }
    return h;
}

} // namespace detail

/// Learning rate for step t (t = number of prior update steps, so the first
/// step uses t = 0): eta0 / (1 + (alpha*eta0)*t).
inline double sgd_learning_rate(double eta0, double alpha, std::uint64_t t) {
    return eta0 / (1.0 + (alpha * eta0) * static_cast<double>(t));
}

/// One subgradient update of the L2-regularized hinge objective, in the
/// pinned operation order (docs/FORMATS.md): margin from the pre-update
/// weights, then the shrink w_i *= (1 - eta*alpha) coordinate by coordinate,
/// then, on margin violation, w_i += (eta*y)*x_i over the sparse entries in
/// ascending index order and b += eta*y.
inline void sgd_binary_step(std::span<double> w, double& b, const SparseVector& x,
                            double y, double eta, double alpha) {
    double dot = 0.0;
    for (const auto& [index, value] : x.entries) dot += w[index] * value;
    const double margin = y * (dot + b);
    const double factor = 1.0 - eta * alpha;
    for (double& wi : w) wi *= factor;
    if (margin < 1.0) {
        const double step = eta * y;
        for (const auto& [index, value] : x.entries) w[index] += step * value;
        b += step;
    }
}

/// Trains one hinge-loss SGD binary classifier per class (target +1 for the
/// class, -1 otherwise), each applying sgd_binary_step's update rule with
/// eta_t = sgd_learning_rate(eta0, alpha, t), t counting that classifier's
/// steps across epochs.
///
/// Samples are visited in a seeded Fisher-Yates shuffle redrawn each epoch
/// from one splitmix64 stream per class, seeded with hp.seed, so every class
/// sees the same order. For speed the shrink is carried in a scalar scale
/// factor and folded into the weights once at the end; with alpha = 0, and
/// for the first update out of the all-zero state, this is bit-identical to
/// sgd_binary_step, otherwise identical up to the rounding of the folded
/// scale product (see docs/FORMATS.md).
///
/// `warm_start`, when given, seeds weight rows and biases from the prior
/// model for classes the two models share (dimensions must match).
inline LinearModel train_multiclass(const std::vector<SparseVector>& vectors,
                                    const std::vector<std::string>& labels,
                                    const Hyperparams& hp,
                                    const LinearModel* warm_start = nullptr) {
    if (vectors.empty() || vectors.size() != labels.size())
        throw ValidationError("need equally many vectors and labels, at least one each");
    if (!(hp.eta0 > 0.0))
        throw ValidationError("eta0 must be positive");
    if (hp.alpha < 0.0)
        throw ValidationError("alpha must be non-negative");
    if (hp.epochs < 1)
        throw ValidationError("epochs must be at least 1");

    const std::size_t dim = vectors.front().dimension;
    for (const SparseVector& v : vectors)
        if (v.dimension != dim)
            throw DimensionMismatch("training vectors disagree on dimension");

    std::vector<std::string> classes(labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2)
        throw SingleClass("training data must contain at least two distinct labels");
    if (warm_start && warm_start->dimension != dim)
        throw DimensionMismatch("warm start model dimension " +
                                std::to_string(warm_start->dimension) +
                                " does not match data dimension " + std::to_string(dim));

    LinearModel model;
    model.classes = classes;
    model.dimension = dim;
    model.weights.assign(classes.size() * dim, 0.0);
    model.bias.assign(classes.size(), 0.0);
    model.meta.hp = hp;
    model.meta.corpus_fingerprint = detail::corpus_fingerprint(vectors, labels);

    const double alpha_eta0 = hp.alpha * hp.eta0;

    for (std::size_t c = 0; c < classes.size(); ++c) {
        std::vector<double> w(dim, 0.0);
        double b = 0.0;
        bool any_nonzero = false;
        if (warm_start) {
            auto it = std::find(warm_start->classes.begin(), warm_start->classes.end(),
                                classes[c]);
            if (it != warm_start->classes.end()) {
                std::size_t wc = static_cast<std::size_t>(it - warm_start->classes.begin());
                auto row = warm_start->row(wc);
                std::copy(row.begin(), row.end(), w.begin());
                b = warm_start->bias[wc];
                for (double value : w)
                    if (value != 0.0) { any_nonzero = true; break; }
            }
        }

        double scale = 1.0;
        SplitMix64 rng(hp.seed);
        std::vector<std::size_t> order(vectors.size());
        std::iota(order.begin(), order.end(), 0);

        std::uint64_t t = 0;
        for (std::uint32_t epoch = 0; epoch < hp.epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t idx : order) {
                const SparseVector& x = vectors[idx];
                const double y = (labels[idx] == classes[c]) ? 1.0 : -1.0;
                const double eta = hp.eta0 / (1.0 + alpha_eta0 * static_cast<double>(t));
                const double factor = 1.0 - eta * hp.alpha;

                double dot = 0.0;
                for (const auto& [index, value] : x.entries) dot += w[index] * value;
                const double margin = y * (scale * dot + b);

                if (margin < 1.0) {
                    const double step = eta * y;
                    if (!any_nonzero) {
                        // Shrinking an all-zero vector is a no-op, so the
                        // additive term is stored directly; this keeps the
                        // first update bit-identical to the plain rule.
                        for (const auto& [index, value] : x.entries) {
                            w[index] = step * value;
                            any_nonzero = true;
                        }
                    } else {
                        scale *= factor;
                        const double g = step / scale;
                        for (const auto& [index, value] : x.entries)
                            w[index] += g * value;
                    }
                    b += step;
                } else if (any_nonzero) {
                    scale *= factor;
                }

                if (any_nonzero && scale < 1e-100) {
                    for (double& value : w) value *= scale;
                    scale = 1.0;
                }
                ++t;
            }
        }

        double* out = model.weights.data() + c * dim;
        for (std::size_t i = 0; i < dim; ++i) out[i] = scale * w[i];
        model.bias[c] = b;
    }
    return model;
}

/// score_c = w_c . x + b_c, entries accumulated in ascending index order.
inline std::vector<double> decision_scores(const LinearModel& model, const SparseVector& x) {
    if (x.dimension != model.dimension)
        throw DimensionMismatch("input dimension " + std::to_string(x.dimension) +
                                " does not match model dimension " +
                                std::to_string(model.dimension));
    std::vector<double> scores(model.classes.size(), 0.0);
    for (std::size_t c = 0; c < model.classes.size(); ++c) {
        auto row = model.row(c);
        double dot = 0.0;
        for (const auto& [index, value] : x.entries) dot += row[index] * value;
        scores[c] = dot + model.bias[c];
    }
    return scores;
}

/// The n highest-scoring classes, descending score, ties by ascending label.
inline RankedPrediction predict_top_n(const LinearModel& model, const SparseVector& x,
                                      std::size_t n) {
    if (n < 1 || n > model.classes.size())
        throw NOutOfRange("n must lie in [1, " + std::to_string(model.classes.size()) +
                          "], got " + std::to_string(n));
    std::vector<double> scores = decision_scores(model, x);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return model.classes[a] < model.classes[b];
    });
    RankedPrediction out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({model.classes[order[i]], scores[order[i]]});
    return out;
}

} // namespace atktag
