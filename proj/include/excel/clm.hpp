#pragma once

// Class likelihood matrices: for each class c, the frequency with which every
// class i sits at rank j among correctly classified training samples of c,
// and the four-level reward/penalty smoothing applied on top.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "excel/error.hpp"
#include "excel/logit_store.hpp"
#include "excel/ranking.hpp"

namespace excel {

struct SmoothingParams {
    double a = 10.0;  // reward magnitude
    double b = 5.0;   // high-likelihood threshold multiplier

    void validate() const {
        if (!(a > 1.0)) throw InvalidArgument("smoothing parameter a must be > 1, got " + std::to_string(a));
        if (!(b > 1.0)) throw InvalidArgument("smoothing parameter b must be > 1, got " + std::to_string(b));
    }

    // b >= C-1 makes the high-reward branch unreachable past rank 1.
    bool high_branch_reachable(std::size_t num_classes) const {
        return b < static_cast<double>(num_classes - 1);
    }

    friend bool operator==(const SmoothingParams&, const SmoothingParams&) = default;
};

// The four values a smoothed entry can take, indexed by storage code:
// 0 -> -a/(C-1), 1 -> -1/(C-1), 2 -> 1/(C-1), 3 -> a/(C-1).
inline std::array<double, 4> smoothed_levels(const SmoothingParams& params, std::size_t num_classes) {
    const double denom = static_cast<double>(num_classes - 1);
    const double high = params.a / denom;
    const double low = 1.0 / denom;
    return {-high, -low, low, high};
}

// Storage code (see smoothed_levels) for a raw likelihood p. Lower bounds are closed.
inline int smoothed_code(double p, const SmoothingParams& params, std::size_t num_classes) {
    const double denom = static_cast<double>(num_classes - 1);
    if (p >= params.b / denom) return 3;
    if (p >= 1.0 / denom) return 2;
    if (p > 0.0) return 1;
    return 0;
}

inline double smooth_value(double p, const SmoothingParams& params, std::size_t num_classes) {
    return smoothed_levels(params, num_classes)[static_cast<std::size_t>(smoothed_code(p, params, num_classes))];
}

// Read-only C x C view: rows are classes, columns are ranks.
struct MatrixView {
    std::span<const double> data;
    std::size_t size = 0;

    double operator()(std::size_t cls, std::size_t rank) const { return data[cls * size + rank]; }
};

struct ClassLikelihoodMatrix {
    std::uint32_t base_class = 0;
    std::size_t num_classes = 0;
    std::vector<double> probs;  // num_classes x num_classes, row = class, col = rank
    std::uint64_t support_count = 0;
    bool fallback = false;

    double operator()(std::size_t cls, std::size_t rank) const { return probs[cls * num_classes + rank]; }
    MatrixView view() const { return {probs, num_classes}; }
};

// Stand-in for classes with no correctly classified training sample: rank 0 is
// the class itself, every other class is equally likely at every later rank.
inline ClassLikelihoodMatrix uniform_clm(std::size_t num_classes, std::uint32_t base_class) {
    ClassLikelihoodMatrix m;
    m.base_class = base_class;
    m.num_classes = num_classes;
    m.fallback = true;
    m.probs.assign(num_classes * num_classes, 0.0);
    const double u = 1.0 / static_cast<double>(num_classes - 1);
    m.probs[base_class * num_classes] = 1.0;
    for (std::size_t i = 0; i < num_classes; ++i) {
        if (i == base_class) continue;
        for (std::size_t j = 1; j < num_classes; ++j) m.probs[i * num_classes + j] = u;
    }
    return m;
}

namespace detail {

inline void check_training_pair(const LogitMatrix& logits, const LabelVector& labels) {
    check_labels(labels, logits.num_samples(), logits.num_classes());
}

}  // namespace detail

// Counts only samples labelled `cls` whose top-1 prediction is also `cls`.
inline ClassLikelihoodMatrix build_clm(const LogitMatrix& train_logits, const LabelVector& train_labels,
                                       std::uint32_t cls) {
    detail::check_training_pair(train_logits, train_labels);
    const std::size_t C = train_logits.num_classes();
    if (cls >= C) throw InvalidArgument("class index " + std::to_string(cls) + " out of range");

    std::vector<std::uint64_t> counts(C * C, 0);
    std::uint64_t support = 0;
    std::vector<std::uint32_t> order;
    for (std::size_t n = 0; n < train_logits.num_samples(); ++n) {
        if (train_labels[n] != cls) continue;
        const auto row = train_logits.row(n);
        if (top_class(row) != cls) continue;
        rank_classes_into(row, order);
        for (std::size_t rank = 0; rank < C; ++rank) ++counts[order[rank] * C + rank];
        ++support;
    }
    if (support == 0) return uniform_clm(C, cls);

    ClassLikelihoodMatrix m;
    m.base_class = cls;
    m.num_classes = C;
    m.support_count = support;
    m.probs.resize(C * C);
    for (std::size_t k = 0; k < counts.size(); ++k)
        m.probs[k] = static_cast<double>(counts[k]) / static_cast<double>(support);
    return m;
}

inline std::vector<double> smooth(const ClassLikelihoodMatrix& clm, const SmoothingParams& params) {
    params.validate();
    std::vector<double> out(clm.probs.size());
    const auto levels = smoothed_levels(params, clm.num_classes);
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = levels[static_cast<std::size_t>(smoothed_code(clm.probs[k], params, clm.num_classes))];
    return out;
}

// The fitted model: C smoothed matrices plus what produced them. The raw
// likelihoods are kept when available so they can be exported for inspection.
class SmoothedClmSet {
public:
    SmoothedClmSet() = default;

    SmoothedClmSet(std::size_t num_classes, SmoothingParams params, std::vector<double> smoothed,
                   std::vector<std::uint64_t> support_counts, std::vector<std::uint32_t> fallback_classes,
                   std::vector<double> raw = {})
        : num_classes_(num_classes), params_(params), smoothed_(std::move(smoothed)),
          support_counts_(std::move(support_counts)), fallback_classes_(std::move(fallback_classes)),
          raw_(std::move(raw)) {
        const std::size_t cube = num_classes_ * num_classes_ * num_classes_;
        if (num_classes_ < 2) throw DimensionMismatch("CLM set needs at least two classes");
        if (smoothed_.size() != cube) throw DimensionMismatch("smoothed tensor has the wrong size");
        if (!raw_.empty() && raw_.size() != cube) throw DimensionMismatch("raw tensor has the wrong size");
        if (support_counts_.size() != num_classes_) throw DimensionMismatch("support counts have the wrong size");
    }

    std::size_t num_classes() const noexcept { return num_classes_; }
    const SmoothingParams& params() const noexcept { return params_; }
    const std::vector<std::uint32_t>& fallback_classes() const noexcept { return fallback_classes_; }
    const std::vector<std::uint64_t>& support_counts() const noexcept { return support_counts_; }
    bool has_raw() const noexcept { return !raw_.empty(); }

    // Class-major C x C x C tensors.
    const std::vector<double>& smoothed_tensor() const noexcept { return smoothed_; }
    const std::vector<double>& raw_tensor() const noexcept { return raw_; }

    MatrixView smoothed(std::size_t cls) const {
        const std::size_t sq = num_classes_ * num_classes_;
        return {std::span<const double>(smoothed_).subspan(cls * sq, sq), num_classes_};
    }

    MatrixView raw(std::size_t cls) const {
        if (raw_.empty()) throw MissingContext("CLM set was stored without raw likelihoods");
        const std::size_t sq = num_classes_ * num_classes_;
        return {std::span<const double>(raw_).subspan(cls * sq, sq), num_classes_};
    }

    bool is_fallback(std::uint32_t cls) const {
        for (auto c : fallback_classes_)
            if (c == cls) return true;
        return false;
    }

    std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        if (!params_.high_branch_reachable(num_classes_))
            out.push_back("b = " + std::to_string(params_.b) + " >= C-1 = " + std::to_string(num_classes_ - 1) +
                          ": the high-reward branch is unreachable beyond rank 1");
        if (fallback_classes_.size() == num_classes_)
            out.push_back("no class had a correctly classified training sample; every CLM is the uniform fallback");
        else if (!fallback_classes_.empty())
            out.push_back(std::to_string(fallback_classes_.size()) +
                          " class(es) had no correctly classified training sample and use the uniform fallback");
        return out;
    }

    friend bool operator==(const SmoothedClmSet&, const SmoothedClmSet&) = default;

private:
    std::size_t num_classes_ = 0;
    SmoothingParams params_;
    std::vector<double> smoothed_;
    std::vector<std::uint64_t> support_counts_;
    std::vector<std::uint32_t> fallback_classes_;
    std::vector<double> raw_;
};

// Builds all C likelihood matrices in one pass over the training set, then smooths them.
inline SmoothedClmSet fit(const LogitMatrix& train_logits, const LabelVector& train_labels,
                          const SmoothingParams& params, bool keep_raw = true) {
    params.validate();
    detail::check_training_pair(train_logits, train_labels);
    const std::size_t C = train_logits.num_classes();
    const std::size_t sq = C * C;

    std::vector<std::uint32_t> counts(C * sq, 0);
    std::vector<std::uint64_t> support(C, 0);
    std::vector<std::uint32_t> order;
    for (std::size_t n = 0; n < train_logits.num_samples(); ++n) {
        const auto row = train_logits.row(n);
        const std::uint32_t label = static_cast<std::uint32_t>(train_labels[n]);
        if (top_class(row) != label) continue;
        rank_classes_into(row, order);
        std::uint32_t* block = counts.data() + label * sq;
        for (std::size_t rank = 0; rank < C; ++rank) ++block[order[rank] * C + rank];
        ++support[label];
    }

    std::vector<double> raw(C * sq);
    std::vector<std::uint32_t> fallback;
    for (std::uint32_t c = 0; c < C; ++c) {
        double* out = raw.data() + c * sq;
        if (support[c] == 0) {
            const auto u = uniform_clm(C, c);
            std::copy(u.probs.begin(), u.probs.end(), out);
            fallback.push_back(c);
            continue;
        }
        const double denom = static_cast<double>(support[c]);
        const std::uint32_t* block = counts.data() + c * sq;
        for (std::size_t k = 0; k < sq; ++k) out[k] = static_cast<double>(block[k]) / denom;
    }

    std::vector<double> smoothed(raw.size());
    const auto levels = smoothed_levels(params, C);
    for (std::size_t k = 0; k < raw.size(); ++k)
        smoothed[k] = levels[static_cast<std::size_t>(smoothed_code(raw[k], params, C))];

    if (!keep_raw) raw.clear();
    return SmoothedClmSet(C, params, std::move(smoothed), std::move(support), std::move(fallback), std::move(raw));
}

// Re-smooths an existing raw tensor under new parameters without touching the training data.
inline SmoothedClmSet resmooth(const SmoothedClmSet& fitted, const SmoothingParams& params) {
    params.validate();
    const std::size_t C = fitted.num_classes();
    const auto& raw = fitted.raw_tensor();
    if (raw.empty()) throw MissingContext("resmooth needs a CLM set with raw likelihoods");
    std::vector<double> smoothed(raw.size());
    const auto levels = smoothed_levels(params, C);
    for (std::size_t k = 0; k < raw.size(); ++k)
        smoothed[k] = levels[static_cast<std::size_t>(smoothed_code(raw[k], params, C))];
    return SmoothedClmSet(C, params, std::move(smoothed), fitted.support_counts(), fitted.fallback_classes(), raw);
}

}  // namespace excel
