#pragma once

// Deterministic synthetic logits. ID samples carry a planted class-rank
// signature (each class boosts an ordered list of neighbour classes); OOD
// regimes either scramble that signature or remove it entirely.
//
// Randomness contract: every draw is a pure function of
// (seed, stream, sample index, slot). The key is folded through the
// SplitMix64 finaliser (constants below) and the top 53 bits give a uniform
// in (0, 1). Gaussians use the AS241 inverse normal CDF. No generator state is
// carried between draws, so batches are identical regardless of evaluation
// order or thread count.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "excel/error.hpp"
#include "excel/logit_store.hpp"

namespace excel::synth {

// SplitMix64 finaliser (Steele, Lea, Flood 2014).
inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t keyed_bits(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                                          std::uint64_t slot) {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ stream);
    h = mix64(h ^ sample);
    return mix64(h ^ slot);
}

// Uniform on the open interval (0, 1).
inline constexpr double keyed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample,
                                      std::uint64_t slot) {
    return (static_cast<double>(keyed_bits(seed, stream, sample, slot) >> 11) + 0.5) * 0x1.0p-53;
}

// Wichura's AS241 (PPND16): standard normal quantile, ~1e-16 relative accuracy.
inline double normal_quantile(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double z;
    if (r <= 5.0) {
        r -= 1.6;
        z = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                 1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
              4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        z = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                 0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
              5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -z : z;
}

inline double keyed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t sample, std::uint64_t slot) {
    return normal_quantile(keyed_uniform(seed, stream, sample, slot));
}

namespace stream {
inline constexpr std::uint64_t id_label = 1;
inline constexpr std::uint64_t id_noise = 2;
inline constexpr std::uint64_t ood_subset = 3;
inline constexpr std::uint64_t ood_noise = 4;
inline constexpr std::uint64_t companion_noise = 5;
inline constexpr std::uint64_t companion_label = 6;
}  // namespace stream

enum class Regime { signature_id, sparse_ood, uniform_ood, flat_ood };

inline std::string_view regime_name(Regime r) {
    switch (r) {
        case Regime::signature_id: return "signature_id";
        case Regime::sparse_ood: return "sparse_ood";
        case Regime::uniform_ood: return "uniform_ood";
        case Regime::flat_ood: return "flat_ood";
    }
    return "";
}

inline Regime parse_regime(std::string_view s) {
    for (auto r : {Regime::signature_id, Regime::sparse_ood, Regime::uniform_ood, Regime::flat_ood})
        if (regime_name(r) == s) return r;
    throw InvalidArgument("unknown regime '" + std::string(s) +
                          "' (expected signature_id, sparse_ood, uniform_ood or flat_ood)");
}

// Neighbour k (0-based) of a class is boosted by signal_strength * decay(k).
inline double decay(std::size_t k) { return 1.0 / static_cast<double>(k + 1); }

// For each class c: c+1, c-1, c+2, c-2, ... (mod C), `width` entries.
inline std::vector<std::vector<std::uint32_t>> ring_neighbors(std::size_t num_classes, std::size_t width) {
    std::vector<std::vector<std::uint32_t>> map(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t k = 0; k < width && map[c].size() + 1 < num_classes; ++k) {
            const std::size_t step = k / 2 + 1;
            const std::size_t cand = (k % 2 == 0) ? (c + step) % num_classes : (c + num_classes - step % num_classes) % num_classes;
            bool dup = cand == c;
            for (auto v : map[c]) dup = dup || v == cand;
            if (!dup) map[c].push_back(static_cast<std::uint32_t>(cand));
        }
    }
    return map;
}

struct SignatureModel {
    std::size_t num_classes = 10;
    std::vector<std::vector<std::uint32_t>> neighbor_map;
    double signal_strength = 5.0;
    double noise_scale = 1.0;
    std::uint64_t seed = 0;
    double base = 0.0;
    std::size_t ood_subset_size = 3;  // boosted classes per sparse_ood sample

    void validate() const {
        if (num_classes < 2) throw InvalidArgument("signature model needs at least two classes");
        if (neighbor_map.size() != num_classes)
            throw InvalidArgument("neighbor_map must have one entry per class");
        for (std::size_t c = 0; c < num_classes; ++c) {
            std::vector<bool> seen(num_classes, false);
            for (auto v : neighbor_map[c]) {
                if (v >= num_classes) throw InvalidArgument("neighbour index out of range");
                if (v == c) throw InvalidArgument("neighbour list of class " + std::to_string(c) + " contains itself");
                if (seen[v]) throw InvalidArgument("duplicate neighbour in list of class " + std::to_string(c));
                seen[v] = true;
            }
        }
        if (!(signal_strength >= 0.0)) throw InvalidArgument("signal_strength must be >= 0");
        if (!(noise_scale > 0.0)) throw InvalidArgument("noise_scale must be > 0");
        if (ood_subset_size < 1) throw InvalidArgument("ood_subset_size must be >= 1");
    }
};

// Accepts either "neighbor_map": [[...], ...] or "ring_width": k.
inline SignatureModel model_from_json(const nlohmann::json& j) {
    try {
        SignatureModel m;
        m.num_classes = j.at("num_classes").get<std::size_t>();
        if (j.contains("neighbor_map")) m.neighbor_map = j.at("neighbor_map").get<std::vector<std::vector<std::uint32_t>>>();
        else m.neighbor_map = ring_neighbors(m.num_classes, j.value("ring_width", std::size_t{0}));
        m.signal_strength = j.value("signal_strength", m.signal_strength);
        m.noise_scale = j.value("noise_scale", m.noise_scale);
        m.seed = j.value("seed", m.seed);
        m.base = j.value("base", m.base);
        m.ood_subset_size = j.value("ood_subset_size", m.ood_subset_size);
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile(std::string("signature model: ") + e.what());
    }
}

inline nlohmann::json model_to_json(const SignatureModel& m) {
    return {{"num_classes", m.num_classes},         {"neighbor_map", m.neighbor_map},
            {"signal_strength", m.signal_strength}, {"noise_scale", m.noise_scale},
            {"seed", m.seed},                       {"base", m.base},
            {"ood_subset_size", m.ood_subset_size}};
}

struct SynthBatch {
    LogitMatrix logits;
    std::optional<LabelVector> labels;
    Regime regime = Regime::signature_id;
};

namespace detail {

inline std::uint32_t keyed_class(std::uint64_t seed, std::uint64_t strm, std::uint64_t sample, std::size_t C) {
    const auto c = static_cast<std::size_t>(keyed_uniform(seed, strm, sample, 0) * static_cast<double>(C));
    return static_cast<std::uint32_t>(std::min(c, C - 1));
}

// Mean profile of a sample whose top class is `top` and whose ordered neighbours are `neigh`.
inline void add_profile(const SignatureModel& m, std::uint32_t top, const std::vector<std::uint32_t>& neigh,
                        double* row) {
    row[top] += 2.0 * m.signal_strength;
    for (std::size_t k = 0; k < neigh.size(); ++k) row[neigh[k]] += m.signal_strength * decay(k);
}

inline void id_row(const SignatureModel& m, std::uint64_t seed, std::uint64_t noise_stream, std::uint64_t sample,
                   std::uint32_t label, double* row) {
    for (std::size_t j = 0; j < m.num_classes; ++j)
        row[j] = m.base + m.noise_scale * keyed_normal(seed, noise_stream, sample, j);
    add_profile(m, label, m.neighbor_map[label], row);
}

inline void exchangeable_row(const SignatureModel& m, std::uint64_t seed, std::uint64_t sample, double* row) {
    for (std::size_t j = 0; j < m.num_classes; ++j)
        row[j] = m.base + m.noise_scale * keyed_normal(seed, stream::ood_noise, sample, j);
}

}  // namespace detail

// ID samples with labels drawn uniformly over classes.
inline SynthBatch gen_id(const SignatureModel& model, std::size_t n, std::optional<std::uint64_t> seed = {}) {
    model.validate();
    if (n == 0) throw EmptyBatch("gen_id: n must be at least 1");
    const std::uint64_t s = seed.value_or(model.seed);
    const std::size_t C = model.num_classes;
    std::vector<double> values(n * C);
    LabelVector labels;
    labels.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = detail::keyed_class(s, stream::id_label, i, C);
        labels.labels[i] = label;
        detail::id_row(model, s, stream::id_noise, i, label, values.data() + i * C);
    }
    return {LogitMatrix(std::move(values), n, C, "synth:signature_id"), std::move(labels), Regime::signature_id};
}

inline SynthBatch gen_ood(const SignatureModel& model, std::size_t n, Regime regime,
                          std::optional<std::uint64_t> seed = {}) {
    model.validate();
    if (n == 0) throw EmptyBatch("gen_ood: n must be at least 1");
    if (regime == Regime::signature_id) throw InvalidArgument("gen_ood: signature_id is an ID regime");
    const std::uint64_t s = seed.value_or(model.seed);
    const std::size_t C = model.num_classes;
    std::vector<double> values(n * C);
    std::vector<std::uint32_t> pool(C);
    std::vector<double> companion(C);

    for (std::size_t i = 0; i < n; ++i) {
        double* row = values.data() + i * C;
        detail::exchangeable_row(model, s, i, row);
        if (regime == Regime::sparse_ood) {
            // Random ordered subset: the first member plays the top class, the rest its neighbours.
            const std::size_t m = std::min(model.ood_subset_size, C);
            for (std::uint32_t c = 0; c < C; ++c) pool[c] = c;
            for (std::size_t k = 0; k < m; ++k) {
                const auto pick = k + static_cast<std::size_t>(keyed_uniform(s, stream::ood_subset, i, k) *
                                                               static_cast<double>(C - k));
                std::swap(pool[k], pool[std::min(pick, C - 1)]);
            }
            const std::vector<std::uint32_t> neigh(pool.begin() + 1, pool.begin() + static_cast<std::ptrdiff_t>(m));
            detail::add_profile(model, pool[0], neigh, row);
        } else if (regime == Regime::flat_ood) {
            // Shift so the max logit equals that of an independent ID draw.
            const auto label = detail::keyed_class(s, stream::companion_label, i, C);
            detail::id_row(model, s, stream::companion_noise, i, label, companion.data());
            double target = companion[0], current = row[0];
            for (std::size_t j = 1; j < C; ++j) {
                target = std::max(target, companion[j]);
                current = std::max(current, row[j]);
            }
            const double shift = target - current;
            for (std::size_t j = 0; j < C; ++j) row[j] += shift;
        }
    }
    return {LogitMatrix(std::move(values), n, C, "synth:" + std::string(regime_name(regime))), std::nullopt, regime};
}

inline SynthBatch generate(const SignatureModel& model, std::size_t n, Regime regime,
                           std::optional<std::uint64_t> seed = {}) {
    return regime == Regime::signature_id ? gen_id(model, n, seed) : gen_ood(model, n, regime, seed);
}

}  // namespace excel::synth
