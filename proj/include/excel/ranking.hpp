#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "excel/error.hpp"

namespace excel {

// classes_by_rank[r] is the class at rank r (0-based; rank 0 is the top-1 class).
struct RankPermutation {
    std::vector<std::uint32_t> classes_by_rank;

    std::size_t size() const noexcept { return classes_by_rank.size(); }
    std::uint32_t top() const { return classes_by_rank.front(); }
    std::uint32_t operator[](std::size_t rank) const { return classes_by_rank[rank]; }

    friend bool operator==(const RankPermutation&, const RankPermutation&) = default;
};

// Dense C x C 0/1 matrix; rows are classes, columns are ranks.
struct OneHotRankingMatrix {
    std::size_t size = 0;
    std::vector<std::uint8_t> cells;

    std::uint8_t operator()(std::size_t cls, std::size_t rank) const { return cells[cls * size + rank]; }
};

namespace detail {

struct RankOrder {
    std::span<const double> logits;

    bool operator()(std::uint32_t a, std::uint32_t b) const {
        return logits[a] > logits[b] || (logits[a] == logits[b] && a < b);
    }
};

}  // namespace detail

// Sorts classes by logit, descending. Ties go to the lower class index.
inline RankPermutation rank_classes(std::span<const double> logits) {
    RankPermutation perm;
    perm.classes_by_rank.resize(logits.size());
    std::iota(perm.classes_by_rank.begin(), perm.classes_by_rank.end(), 0u);
    std::sort(perm.classes_by_rank.begin(), perm.classes_by_rank.end(), detail::RankOrder{logits});
    return perm;
}

// Allocation-free variant for hot loops; `out` is resized to logits.size().
inline void rank_classes_into(std::span<const double> logits, std::vector<std::uint32_t>& out) {
    out.resize(logits.size());
    std::iota(out.begin(), out.end(), 0u);
    std::sort(out.begin(), out.end(), detail::RankOrder{logits});
}

// Index of the largest logit, lowest index on ties. Agrees with rank_classes(...).top().
inline std::uint32_t top_class(std::span<const double> logits) {
    std::uint32_t best = 0;
    for (std::uint32_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

inline bool is_permutation(const RankPermutation& perm) {
    std::vector<bool> seen(perm.size(), false);
    for (auto c : perm.classes_by_rank) {
        if (c >= perm.size() || seen[c]) return false;
        seen[c] = true;
    }
    return true;
}

inline OneHotRankingMatrix to_one_hot(const RankPermutation& perm) {
    if (!is_permutation(perm)) throw InvalidArgument("to_one_hot: input is not a permutation");
    const std::size_t n = perm.size();
    OneHotRankingMatrix m{n, std::vector<std::uint8_t>(n * n, 0)};
    for (std::size_t rank = 0; rank < n; ++rank) m.cells[perm[rank] * n + rank] = 1;
    return m;
}

}  // namespace excel
