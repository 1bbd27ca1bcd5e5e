#pragma once

// CLM container file:
//
//   "EXCELCLM"            8 bytes
//   format version        u32  (currently 1)
//   num_classes C         u32
//   encoding              u32  (0 = f64, 1 = 2 bits per entry)
//   flags                 u32  (bit 0: raw likelihoods follow the smoothed payload)
//   a, b                  f64, f64
//   support counts        u64 x C
//   fallback flags        u8 x C
//   smoothed payload      f64 x C^3, or ceil(C^3 / 4) bytes of 2-bit codes
//   raw payload           f64 x C^3 (only when flag bit 0 is set)
//   CRC32                 u32 over every preceding byte
//
// All integers and floats are little-endian. A JSON sidecar (<path>.json)
// mirrors the parameters and per-class bookkeeping for external tools.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "excel/clm.hpp"
#include "excel/error.hpp"
#include "excel/npy.hpp"

namespace excel {

enum class ClmEncoding : std::uint32_t { f64 = 0, two_bit = 1 };

inline constexpr char clm_magic[8] = {'E', 'X', 'C', 'E', 'L', 'C', 'L', 'M'};
inline constexpr std::uint32_t clm_format_version = 1;

namespace detail {

class ByteWriter {
public:
    template <typename T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        bytes.insert(bytes.end(), p, p + sizeof(T));
    }

    void put_bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        bytes.insert(bytes.end(), p, p + n);
    }

    std::vector<unsigned char> bytes;
};

class ByteReader {
public:
    ByteReader(const std::vector<unsigned char>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    template <typename T>
    T get() {
        T v;
        take(&v, sizeof(T));
        return v;
    }

    void take(void* out, std::size_t n) {
        if (pos_ + n > end_) throw ChecksumMismatch("CLM file is truncated");
        std::memcpy(out, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t remaining() const { return end_ - pos_; }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in chunks.
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

inline std::vector<unsigned char> serialize_clm_set(const SmoothedClmSet& set, ClmEncoding encoding = ClmEncoding::f64,
                                                    bool include_raw = true) {
    const std::size_t C = set.num_classes();
    const auto& smoothed = set.smoothed_tensor();
    include_raw = include_raw && set.has_raw();

    detail::ByteWriter w;
    w.put_bytes(clm_magic, sizeof(clm_magic));
    w.put(clm_format_version);
    w.put(static_cast<std::uint32_t>(C));
    w.put(static_cast<std::uint32_t>(encoding));
    w.put(static_cast<std::uint32_t>(include_raw ? 1u : 0u));
    w.put(set.params().a);
    w.put(set.params().b);
    for (auto s : set.support_counts()) w.put(static_cast<std::uint64_t>(s));
    std::vector<std::uint8_t> flags(C, 0);
    for (auto c : set.fallback_classes()) flags[c] = 1;
    w.put_bytes(flags.data(), flags.size());

    if (encoding == ClmEncoding::f64) {
        w.put_bytes(smoothed.data(), smoothed.size() * sizeof(double));
    } else {
        const auto levels = smoothed_levels(set.params(), C);
        std::vector<std::uint8_t> packed((smoothed.size() + 3) / 4, 0);
        for (std::size_t k = 0; k < smoothed.size(); ++k) {
            std::uint8_t code = 4;
            for (std::uint8_t q = 0; q < 4; ++q)
                if (smoothed[k] == levels[q]) code = q;
            if (code == 4) throw InvalidArgument("smoothed entry is not one of the four levels; use f64 encoding");
            packed[k / 4] |= static_cast<std::uint8_t>(code << (2 * (k % 4)));
        }
        w.put_bytes(packed.data(), packed.size());
    }
    if (include_raw) w.put_bytes(set.raw_tensor().data(), set.raw_tensor().size() * sizeof(double));

    w.put(detail::crc32_of(w.bytes.data(), w.bytes.size()));
    return std::move(w.bytes);
}

inline SmoothedClmSet parse_clm_set(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < sizeof(clm_magic) + 4 || std::memcmp(bytes.data(), clm_magic, sizeof(clm_magic)) != 0)
        throw VersionMismatch("not a CLM container (bad magic)");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + sizeof(clm_magic), 4);
    if (version != clm_format_version)
        throw VersionMismatch("unsupported CLM format version " + std::to_string(version));

    if (bytes.size() < sizeof(clm_magic) + 8) throw ChecksumMismatch("CLM file is truncated");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + body, 4);
    if (detail::crc32_of(bytes.data(), body) != stored_crc) throw ChecksumMismatch("CLM checksum mismatch");

    detail::ByteReader r(bytes, body);
    char magic[8];
    r.take(magic, sizeof(magic));
    r.get<std::uint32_t>();
    const std::size_t C = r.get<std::uint32_t>();
    const auto encoding = static_cast<ClmEncoding>(r.get<std::uint32_t>());
    const std::uint32_t flags = r.get<std::uint32_t>();
    if (C < 2) throw MalformedFile("CLM container declares fewer than two classes");
    if (encoding != ClmEncoding::f64 && encoding != ClmEncoding::two_bit)
        throw MalformedFile("unknown CLM entry encoding");

    SmoothingParams params;
    params.a = r.get<double>();
    params.b = r.get<double>();
    std::vector<std::uint64_t> support(C);
    for (auto& s : support) s = r.get<std::uint64_t>();
    std::vector<std::uint8_t> fb(C);
    r.take(fb.data(), fb.size());
    std::vector<std::uint32_t> fallback;
    for (std::uint32_t c = 0; c < C; ++c)
        if (fb[c]) fallback.push_back(c);

    const std::size_t cube = C * C * C;
    std::vector<double> smoothed(cube);
    if (encoding == ClmEncoding::f64) {
        r.take(smoothed.data(), cube * sizeof(double));
    } else {
        std::vector<std::uint8_t> packed((cube + 3) / 4);
        r.take(packed.data(), packed.size());
        const auto levels = smoothed_levels(params, C);
        for (std::size_t k = 0; k < cube; ++k) smoothed[k] = levels[(packed[k / 4] >> (2 * (k % 4))) & 3u];
    }
    std::vector<double> raw;
    if (flags & 1u) {
        raw.resize(cube);
        r.take(raw.data(), cube * sizeof(double));
    }
    if (r.remaining() != 0) throw MalformedFile("trailing bytes in CLM container");
    return SmoothedClmSet(C, params, std::move(smoothed), std::move(support), std::move(fallback), std::move(raw));
}

inline nlohmann::ordered_json clm_sidecar(const SmoothedClmSet& set, ClmEncoding encoding) {
    nlohmann::ordered_json j;
    j["a"] = set.params().a;
    j["b"] = set.params().b;
    j["num_classes"] = set.num_classes();
    j["fallback_classes"] = set.fallback_classes();
    j["support_counts"] = set.support_counts();
    j["encoding"] = encoding == ClmEncoding::f64 ? "f64" : "2bit";
    j["format_version"] = clm_format_version;
    return j;
}

inline std::string clm_sidecar_path(const std::string& path) { return path + ".json"; }

inline void save_clm_set(const SmoothedClmSet& set, const std::string& path, ClmEncoding encoding = ClmEncoding::f64,
                         bool include_raw = true) {
    npy::write_file(path, serialize_clm_set(set, encoding, include_raw));
    std::ofstream side(clm_sidecar_path(path), std::ios::trunc);
    if (!side) throw IoError("cannot write '" + clm_sidecar_path(path) + "'");
    side << clm_sidecar(set, encoding).dump(2) << '\n';
}

inline SmoothedClmSet load_clm_set(const std::string& path) { return parse_clm_set(npy::read_file(path)); }

}  // namespace excel
