#pragma once

// Logit matrices, label vectors, score vectors and split manifests, with
// their NPY / CSV / JSON interchange formats.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "excel/error.hpp"
#include "excel/npy.hpp"

namespace excel {

// N x C pre-softmax outputs, row-major, one row per sample.
class LogitMatrix {
public:
    LogitMatrix() = default;

    LogitMatrix(std::vector<double> values, std::size_t num_samples, std::size_t num_classes,
                std::string source_tag = {})
        : values_(std::move(values)), rows_(num_samples), cols_(num_classes), source_tag_(std::move(source_tag)) {
        if (rows_ < 1) throw ShapeError("logit matrix needs at least one sample");
        if (cols_ < 2) throw ShapeError("logit matrix needs at least two classes, got " + std::to_string(cols_));
        if (values_.size() != rows_ * cols_)
            throw ShapeError("logit payload has " + std::to_string(values_.size()) + " values, expected " +
                             std::to_string(rows_ * cols_));
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (!std::isfinite(values_[i])) throw NonFiniteValue(i / cols_, i % cols_);
    }

    std::size_t num_samples() const noexcept { return rows_; }
    std::size_t num_classes() const noexcept { return cols_; }
    const std::string& source_tag() const noexcept { return source_tag_; }
    const std::vector<double>& values() const noexcept { return values_; }

    std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

    friend bool operator==(const LogitMatrix& a, const LogitMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
    }

private:
    std::vector<double> values_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::string source_tag_;
};

struct LabelVector {
    std::vector<std::int64_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t operator[](std::size_t i) const { return static_cast<std::size_t>(labels[i]); }
};

// Per-sample OOD scores. Convention: higher means more in-distribution.
struct ScoreVector {
    std::string method;
    std::vector<double> scores;

    std::size_t size() const noexcept { return scores.size(); }
};

enum class FileFormat { npy, csv };

inline FileFormat format_from_path(const std::string& path) {
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".csv" || ext == ".txt") return FileFormat::csv;
    return FileFormat::npy;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view tok, std::size_t row, std::size_t col, const std::string& path) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw MalformedFile(path + ": cannot parse '" + std::string(tok) + "' at row " + std::to_string(row) +
                            ", col " + std::to_string(col));
    return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos) lines.pop_back();
    return lines;
}

}  // namespace detail

inline LogitMatrix load_logits(const std::string& path, FileFormat format) {
    if (format == FileFormat::npy) {
        const auto arr = npy::load(path);
        if (arr.shape.size() != 2)
            throw ShapeError(path + ": logits must be 2-D, got " + std::to_string(arr.shape.size()) + "-D");
        if (arr.dtype == npy::Dtype::i8) throw MalformedFile(path + ": logits must be '<f4' or '<f8'");
        return LogitMatrix(arr.as_double(), arr.shape[0], arr.shape[1], path);
    }

    const auto lines = detail::read_lines(path);
    std::vector<double> values;
    std::size_t cols = 0;
    for (std::size_t r = 0; r < lines.size(); ++r) {
        std::string_view line = lines[r];
        std::size_t c = 0;
        while (true) {
            const auto comma = line.find(',');
            values.push_back(detail::parse_double(line.substr(0, comma), r, c, path));
            ++c;
            if (comma == std::string_view::npos) break;
            line.remove_prefix(comma + 1);
        }
        if (r == 0) cols = c;
        else if (c != cols)
            throw ShapeError(path + ": row " + std::to_string(r) + " has " + std::to_string(c) + " columns, expected " +
                             std::to_string(cols));
    }
    return LogitMatrix(std::move(values), lines.size(), cols, path);
}

inline LogitMatrix load_logits(const std::string& path) { return load_logits(path, format_from_path(path)); }

inline void save_logits(const std::string& path, const LogitMatrix& m, FileFormat format,
                        npy::Dtype dtype = npy::Dtype::f8) {
    if (format == FileFormat::npy) {
        const std::vector<std::size_t> shape{m.num_samples(), m.num_classes()};
        if (dtype == npy::Dtype::f4) {
            std::vector<float> narrow(m.values().begin(), m.values().end());
            npy::save(path, shape, narrow);
        } else {
            npy::save(path, shape, m.values());
        }
        return;
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    for (std::size_t i = 0; i < m.num_samples(); ++i) {
        for (std::size_t j = 0; j < m.num_classes(); ++j) {
            if (j) out << ',';
            out << detail::format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline void check_labels(const LabelVector& labels, std::size_t expected_n, std::size_t num_classes) {
    if (labels.size() != expected_n)
        throw LengthMismatch("label count " + std::to_string(labels.size()) + " does not match " +
                             std::to_string(expected_n) + " samples");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels.labels[i] < 0 || static_cast<std::size_t>(labels.labels[i]) >= num_classes)
            throw LabelOutOfRange(i, labels.labels[i]);
}

inline LabelVector load_labels(const std::string& path, std::size_t expected_n, std::size_t num_classes) {
    if (expected_n < 1) throw InvalidArgument("expected_n must be at least 1");
    LabelVector out;
    if (format_from_path(path) == FileFormat::npy) {
        const auto arr = npy::load(path);
        if (arr.shape.size() != 1) throw ShapeError(path + ": labels must be 1-D");
        out.labels = arr.as_int64();
    } else {
        const auto lines = detail::read_lines(path);
        for (std::size_t r = 0; r < lines.size(); ++r) {
            std::string_view tok = lines[r];
            while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
            while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
            std::int64_t v = 0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                throw MalformedFile(path + ": bad label '" + std::string(tok) + "' on line " + std::to_string(r));
            out.labels.push_back(v);
        }
    }
    check_labels(out, expected_n, num_classes);
    return out;
}

inline void save_labels(const std::string& path, const LabelVector& labels) {
    npy::save(path, {labels.size()}, labels.labels);
}

inline void save_scores(const ScoreVector& scores, const std::string& path) {
    if (scores.scores.empty()) throw EmptyPayload("refusing to write an empty score vector to '" + path + "'");
    npy::save(path, {scores.size()}, scores.scores);
}

inline ScoreVector load_scores(const std::string& path) {
    const auto arr = npy::load(path);
    if (arr.shape.size() != 1) throw ShapeError(path + ": scores must be 1-D");
    if (arr.dtype != npy::Dtype::f8) throw MalformedFile(path + ": scores must be '<f8'");
    if (arr.count() == 0) throw EmptyPayload(path + ": empty score vector");
    return {std::string{}, arr.as_double()};
}

// ---------------------------------------------------------------------------
// Split manifest

enum class OodGroup { near, far };

inline const char* to_string(OodGroup g) { return g == OodGroup::near ? "near" : "far"; }

struct DataRef {
    std::string logits;
    std::optional<std::string> labels;
};

struct OodSet {
    std::string name;
    std::string path;
    OodGroup group = OodGroup::near;
};

struct SplitManifest {
    DataRef id_train;
    std::optional<DataRef> id_val;
    DataRef id_test;
    std::vector<OodSet> ood;
};

namespace detail {

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    if (path.is_absolute() || base.empty()) return path.string();
    return (base / path).lexically_normal().string();
}

inline void require_file(const std::string& role, const std::string& path) {
    if (!std::filesystem::is_regular_file(path))
        throw IoError("manifest entry '" + role + "' references missing file '" + path + "'");
}

inline DataRef parse_data_ref(const nlohmann::json& j, const std::string& role, const std::filesystem::path& base) {
    DataRef ref;
    if (j.is_string()) {
        ref.logits = resolve(base, j.get<std::string>());
    } else if (j.is_object() && j.contains("logits")) {
        ref.logits = resolve(base, j.at("logits").get<std::string>());
        if (j.contains("labels")) ref.labels = resolve(base, j.at("labels").get<std::string>());
    } else {
        throw MalformedFile("manifest entry '" + role + "' must be a path or {\"logits\", \"labels\"}");
    }
    require_file(role, ref.logits);
    if (ref.labels) require_file(role + ".labels", *ref.labels);
    return ref;
}

}  // namespace detail

namespace detail {

inline SplitManifest parse_manifest_unchecked(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw MalformedFile("manifest must be a JSON object");
    for (const char* key : {"id_train", "id_test", "ood"})
        if (!j.contains(key)) throw MalformedFile(std::string("manifest is missing '") + key + "'");

    SplitManifest m;
    m.id_train = detail::parse_data_ref(j.at("id_train"), "id_train", base_dir);
    m.id_test = detail::parse_data_ref(j.at("id_test"), "id_test", base_dir);
    if (j.contains("id_val")) m.id_val = detail::parse_data_ref(j.at("id_val"), "id_val", base_dir);

    for (const auto& entry : j.at("ood")) {
        OodSet s;
        s.name = entry.at("name").get<std::string>();
        s.path = detail::resolve(base_dir, entry.at("path").get<std::string>());
        const auto group = entry.at("group").get<std::string>();
        if (group == "near") s.group = OodGroup::near;
        else if (group == "far") s.group = OodGroup::far;
        else throw MalformedFile("OOD set '" + s.name + "' has group '" + group + "', expected near or far");
        if (s.name == "id_train" || s.name == "id_val" || s.name == "id_test")
            throw MalformedFile("OOD set name '" + s.name + "' collides with an ID role");
        for (const auto& prev : m.ood)
            if (prev.name == s.name) throw MalformedFile("duplicate OOD set name '" + s.name + "'");
        detail::require_file(s.name, s.path);
        m.ood.push_back(std::move(s));
    }
    if (m.ood.empty()) throw MalformedFile("manifest lists no OOD sets");
    return m;
}

}  // namespace detail

// Relative paths resolve against `base_dir`.
inline SplitManifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    try {
        return detail::parse_manifest_unchecked(j, base_dir);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile(std::string("manifest: ") + e.what());
    }
}

inline SplitManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw MalformedFile("manifest '" + path + "': " + e.what());
    }
    return parse_manifest(j, std::filesystem::path(path).parent_path());
}

}  // namespace excel
