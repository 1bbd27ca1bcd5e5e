#pragma once

// Minimal NPY v1.0 reader/writer for the dtypes this project exchanges:
// little-endian float32, float64 and int64, C order, 1-D or 2-D.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "excel/error.hpp"

namespace excel::npy {

static_assert(std::endian::native == std::endian::little, "NPY payloads are read as host little-endian");

inline constexpr std::string_view magic{"\x93NUMPY", 6};

enum class Dtype { f4, f8, i8 };

inline std::string_view descr_of(Dtype t) {
    switch (t) {
        case Dtype::f4: return "<f4";
        case Dtype::f8: return "<f8";
        case Dtype::i8: return "<i8";
    }
    return "";
}

inline std::size_t item_size(Dtype t) { return t == Dtype::f4 ? 4 : 8; }

struct Array {
    Dtype dtype = Dtype::f8;
    std::vector<std::size_t> shape;
    std::vector<unsigned char> bytes;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

    // Payload widened to double. Integer payloads are converted too.
    std::vector<double> as_double() const {
        std::vector<double> out(count());
        const unsigned char* p = bytes.data();
        for (std::size_t i = 0; i < out.size(); ++i) {
            switch (dtype) {
                case Dtype::f4: {
                    float v;
                    std::memcpy(&v, p + 4 * i, 4);
                    out[i] = v;
                    break;
                }
                case Dtype::f8: std::memcpy(&out[i], p + 8 * i, 8); break;
                case Dtype::i8: {
                    std::int64_t v;
                    std::memcpy(&v, p + 8 * i, 8);
                    out[i] = static_cast<double>(v);
                    break;
                }
            }
        }
        return out;
    }

    std::vector<std::int64_t> as_int64() const {
        if (dtype != Dtype::i8) throw MalformedFile("expected an integer ('<i8') payload");
        std::vector<std::int64_t> out(count());
        if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * 8);
        return out;
    }
};

namespace detail {

// Cursor over the python-literal header dict, e.g.
// {'descr': '<f8', 'fortran_order': False, 'shape': (4, 3), }
class HeaderParser {
public:
    explicit HeaderParser(std::string_view s) : s_(s) {}

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!consume(c)) fail(std::string("expected '") + c + "'");
    }

    std::string quoted() {
        skip_ws();
        if (pos_ >= s_.size() || (s_[pos_] != '\'' && s_[pos_] != '"')) fail("expected a quoted string");
        const char q = s_[pos_++];
        const auto end = s_.find(q, pos_);
        if (end == std::string_view::npos) fail("unterminated string");
        std::string out(s_.substr(pos_, end - pos_));
        pos_ = end + 1;
        return out;
    }

    bool boolean() {
        skip_ws();
        if (s_.substr(pos_, 4) == "True") {
            pos_ += 4;
            return true;
        }
        if (s_.substr(pos_, 5) == "False") {
            pos_ += 5;
            return false;
        }
        fail("expected True or False");
        return false;
    }

    std::vector<std::size_t> tuple() {
        expect('(');
        std::vector<std::size_t> dims;
        while (!consume(')')) {
            skip_ws();
            std::size_t v = 0;
            bool any = false;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                v = v * 10 + static_cast<std::size_t>(s_[pos_++] - '0');
                any = true;
            }
            if (!any) fail("expected a dimension");
            dims.push_back(v);
            if (!consume(',')) {
                expect(')');
                break;
            }
        }
        return dims;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw MalformedFile("bad NPY header (" + what + "): " + std::string(s_));
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

inline Dtype parse_descr(const std::string& d) {
    if (d == "<f4") return Dtype::f4;
    if (d == "<f8") return Dtype::f8;
    if (d == "<i8") return Dtype::i8;
    throw MalformedFile("unsupported NPY dtype '" + d + "'");
}

inline std::string shape_literal(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    if (shape.size() == 1) s += ",";
    return s + ")";
}

}  // namespace detail

inline Array parse(const std::vector<unsigned char>& file, const std::string& name = "<buffer>") {
    if (file.size() < 10 || std::memcmp(file.data(), magic.data(), magic.size()) != 0)
        throw MalformedFile(name + ": not an NPY file (bad magic)");
    if (file[6] != 1 || file[7] != 0)
        throw MalformedFile(name + ": unsupported NPY version " + std::to_string(file[6]) + "." +
                            std::to_string(file[7]));
    const std::size_t header_len = file[8] | (static_cast<std::size_t>(file[9]) << 8);
    if (file.size() < 10 + header_len) throw MalformedFile(name + ": truncated NPY header");
    const std::string_view header(reinterpret_cast<const char*>(file.data()) + 10, header_len);

    Array arr;
    bool have_descr = false, have_order = false, have_shape = false, fortran = false;
    detail::HeaderParser p(header);
    p.expect('{');
    while (!p.consume('}')) {
        const std::string key = p.quoted();
        p.expect(':');
        if (key == "descr") {
            arr.dtype = detail::parse_descr(p.quoted());
            have_descr = true;
        } else if (key == "fortran_order") {
            fortran = p.boolean();
            have_order = true;
        } else if (key == "shape") {
            arr.shape = p.tuple();
            have_shape = true;
        } else {
            p.fail("unknown key '" + key + "'");
        }
        if (!p.consume(',')) {
            p.expect('}');
            break;
        }
    }
    if (!have_descr || !have_order || !have_shape) throw MalformedFile(name + ": NPY header is missing keys");
    if (fortran) throw MalformedFile(name + ": fortran_order arrays are not supported");

    const std::size_t payload = arr.count() * item_size(arr.dtype);
    const std::size_t offset = 10 + header_len;
    if (file.size() - offset != payload)
        throw MalformedFile(name + ": payload size " + std::to_string(file.size() - offset) +
                            " does not match header shape " + detail::shape_literal(arr.shape));
    arr.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(offset), file.end());
    return arr;
}

inline std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

inline Array load(const std::string& path) { return parse(read_file(path), path); }

inline std::vector<unsigned char> serialize(Dtype dtype, const std::vector<std::size_t>& shape, const void* data,
                                            std::size_t nbytes) {
    std::string header = "{'descr': '" + std::string(descr_of(dtype)) +
                         "', 'fortran_order': False, 'shape': " + detail::shape_literal(shape) + ", }";
    // Pad so the payload starts on a 64-byte boundary, newline-terminated.
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    std::vector<unsigned char> out;
    out.reserve(10 + header.size() + nbytes);
    out.insert(out.end(), magic.begin(), magic.end());
    out.push_back(1);
    out.push_back(0);
    out.push_back(static_cast<unsigned char>(header.size() & 0xff));
    out.push_back(static_cast<unsigned char>(header.size() >> 8));
    out.insert(out.end(), header.begin(), header.end());
    const auto* p = static_cast<const unsigned char*>(data);
    out.insert(out.end(), p, p + nbytes);
    return out;
}

inline void save(const std::string& path, const std::vector<std::size_t>& shape, const std::vector<double>& values) {
    write_file(path, serialize(Dtype::f8, shape, values.data(), values.size() * 8));
}

inline void save(const std::string& path, const std::vector<std::size_t>& shape, const std::vector<float>& values) {
    write_file(path, serialize(Dtype::f4, shape, values.data(), values.size() * 4));
}

inline void save(const std::string& path, const std::vector<std::size_t>& shape,
                 const std::vector<std::int64_t>& values) {
    write_file(path, serialize(Dtype::i8, shape, values.data(), values.size() * 8));
}

}  // namespace excel::npy
