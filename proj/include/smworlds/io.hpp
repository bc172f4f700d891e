#pragma once

// File formats: SMF1 binary fields, CSV tables and SHA-256 content hashes.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "density.hpp"
#include "error.hpp"

namespace smw::io {

namespace detail {
template <class T>
void put_le(std::string& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    out.append(b.data(), b.size());
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ConfigError("SMF1: truncated file");
    std::array<char, sizeof(T)> b;
    std::memcpy(b.data(), in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
    pos += sizeof(T);
    T v;
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}
} // namespace detail

/// Raw SMF1 payload: dims, cell volume, time and row-major values.
struct SmfField {
    std::vector<std::uint32_t> dims;
    double cell_volume = 1.0;
    double time = 0.0;
    std::vector<double> values;

    friend bool operator==(const SmfField&, const SmfField&) = default;
};

inline SmfField to_smf(const MassDensityField& m) {
    SmfField f;
    if (m.is_grid())
        for (auto d : m.dims) f.dims.push_back(static_cast<std::uint32_t>(d));
    else
        f.dims.push_back(static_cast<std::uint32_t>(m.values.size()));
    f.cell_volume = m.cell_volume;
    f.time = m.time;
    f.values = m.values;
    return f;
}

inline std::string encode_smf(const SmfField& f) {
    std::size_t count = 1;
    for (auto d : f.dims) count *= d;
    if (count != f.values.size()) throw ConfigError("SMF1: dims do not match value count");
    std::string out = "SMF1";
    detail::put_le<std::uint32_t>(out, 1);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(f.dims.size()));
    for (auto d : f.dims) detail::put_le<std::uint32_t>(out, d);
    detail::put_le<double>(out, f.cell_volume);
    detail::put_le<double>(out, f.time);
    for (double v : f.values) detail::put_le<double>(out, v);
    return out;
}

inline SmfField decode_smf(const std::string& bytes) {
    if (bytes.size() < 4 || bytes.compare(0, 4, "SMF1") != 0) throw ConfigError("SMF1: bad magic");
    std::size_t pos = 4;
    SmfField f;
    const auto version = detail::get_le<std::uint32_t>(bytes, pos);
    if (version != 1) throw ConfigError("SMF1: unsupported version " + std::to_string(version));
    const auto rank = detail::get_le<std::uint32_t>(bytes, pos);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        f.dims.push_back(detail::get_le<std::uint32_t>(bytes, pos));
        count *= f.dims.back();
    }
    f.cell_volume = detail::get_le<double>(bytes, pos);
    f.time = detail::get_le<double>(bytes, pos);
    if (bytes.size() - pos != count * sizeof(double)) throw ConfigError("SMF1: payload size mismatch");
    f.values.resize(count);
    for (auto& v : f.values) v = detail::get_le<double>(bytes, pos);
    return f;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("write failed for '" + p.string() + "'");
}

inline void write_smf(const std::filesystem::path& p, const MassDensityField& m) { write_file(p, encode_smf(to_smf(m))); }
inline SmfField read_smf(const std::filesystem::path& p) { return decode_smf(read_file(p)); }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Shortest text with 17 significant digits; exact f64 round trip.
inline std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// RFC 4180 quoting for fields containing separators, quotes or line breaks.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + '"';
}

class CsvWriter {
public:
    explicit CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) { row(header); }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) throw ConfigError("CSV row has the wrong number of columns");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += csv_field(cells[i]);
        }
        text_ += "\r\n";
    }

    const std::string& str() const { return text_; }

private:
    std::size_t columns_;
    std::string text_;
};

/// Parses RFC 4180 text into rows of fields.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            row.push_back(std::move(field));
            field.clear();
            rows.push_back(std::move(row));
            row.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("hash", "SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

} // namespace smw::io
