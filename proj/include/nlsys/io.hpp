#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "nlsys/grid.hpp"

namespace nlsys {

/// 17 significant digits, enough to round-trip any double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Fixed-column numeric table written as comma-separated text with a header row.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add_row(const std::vector<double>& row) {
        if (row.size() != columns_.size()) throw UsageError("CSV row has " + std::to_string(row.size()) +
                                                            " values for " + std::to_string(columns_.size()) + " columns");
        rows_.push_back(row);
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<double>>& rows() const { return rows_; }

    std::string str() const {
        std::string out;
        for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + columns_[i];
        out += "\n";
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + format_double(r[i]);
            out += "\n";
        }
        return out;
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw UsageError("cannot open " + path + " for writing");
        f << str();
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<double>> rows_;
};

/**
 * Field file layout (all integers and floats little-endian):
 *   8 bytes  magic "NLSYSFLD"
 *   u32      version (1)
 *   u32      endianness tag 0x01020304
 *   u32      d, u32 M, f64 L, u32 N
 *   payload  N fields of M^d complex values, row-major, re/im interleaved f64
 */
namespace fieldfile {

inline constexpr char magic[8] = {'N', 'L', 'S', 'Y', 'S', 'F', 'L', 'D'};
inline constexpr std::uint32_t version = 1;
inline constexpr std::uint32_t endian_tag = 0x01020304u;

namespace detail {

template <class T>
void put(std::ostream& o, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    o.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    unsigned char b[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw UsageError("field file is truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace detail

inline void write(const std::string& path, const std::vector<ScalarField>& fields) {
    if (fields.empty()) throw UsageError("no fields to write");
    const auto& g = *fields.front().grid();
    std::ofstream o(path, std::ios::binary);
    if (!o) throw UsageError("cannot open " + path + " for writing");
    o.write(magic, 8);
    detail::put<std::uint32_t>(o, version);
    detail::put<std::uint32_t>(o, endian_tag);
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(g.dim()));
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(g.points()));
    detail::put<double>(o, g.half_width());
    detail::put<std::uint32_t>(o, static_cast<std::uint32_t>(fields.size()));
    for (const auto& f0 : fields) {
        const ScalarField f = to_physical(f0);
        for (const auto& c : f.values()) {
            detail::put<double>(o, c.real());
            detail::put<double>(o, c.imag());
        }
    }
}

struct Contents {
    GridSpec spec;
    std::vector<std::vector<cplx>> fields;
};

inline Contents read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open " + path);
    char m[8];
    if (!in.read(m, 8) || std::memcmp(m, magic, 8) != 0) throw UsageError(path + " is not a field file");
    if (detail::get<std::uint32_t>(in) != version) throw UsageError(path + ": unsupported field file version");
    if (detail::get<std::uint32_t>(in) != endian_tag) throw UsageError(path + ": bad endianness tag");
    Contents c;
    c.spec.dim = static_cast<int>(detail::get<std::uint32_t>(in));
    c.spec.points = static_cast<int>(detail::get<std::uint32_t>(in));
    c.spec.half_width = detail::get<double>(in);
    c.spec.validate();
    const auto n = detail::get<std::uint32_t>(in);
    for (std::uint32_t k = 0; k < n; ++k) {
        std::vector<cplx> v(c.spec.size());
        for (auto& z : v) {
            const double re = detail::get<double>(in);
            const double im = detail::get<double>(in);
            z = cplx(re, im);
        }
        c.fields.push_back(std::move(v));
    }
    return c;
}

} // namespace fieldfile

} // namespace nlsys
