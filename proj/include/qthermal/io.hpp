#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qthermal/errors.hpp"
#include "qthermal/operators.hpp"

namespace qthermal {

/// Shortest decimal string that parses back to the same double.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::array<char, 64> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), r.ptr);
}

inline double parse_double(const std::string& s) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double x = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    require(r.ec == std::errc() && r.ptr == s.data() + s.size(), "malformed number '" + s + "'");
    return x;
}

using CsvCell = std::variant<std::string, std::int64_t, double>;

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<CsvCell> row) {
        require(row.size() == header_.size(), "CSV row width does not match the header");
        rows_.push_back(std::move(row));
    }

    std::size_t rows() const noexcept { return rows_.size(); }

    std::string str() const {
        std::string out;
        append_line(out, header_);
        for (const auto& row : rows_) {
            std::vector<std::string> cells;
            for (const auto& c : row) {
                if (const auto* s = std::get_if<std::string>(&c)) cells.push_back(*s);
                else if (const auto* i = std::get_if<std::int64_t>(&c)) cells.push_back(std::to_string(*i));
                else cells.push_back(format_double(std::get<double>(c)));
            }
            append_line(out, cells);
        }
        return out;
    }

private:
    static void append_line(std::string& out, const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            const auto& c = cells[i];
            if (c.find_first_of(",\"\n") == std::string::npos) {
                out += c;
            } else {
                out += '"';
                for (char ch : c) {
                    if (ch == '"') out += '"';
                    out += ch;
                }
                out += '"';
            }
        }
        out += '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<CsvCell>> rows_;
};

/// FNV-1a, 64 bit.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ResourceError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ResourceError("write failed for " + path.string());
}

/// Two-space indented JSON with a trailing newline.
inline std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(what + ": " + e.what());
    }
}

/// Complex matrix as little-endian interleaved (re, im) float64, column-major.
inline std::string complex_matrix_bytes(const ComplexMatrix& m) {
    static_assert(sizeof(double) == 8);
    std::string out;
    out.reserve(static_cast<std::size_t>(m.size()) * 16);
    auto put = [&out](double x) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &x, 8);
        for (int b = 0; b < 8; ++b) out += static_cast<char>((bits >> (8 * b)) & 0xff);
    };
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            put(m(r, c).real());
            put(m(r, c).imag());
        }
    return out;
}

inline ComplexMatrix complex_matrix_from_bytes(const std::string& bytes, Eigen::Index rows, Eigen::Index cols) {
    require(static_cast<std::size_t>(rows * cols) * 16 == bytes.size(), "binary size does not match the sidecar shape");
    ComplexMatrix m(rows, cols);
    std::size_t pos = 0;
    auto get = [&]() {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
        double x = 0;
        std::memcpy(&x, &bits, 8);
        return x;
    };
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) {
            const double re = get();
            m(r, c) = cplx(re, get());
        }
    return m;
}

inline nlohmann::json complex_matrix_sidecar(const ComplexMatrix& m, const std::string& data_file) {
    return {{"file", data_file},
            {"dtype", "complex128"},
            {"byte_order", "little"},
            {"layout", "column_major"},
            {"rows", m.rows()},
            {"cols", m.cols()}};
}

}  // namespace qthermal
