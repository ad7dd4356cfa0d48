#pragma once

// CSV serialization of sweep rows. Floats carry 17 significant digits so a
// parse of the emitted file reproduces every double exactly.

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tslab/error.hpp"
#include "tslab/experiments.hpp"

namespace tslab::csv {

inline constexpr const char* kHeader =
    "variant,rho_a,rho_b,hyper,seed,transfer_sim,retention_sim,transfer_theory,retention_theory,valid,seconds";

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string format_optional(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

inline std::string header(const std::vector<std::string>& extra_columns = {}) {
    std::string h = kHeader;
    for (const auto& c : extra_columns) h += "," + c;
    return h;
}

inline std::string format_row(const experiments::ResultRow& r) {
    std::string line;
    line += to_string(r.variant);
    line += ',' + format_double(r.rho_a);
    line += ',' + format_double(r.rho_b);
    line += ',' + format_double(r.hyper);
    line += ',' + std::to_string(r.seed);
    line += ',' + format_optional(r.transfer_sim);
    line += ',' + format_optional(r.retention_sim);
    line += ',' + format_optional(r.transfer_theory);
    line += ',' + format_optional(r.retention_theory);
    line += ',' + r.valid;
    line += ',' + format_double(r.seconds);
    for (const auto& x : r.extra) line += ',' + format_optional(x);
    return line;
}

inline std::string render(const std::vector<experiments::ResultRow>& rows,
                          const std::vector<std::string>& extra_columns = {}) {
    std::string out = header(extra_columns) + "\n";
    for (const auto& r : rows) {
        require(r.extra.size() == extra_columns.size(), ErrorCode::format_error,
                "row has " + std::to_string(r.extra.size()) + " extra values for " +
                    std::to_string(extra_columns.size()) + " extra columns");
        out += format_row(r) + "\n";
    }
    return out;
}

/// Writes text to a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(f), ErrorCode::io_error,
                "cannot open " + tmp.string() + " for writing: " + std::strerror(errno));
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        f.flush();
        require(static_cast<bool>(f), ErrorCode::io_error, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error(ErrorCode::io_error, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

inline void write_csv(const std::vector<experiments::ResultRow>& rows, const std::filesystem::path& path,
                      const std::vector<std::string>& extra_columns = {}) {
    write_atomic(path, render(rows, extra_columns));
}

namespace detail {

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(s.c_str(), &end);
    require(!s.empty() && end == s.c_str() + s.size() && errno != ERANGE, ErrorCode::format_error,
            "line " + std::to_string(line_no) + ": bad number '" + s + "'");
    return v;
}

inline std::optional<double> parse_optional(const std::string& s, std::size_t line_no) {
    if (s.empty()) return std::nullopt;
    return parse_double(s, line_no);
}

}  // namespace detail

struct Table {
    std::vector<std::string> extra_columns;
    std::vector<experiments::ResultRow> rows;
};

inline Table parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::format_error, "missing CSV header");
    const auto head = detail::split(line);
    const auto base = detail::split(kHeader);
    require(head.size() >= base.size() && std::equal(base.begin(), base.end(), head.begin()), ErrorCode::format_error,
            "unexpected CSV header: " + line);
    Table t;
    t.extra_columns.assign(head.begin() + static_cast<std::ptrdiff_t>(base.size()), head.end());

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = detail::split(line);
        require(f.size() == head.size(), ErrorCode::format_error,
                "line " + std::to_string(line_no) + ": expected " + std::to_string(head.size()) + " fields");
        experiments::ResultRow r;
        const auto v = parse_variant(f[0]);
        require(v.has_value(), ErrorCode::format_error, "line " + std::to_string(line_no) + ": unknown variant " + f[0]);
        r.variant = *v;
        r.rho_a = detail::parse_double(f[1], line_no);
        r.rho_b = detail::parse_double(f[2], line_no);
        r.hyper = detail::parse_double(f[3], line_no);
        r.seed = std::stoull(f[4]);
        r.transfer_sim = detail::parse_optional(f[5], line_no);
        r.retention_sim = detail::parse_optional(f[6], line_no);
        r.transfer_theory = detail::parse_optional(f[7], line_no);
        r.retention_theory = detail::parse_optional(f[8], line_no);
        r.valid = f[9];
        r.seconds = detail::parse_double(f[10], line_no);
        for (std::size_t i = base.size(); i < f.size(); ++i) r.extra.push_back(detail::parse_optional(f[i], line_no));
        t.rows.push_back(std::move(r));
    }
    return t;
}

inline Table read_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::io_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str());
}

}  // namespace tslab::csv
