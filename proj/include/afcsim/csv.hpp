#pragma once

// Plain-text serialization: profile and trace CSV files and flat key=value
// reports. Numbers are written in shortest round-trip form with a '.'
// decimal point, independent of the process locale.

#include <afcsim/errors.hpp>
#include <afcsim/spectral_profile.hpp>
#include <afcsim/trace.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace afcsim::io {

inline std::string format_number(double v)
{
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) {
        throw std::runtime_error("format_number: conversion failed");
    }
    return std::string(buf, end);
}

inline std::optional<double> parse_number(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        return std::nullopt;
    }
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline void write_profile_csv(std::ostream& os, const SpectralProfile& p)
{
    os << "detuning_mhz,od\n";
    for (std::size_t i = 0; i < p.grid.size; ++i) {
        os << format_number(p.grid[i]) << ',' << format_number(p.od[i]) << '\n';
    }
}

inline void write_trace_csv(std::ostream& os, const Trace& t, bool with_field = true)
{
    const bool field = with_field && t.has_field();
    os << (field ? "time_us,intensity,re,im\n" : "time_us,intensity\n");
    for (std::size_t i = 0; i < t.size(); ++i) {
        os << format_number(t.time(i)) << ',' << format_number(t.intensity[i]);
        if (field) {
            os << ',' << format_number(t.field[i].real()) << ',' << format_number(t.field[i].imag());
        }
        os << '\n';
    }
}

/// Generic numeric CSV: header names plus rows of numbers.
struct Table
{
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    int column(std::string_view name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) {
                return static_cast<int>(i);
            }
        }
        return -1;
    }
};

inline void write_table(std::ostream& os, const Table& t)
{
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        os << (i ? "," : "") << t.columns[i];
    }
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            os << (i ? "," : "") << format_number(row[i]);
        }
        os << '\n';
    }
}

inline Table read_table(std::istream& is, const std::string& source = "<csv>")
{
    Table t;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (t.columns.empty()) {
            for (auto c : split(line, ',')) {
                t.columns.emplace_back(c);
            }
            continue;
        }
        auto cells = split(line, ',');
        if (cells.size() != t.columns.size()) {
            throw ConfigError(source + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.columns.size()) + " columns",
                              lineno);
        }
        std::vector<double> row;
        for (auto c : cells) {
            auto v = parse_number(c);
            if (!v) {
                throw ConfigError(source + ":" + std::to_string(lineno) + ": not a number: '" +
                                      std::string(c) + "'",
                                  lineno);
            }
            row.push_back(*v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.columns.empty()) {
        throw ConfigError(source + ": missing header line");
    }
    return t;
}

inline SpectralProfile read_profile_csv(std::istream& is, const std::string& source = "<csv>")
{
    const Table t = read_table(is, source);
    if (t.columns != std::vector<std::string>{"detuning_mhz", "od"}) {
        throw ConfigError(source + ": header must be 'detuning_mhz,od'", 1);
    }
    if (t.rows.size() < 2) {
        throw ConfigError(source + ": profile needs at least two rows");
    }
    SpectralProfile p;
    p.grid.start_mhz = t.rows.front()[0];
    p.grid.size = t.rows.size();
    p.grid.step_mhz = (t.rows.back()[0] - t.rows.front()[0]) / static_cast<double>(t.rows.size() - 1);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (std::abs(t.rows[i][0] - p.grid[i]) > 1e-6 * std::max(1.0, p.grid.step_mhz)) {
            throw ConfigError(source + ": detuning grid is not uniform", static_cast<int>(i) + 2);
        }
        p.od.push_back(t.rows[i][1]);
    }
    p.validate();
    return p;
}

inline Trace read_trace_csv(std::istream& is, const std::string& source = "<csv>")
{
    const Table t = read_table(is, source);
    const bool field = t.columns == std::vector<std::string>{"time_us", "intensity", "re", "im"};
    if (!field && t.columns != std::vector<std::string>{"time_us", "intensity"}) {
        throw ConfigError(source + ": header must be 'time_us,intensity[,re,im]'", 1);
    }
    if (t.rows.size() < 2) {
        throw ConfigError(source + ": trace needs at least two rows");
    }
    Trace tr;
    tr.t0_us = t.rows.front()[0];
    tr.dt_us = (t.rows.back()[0] - t.rows.front()[0]) / static_cast<double>(t.rows.size() - 1);
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        if (std::abs(t.rows[i][0] - tr.time(i)) > 1e-6 * tr.dt_us) {
            throw ConfigError(source + ": time grid is not uniform", static_cast<int>(i) + 2);
        }
        tr.intensity.push_back(t.rows[i][1]);
        if (field) {
            tr.field.emplace_back(t.rows[i][2], t.rows[i][3]);
        }
    }
    tr.validate();
    return tr;
}

/// Ordered flat key=value report.
class Report
{
public:
    void set(const std::string& key, double v) { put(key, format_number(v)); }
    void set(const std::string& key, const std::string& v) { put(key, v); }
    void set(const std::string& key, const char* v) { put(key, v); }
    void set(const std::string& key, bool v) { put(key, v ? "true" : "false"); }
    void set(const std::string& key, int v) { put(key, std::to_string(v)); }
    void set(const std::string& key, std::size_t v) { put(key, std::to_string(v)); }

    const std::vector<std::pair<std::string, std::string>>& entries() const { return m_entries; }

    std::optional<std::string> get(const std::string& key) const
    {
        for (const auto& [k, v] : m_entries) {
            if (k == key) {
                return v;
            }
        }
        return std::nullopt;
    }

    void write(std::ostream& os) const
    {
        for (const auto& [k, v] : m_entries) {
            os << k << '=' << v << '\n';
        }
    }

    std::string str() const
    {
        std::ostringstream os;
        write(os);
        return os.str();
    }

    static Report parse(std::istream& is)
    {
        Report r;
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (line.empty() || eq == std::string::npos) {
                continue;
            }
            r.put(line.substr(0, eq), line.substr(eq + 1));
        }
        return r;
    }

private:
    void put(const std::string& key, std::string v)
    {
        for (auto& [k, old] : m_entries) {
            if (k == key) {
                old = std::move(v);
                return;
            }
        }
        m_entries.emplace_back(key, std::move(v));
    }

    std::vector<std::pair<std::string, std::string>> m_entries;
};

} // namespace afcsim::io
