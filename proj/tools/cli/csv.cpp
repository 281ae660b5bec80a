#include "csv.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "trustbench/error.hpp"

namespace trustbench::cli {

namespace {

template <class T>
std::string shortest(T v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

} // namespace

std::string format_number(double v) { return shortest(v); }
std::string format_number(float v) { return shortest(v); }

std::string format_bits(float v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", std::bit_cast<std::uint32_t>(v));
    return buf;
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    for (const auto& h : header) cell(h);
    end_row();
}

CsvWriter& CsvWriter::cell(std::string_view text) {
    if (in_row_++) text_ += ',';
    text_ += text;
    return *this;
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_number(v)); }
CsvWriter& CsvWriter::cell(std::int64_t v) { return cell(std::to_string(v)); }
CsvWriter& CsvWriter::cell(std::uint64_t v) { return cell(std::to_string(v)); }

void CsvWriter::end_row() {
    if (in_row_ != columns_)
        throw Error(ErrorCode::ValidationError,
                    "csv row has " + std::to_string(in_row_) + " cells, expected " + std::to_string(columns_));
    text_ += '\n';
    in_row_ = 0;
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw Error(ErrorCode::ValidationError, "csv has no column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
    CsvTable t;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        std::vector<std::string> cells;
        for (;;) {
            const auto comma = line.find(',');
            cells.emplace_back(line.substr(0, comma));
            if (comma == std::string_view::npos) break;
            line = line.substr(comma + 1);
        }
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size())
                throw Error(ErrorCode::ValidationError, "csv line " + std::to_string(line_no) + " has " +
                                                            std::to_string(cells.size()) + " cells, expected " +
                                                            std::to_string(t.header.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

double parse_number(std::string_view text) {
    if (text == "nan") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc{} || r.ptr != text.data() + text.size())
        throw Error(ErrorCode::ValidationError, "not a number: '" + std::string(text) + "'");
    return v;
}

} // namespace trustbench::cli
