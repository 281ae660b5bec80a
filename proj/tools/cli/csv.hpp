// csv.hpp - CSV writing and reading with shortest round-trip numbers
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace trustbench::cli {

/// Shortest decimal text that parses back to exactly v. Non-finite values
/// print as nan, inf, -inf.
std::string format_number(double v);
std::string format_number(float v);

/// 0x-prefixed 8-digit hex of a binary32 bit pattern.
std::string format_bits(float v);

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header);

    CsvWriter& cell(std::string_view text);
    CsvWriter& cell(double v);
    CsvWriter& cell(std::int64_t v);
    CsvWriter& cell(std::uint64_t v);
    CsvWriter& cell(int v) { return cell(static_cast<std::int64_t>(v)); }
    void end_row();

    const std::string& text() const { return text_; }

private:
    std::size_t columns_;
    std::size_t in_row_ = 0;
    std::string text_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column position; ValidationError when absent.
    std::size_t column(std::string_view name) const;
};

/// Plain comma-separated text without quoting. ValidationError on ragged rows.
CsvTable parse_csv(std::string_view text);
double parse_number(std::string_view text);

} // namespace trustbench::cli
