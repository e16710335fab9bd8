#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ethseq {

// Minimal RFC-4180-style reader: comma delimiter, optional double-quoted
// fields, CRLF tolerated. Rows are streamed; memory stays bounded by the
// longest single row.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    // Reads the header row. Throws DataError if the stream is empty.
    void read_header();

    const std::vector<std::string>& header() const { return header_; }

    // Column index by name, -1 if absent.
    int column(std::string_view name) const;

    // Column index by name, DataError naming the column if absent.
    int require_column(std::string_view name) const;

    // Next data row; false at EOF. Fields are cleared and refilled.
    bool next(std::vector<std::string>& fields);

    // 1-based line number of the row last returned.
    std::size_t line_number() const { return line_; }

private:
    bool read_record(std::vector<std::string>& fields);

    std::istream& in_;
    std::vector<std::string> header_;
    std::unordered_map<std::string, int> index_;
    std::size_t line_ = 0;
};

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    void write_row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
};

}  // namespace ethseq
