#include "ethseq/csv.hpp"

#include <istream>
#include <ostream>

#include "ethseq/common.hpp"

namespace ethseq {

void CsvReader::read_header() {
    if (!read_record(header_)) throw DataError("csv: empty stream, header row required");
    index_.clear();
    for (std::size_t i = 0; i < header_.size(); ++i) {
        index_.emplace(header_[i], static_cast<int>(i));
    }
}

int CsvReader::column(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? -1 : it->second;
}

int CsvReader::require_column(std::string_view name) const {
    int idx = column(name);
    if (idx < 0) throw DataError("csv: missing required column '" + std::string(name) + "'");
    return idx;
}

bool CsvReader::next(std::vector<std::string>& fields) { return read_record(fields); }

bool CsvReader::read_record(std::vector<std::string>& fields) {
    fields.clear();
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::string field;
    bool in_quotes = false;
    std::size_t i = 0;
    while (true) {
        if (i >= line.size()) {
            if (in_quotes) {
                // Quoted field spans a newline; pull the next physical line.
                if (!std::getline(in_, line)) break;
                ++line_;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                field += '\n';
                i = 0;
                continue;
            }
            break;
        }
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty()) {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
        ++i;
    }
    fields.push_back(std::move(field));
    return true;
}

void CsvWriter::write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        const std::string& f = fields[i];
        if (f.find_first_of(",\"\n") != std::string::npos) {
            out_ << '"';
            for (char c : f) {
                if (c == '"') out_ << '"';
                out_ << c;
            }
            out_ << '"';
        } else {
            out_ << f;
        }
    }
    out_ << '\n';
}

}  // namespace ethseq
