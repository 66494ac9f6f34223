#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "lal/errors.hpp"

namespace lal {

// Shortest round-trip decimal representation; locale independent, so reruns
// of a command produce byte-identical files.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

// Minimal CSV emitter: one '#'-prefixed metadata line, a header row, then
// comma-separated data rows with '.' decimals.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::string& metadata) : out_(path) {
        if (!out_) throw ConfigError("cannot open output file: " + path);
        out_ << "# " << metadata << "\n";
    }

    void header(const std::vector<std::string>& cols) { line(cols); }

    void row(const std::vector<std::string>& cells) { line(cells); }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

  private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    std::ofstream out_;
};

}  // namespace lal
