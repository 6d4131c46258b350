#pragma once

// Deterministic CSV artifacts: sorted `# key=value` metadata lines, a column
// header, then rows printed with 17 significant digits so identical inputs
// produce byte-identical files.  The SVG writer is a convenience layer over
// the CSVs with no numeric authority.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace purimode {

struct csv_table {
  std::map<std::string, std::string> meta;  // written sorted, "# key=value"
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;  // each sized like columns
};

// shortest-round-trip-safe fixed formatting (printf %.17g)
std::string format_g17(double v);

// FNV-1a 64-bit content hash (stamps outputs with their producing config)
std::uint64_t fnv1a64(const std::string& bytes);

std::string write_csv_string(const csv_table& t);
void write_csv(const std::string& path, const csv_table& t);
csv_table read_csv(const std::string& path);

// minimal multi-series line plot; series are (name, y values over x)
void write_svg_lines(
    const std::string& path, const std::string& title,
    const std::vector<double>& x,
    const std::vector<std::pair<std::string, std::vector<double>>>& series);

}  // namespace purimode
