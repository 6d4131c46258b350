#include "purimode/csvio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace purimode {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error("csvio: " + msg);
}

}  // namespace

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string write_csv_string(const csv_table& t) {
  std::string out;
  for (const auto& [k, v] : t.meta) {
    require(k.find('\n') == std::string::npos &&
                v.find('\n') == std::string::npos,
            "metadata must be single-line");
    out += "# " + k + "=" + v + "\n";
  }
  require(!t.columns.empty(), "table has no columns");
  for (size_t i = 0; i < t.columns.size(); ++i) {
    if (i) out += ',';
    out += t.columns[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    require(row.size() == t.columns.size(), "row width mismatch");
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_g17(row[i]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const csv_table& t) {
  std::ofstream f(path, std::ios::binary);
  require(bool(f), "cannot open '" + path + "' for writing");
  const std::string s = write_csv_string(t);
  f.write(s.data(), long(s.size()));
  require(bool(f), "write to '" + path + "' failed");
}

csv_table read_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), "cannot open '" + path + "'");
  csv_table t;
  std::string line;
  bool have_header = false;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body.front() == ' ') body.erase(0, 1);
      const size_t eq = body.find('=');
      if (eq != std::string::npos)
        t.meta[body.substr(0, eq)] = body.substr(eq + 1);
      continue;
    }
    std::vector<std::string> cells;
    size_t pos = 0;
    while (true) {
      const size_t c = line.find(',', pos);
      cells.push_back(line.substr(pos, c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (!have_header) {
      t.columns = cells;
      have_header = true;
      continue;
    }
    require(cells.size() == t.columns.size(),
            "row width mismatch in '" + path + "'");
    std::vector<double> row(cells.size());
    for (size_t i = 0; i < cells.size(); ++i) {
      try {
        size_t used = 0;
        row[i] = std::stod(cells[i], &used);
        require(used == cells[i].size(), "trailing characters");
      } catch (const std::exception&) {
        throw std::runtime_error("csvio: bad number '" + cells[i] + "' in '" +
                                 path + "'");
      }
    }
    t.rows.push_back(std::move(row));
  }
  require(have_header, "no header row in '" + path + "'");
  return t;
}

void write_svg_lines(
    const std::string& path, const std::string& title,
    const std::vector<double>& x,
    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  const double width = 920, height = 520;
  const double ml = 70, mr = 30, mt = 40, mb = 50;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (double v : x) {
    if (!std::isfinite(v)) continue;
    if (!any) xmin = xmax = v;
    xmin = std::min(xmin, v);
    xmax = std::max(xmax, v);
    any = true;
  }
  bool anyy = false;
  for (const auto& [name, ys] : series)
    for (double v : ys) {
      if (!std::isfinite(v)) continue;
      if (!anyy) ymin = ymax = v;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
      anyy = true;
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double v) {
    return ml + (v - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double v) {
    return height - mb - (v - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
    << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
    << height << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  // axes
  s << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
    << width - mr << "\" y2=\"" << height - mb
    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
    << "\" y2=\"" << height - mb
    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
  // axis range labels
  auto label = [&](double xx, double yy, const std::string& txt,
                   const char* anchor) {
    s << "<text x=\"" << xx << "\" y=\"" << yy << "\" text-anchor=\"" << anchor
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << txt
      << "</text>\n";
  };
  label(ml, height - mb + 16, format_g17(xmin), "middle");
  label(width - mr, height - mb + 16, format_g17(xmax), "middle");
  label(ml - 6, height - mb, format_g17(ymin), "end");
  label(ml - 6, mt + 4, format_g17(ymax), "end");

  size_t ci = 0;
  for (const auto& [name, ys] : series) {
    const char* color = palette[ci % 6];
    s << "<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
    const size_t n = std::min(x.size(), ys.size());
    for (size_t i = 0; i < n; ++i) {
      if (!std::isfinite(x[i]) || !std::isfinite(ys[i])) continue;
      s << px(x[i]) << ',' << py(ys[i]) << ' ';
    }
    s << "\"/>\n";
    label(width - mr - 4, mt + 16.0 * double(ci + 1), name, "end");
    s << "<line x1=\"" << width - mr - 60 << "\" y1=\""
      << mt + 16.0 * double(ci + 1) - 4 << "\" x2=\"" << width - mr - 44
      << "\" y2=\"" << mt + 16.0 * double(ci + 1) - 4 << "\" stroke=\""
      << color << "\" stroke-width=\"2\"/>\n";
    ++ci;
  }
  s << "</svg>\n";

  std::ofstream f(path, std::ios::binary);
  require(bool(f), "cannot open '" + path + "' for writing");
  const std::string str = s.str();
  f.write(str.data(), long(str.size()));
  require(bool(f), "write to '" + path + "' failed");
}

}  // namespace purimode
