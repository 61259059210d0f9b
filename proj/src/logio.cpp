#include "omniloco/logio.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace omniloco::logio {

std::string fmt_real(Real x) {
  char buf[64];
  // %.17g round-trips every double; trim to the shortest form that still
  // parses back exactly so the logs stay readable.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  return buf;
}

TableWriter::TableWriter(
    std::ostream& os, const std::string& kind,
    const std::vector<std::pair<std::string, std::string>>& meta,
    const std::vector<std::string>& columns)
    : os_(&os), width_(columns.size()) {
  OL_REQUIRE(!columns.empty(), "log table: no columns");
  os << "# omniloco-" << kind << " v1\n";
  for (const auto& [k, v] : meta) os << "# " << k << "\t" << v << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i)
    os << (i ? "\t" : "") << columns[i];
  os << "\n";
}

void TableWriter::row(std::span<const Real> values) {
  OL_REQUIRE(values.size() == width_, "log table: row width");
  for (std::size_t i = 0; i < values.size(); ++i)
    (*os_) << (i ? "\t" : "") << fmt_real(values[i]);
  (*os_) << "\n";
  os_->flush();
}

int Table::col(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<Real> Table::column(const std::string& name) const {
  const int i = col(name);
  OL_REQUIRE(i >= 0, "log table: no column \"" + name + "\"");
  std::vector<Real> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[static_cast<std::size_t>(i)]);
  return out;
}

Table parse_table(const std::string& text) {
  Table t;
  std::istringstream is(text);
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      if (!body.empty() && body[0] == ' ') body.erase(0, 1);
      const auto tab = body.find('\t');
      if (tab == std::string::npos) {
        // banner line: "omniloco-<kind> v<N>"
        if (t.kind.empty()) {
          std::string k = body;
          if (k.rfind("omniloco-", 0) == 0) k.erase(0, 9);
          const auto sp = k.find(' ');
          if (sp != std::string::npos) k.erase(sp);
          t.kind = k;
        }
      } else {
        t.meta[body.substr(0, tab)] = body.substr(tab + 1);
      }
      continue;
    }
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      cells.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (!have_header) {
      t.columns = cells;
      have_header = true;
      continue;
    }
    OL_REQUIRE(cells.size() == t.columns.size(), "log table: ragged row");
    std::vector<Real> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      char* end = nullptr;
      row.push_back(std::strtod(c.c_str(), &end));
      OL_REQUIRE(end && *end == '\0', "log table: bad number \"" + c + "\"");
    }
    t.rows.push_back(std::move(row));
  }
  OL_REQUIRE(have_header, "log table: missing header");
  return t;
}

Table read_table(const std::string& path) {
  return parse_table(read_text_file(path));
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot write " + path);
  os << content;
}

}  // namespace omniloco::logio
