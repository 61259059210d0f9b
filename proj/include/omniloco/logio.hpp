#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "omniloco/common.hpp"

namespace omniloco::logio {

// Shortest-round-trip formatting; the same double always prints the same
// bytes, which is what the byte-for-byte reproducibility checks compare.
std::string fmt_real(Real x);

// Tab-separated table with "# key<TAB>value" metadata lines, then a header
// row, then numeric rows.
class TableWriter {
 public:
  TableWriter(std::ostream& os, const std::string& kind,
              const std::vector<std::pair<std::string, std::string>>& meta,
              const std::vector<std::string>& columns);
  void row(std::span<const Real> values);

 private:
  std::ostream* os_;
  std::size_t width_;
};

struct Table {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<Real>> rows;

  int col(const std::string& name) const;  // -1 when absent
  std::vector<Real> column(const std::string& name) const;
};

Table read_table(const std::string& path);
Table parse_table(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace omniloco::logio
