#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vulmtl/dataset.hpp"
#include "vulmtl/errors.hpp"

namespace vulmtl {

namespace {

// RFC 4180: quoted fields may contain commas, doubled quotes, and newlines.
// Reads one logical row; returns false at end of input.
bool read_csv_row(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;

  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        int next = in.peek();
        if (next == '"') {
          in.get();
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        field += static_cast<char>(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      // swallow; CRLF ends the row on the following \n
    } else {
      field += static_cast<char>(c);
    }
  }
  if (!any) return false;
  fields.push_back(field);
  return true;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::size_t convert_csv(const std::string& csv_path,
                        const std::string& out_path, const CsvOptions& opt) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot open CSV: " + csv_path);

  std::vector<std::string> header;
  if (!read_csv_row(in, header))
    throw ValidationError("CSV " + csv_path + " is empty");

  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;

  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      throw ValidationError("CSV " + csv_path + ": missing column '" + name +
                            "'");
    return it->second;
  };
  const std::size_t c_code = need(opt.code_col);
  const std::size_t c_cwe = need(opt.cwe_col);
  const std::size_t c_id = need(opt.id_col);
  const std::size_t c_lines = need(opt.lines_col);

  std::vector<Record> records;
  std::vector<std::string> row;
  std::size_t rowno = 1;
  while (read_csv_row(in, row)) {
    ++rowno;
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    const std::size_t needed =
        std::max(std::max(c_code, c_cwe), std::max(c_id, c_lines));
    if (row.size() <= needed)
      throw ValidationError("CSV " + csv_path + " row " +
                            std::to_string(rowno) + ": too few fields");

    Record r;
    r.id = trim(row[c_id]);
    if (r.id.empty()) r.id = "row" + std::to_string(rowno);
    r.code = row[c_code];
    if (trim(r.code).empty()) continue;  // nothing to learn from

    std::string cwe = trim(row[c_cwe]);
    r.cwe = cwe.empty() ? opt.default_cwe : cwe;
    if (r.cwe.compare(0, 4, "CWE-") != 0) r.cwe = "CWE-" + r.cwe;

    // flaw line list like "3,7,12"; floats such as "3.0" appear in the wild
    std::stringstream ls(trim(row[c_lines]));
    std::string item;
    while (std::getline(ls, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        int line = static_cast<int>(std::stod(item));
        if (opt.lines_zero_based) ++line;
        if (line >= 1) r.vuln_lines.insert(line);
      } catch (const std::exception&) {
        throw ValidationError("CSV " + csv_path + " row " +
                              std::to_string(rowno) +
                              ": bad flaw line '" + item + "'");
      }
    }
    records.push_back(std::move(r));
  }

  write_dataset(out_path, records);
  return records.size();
}

}  // namespace vulmtl
