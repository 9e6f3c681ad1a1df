#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "maxval/errors.hpp"

namespace maxval::cli {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double(const std::string& field, std::size_t line_no) {
  try {
    std::size_t consumed = 0;
    const double v = std::stod(field, &consumed);
    if (consumed != field.size()) throw std::invalid_argument("trailing characters");
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "line " << line_no << ": non-finite value '" << field << "'";
      throw ParseError(msg.str());
    }
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    std::ostringstream msg;
    msg << "line " << line_no << ": cannot parse '" << field << "' as a number";
    throw ParseError(msg.str());
  }
}

int parse_int(const std::string& field, std::size_t line_no) {
  const double v = parse_double(field, line_no);
  const int i = static_cast<int>(std::llround(v));
  if (std::abs(v - i) > 1e-9) {
    std::ostringstream msg;
    msg << "line " << line_no << ": expected an integer, got '" << field << "'";
    throw ParseError(msg.str());
  }
  return i;
}

// Header must be x1..xd followed by the given tail columns; returns d.
std::size_t check_header(const std::vector<std::string>& header,
                         const std::vector<std::string>& tail) {
  if (header.size() <= tail.size()) {
    throw ParseError("line 1: header needs at least one covariate column");
  }
  const std::size_t d = header.size() - tail.size();
  for (std::size_t i = 0; i < d; ++i) {
    std::ostringstream want;
    want << "x" << (i + 1);
    if (header[i] != want.str()) {
      std::ostringstream msg;
      msg << "line 1: expected column '" << want.str() << "', found '" << header[i] << "'";
      throw ParseError(msg.str());
    }
  }
  for (std::size_t i = 0; i < tail.size(); ++i) {
    if (header[d + i] != tail[i]) {
      std::ostringstream msg;
      msg << "line 1: expected column '" << tail[i] << "', found '" << header[d + i] << "'";
      throw ParseError(msg.str());
    }
  }
  return d;
}

std::vector<std::string> read_row(std::istream& in, std::size_t& line_no, bool& eof) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    return split(line);
  }
  eof = true;
  return {};
}

}  // namespace

Dataset ingest_csv_policy(std::istream& in) {
  std::size_t line_no = 0;
  bool eof = false;
  const std::vector<std::string> header = read_row(in, line_no, eof);
  if (eof) throw ParseError("empty file: missing header row");
  const std::size_t d = check_header(header, {"a", "y"});

  Dataset data;
  int max_action = 0;
  while (true) {
    const std::vector<std::string> row = read_row(in, line_no, eof);
    if (eof) break;
    if (row.size() != d + 2) {
      std::ostringstream msg;
      msg << "line " << line_no << ": expected " << (d + 2) << " fields, found "
          << row.size();
      throw ParseError(msg.str());
    }
    Observation z;
    z.x.resize(d);
    for (std::size_t i = 0; i < d; ++i) z.x[i] = parse_double(row[i], line_no);
    z.a = parse_int(row[d], line_no);
    z.y = parse_double(row[d + 1], line_no);
    if (z.a < 1) {
      std::ostringstream msg;
      msg << "line " << line_no << ": action label " << z.a << " must be >= 1";
      throw SchemaError(msg.str());
    }
    max_action = std::max(max_action, z.a);
    data.rows.push_back(std::move(z));
  }
  if (data.rows.empty()) throw ParseError("no data rows");
  data.n_actions = std::max(max_action, 2);
  return data;
}

IvDataset ingest_csv_iv(std::istream& in) {
  std::size_t line_no = 0;
  bool eof = false;
  const std::vector<std::string> header = read_row(in, line_no, eof);
  if (eof) throw ParseError("empty file: missing header row");
  const std::size_t d = check_header(header, {"a", "v", "y"});

  IvDataset data;
  while (true) {
    const std::vector<std::string> row = read_row(in, line_no, eof);
    if (eof) break;
    if (row.size() != d + 3) {
      std::ostringstream msg;
      msg << "line " << line_no << ": expected " << (d + 3) << " fields, found "
          << row.size();
      throw ParseError(msg.str());
    }
    IvObservation z;
    z.x.resize(d);
    for (std::size_t i = 0; i < d; ++i) z.x[i] = parse_double(row[i], line_no);
    z.a = parse_int(row[d], line_no);
    z.v = parse_int(row[d + 1], line_no);
    z.y = parse_int(row[d + 2], line_no);
    const bool binary = (z.a == 0 || z.a == 1) && (z.v == 0 || z.v == 1) &&
                        (z.y == 0 || z.y == 1);
    if (!binary) {
      std::ostringstream msg;
      msg << "line " << line_no << ": a, v, y must all be 0 or 1";
      throw SchemaError(msg.str());
    }
    data.rows.push_back(std::move(z));
  }
  if (data.rows.empty()) throw ParseError("no data rows");
  return data;
}

Dataset ingest_csv_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file: " + path);
  return ingest_csv_policy(in);
}

IvDataset ingest_csv_iv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open input file: " + path);
  return ingest_csv_iv(in);
}

namespace {

void write_number(std::ostream& out, double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  out << s.str();
}

}  // namespace

void write_csv(const Dataset& data, std::ostream& out) {
  const std::size_t d = data.rows.empty() ? 1 : data.rows.front().x.size();
  for (std::size_t i = 0; i < d; ++i) out << "x" << (i + 1) << ",";
  out << "a,y\n";
  for (const Observation& z : data.rows) {
    for (double x : z.x) {
      write_number(out, x);
      out << ",";
    }
    out << z.a << ",";
    write_number(out, z.y);
    out << "\n";
  }
}

void write_csv(const IvDataset& data, std::ostream& out) {
  const std::size_t d = data.rows.empty() ? 1 : data.rows.front().x.size();
  for (std::size_t i = 0; i < d; ++i) out << "x" << (i + 1) << ",";
  out << "a,v,y\n";
  for (const IvObservation& z : data.rows) {
    for (double x : z.x) {
      write_number(out, x);
      out << ",";
    }
    out << z.a << "," << z.v << "," << z.y << "\n";
  }
}

}  // namespace maxval::cli
