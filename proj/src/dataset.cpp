#include "natmed/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace natmed {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, const std::string& col, std::size_t row) {
  const std::string s = trim(raw);
  if (s.empty()) {
    throw DataError("missing value in column '" + col + "' at data row " +
                    std::to_string(row));
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("non-numeric cell '" + s + "' in column '" + col +
                    "' at data row " + std::to_string(row));
  }
  if (!std::isfinite(v)) {
    throw DataError("non-finite value in column '" + col + "' at data row " +
                    std::to_string(row));
  }
  return v;
}

int parse_binary(const std::string& raw, const std::string& col, std::size_t row) {
  const double v = parse_cell(raw, col, row);
  if (v != 0.0 && v != 1.0) {
    throw DataError("column '" + col + "' must be 0 or 1 but is " +
                    std::to_string(v) + " at data row " + std::to_string(row));
  }
  return static_cast<int>(v);
}

std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void Dataset::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.w.size() != w_names.size() || r.m.size() != m_names.size()) {
      throw DataError("record " + std::to_string(i + 1) +
                      " has inconsistent covariate/mediator arity");
    }
    if ((r.a != 0 && r.a != 1) || (r.z != 0 && r.z != 1)) {
      throw DataError("record " + std::to_string(i + 1) +
                      " has A or Z outside {0,1}");
    }
    for (double v : r.w)
      if (!std::isfinite(v))
        throw DataError("non-finite W in record " + std::to_string(i + 1));
    for (double v : r.m)
      if (!std::isfinite(v))
        throw DataError("non-finite M in record " + std::to_string(i + 1));
    if (!std::isfinite(r.y))
      throw DataError("non-finite Y in record " + std::to_string(i + 1));
    if (y_kind == YKind::binary && r.y != 0.0 && r.y != 1.0) {
      throw DataError("binary outcome is " + std::to_string(r.y) +
                      " in record " + std::to_string(i + 1));
    }
  }
}

Dataset load_csv(const std::string& path, const ColumnSpec& spec) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string header_line;
  if (!std::getline(in, header_line)) throw DataError("empty file: " + path);
  const auto header = split_csv_line(header_line);

  std::map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) col_index[trim(header[i])] = i;

  auto require = [&](const std::string& name) -> std::size_t {
    auto it = col_index.find(name);
    if (it == col_index.end())
      throw DataError("missing column '" + name + "' in " + path);
    return it->second;
  };

  std::vector<std::size_t> w_idx, m_idx;
  for (const auto& n : spec.w) w_idx.push_back(require(n));
  for (const auto& n : spec.m) m_idx.push_back(require(n));
  if (spec.m.empty()) throw ConfigError("column spec needs at least one mediator column");
  const std::size_t a_idx = require(spec.a);
  const std::size_t z_idx = require(spec.z);
  const std::size_t y_idx = require(spec.y);

  Dataset d;
  d.w_names = spec.w;
  d.m_names = spec.m;
  d.y_kind = spec.y_kind;

  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    ++row;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("data row " + std::to_string(row) + " has " +
                      std::to_string(cells.size()) + " cells, header has " +
                      std::to_string(header.size()));
    }
    ObservedRecord r;
    r.w.reserve(w_idx.size());
    r.m.reserve(m_idx.size());
    for (std::size_t k = 0; k < w_idx.size(); ++k)
      r.w.push_back(parse_cell(cells[w_idx[k]], spec.w[k], row));
    for (std::size_t k = 0; k < m_idx.size(); ++k)
      r.m.push_back(parse_cell(cells[m_idx[k]], spec.m[k], row));
    r.a = parse_binary(cells[a_idx], spec.a, row);
    r.z = parse_binary(cells[z_idx], spec.z, row);
    r.y = parse_cell(cells[y_idx], spec.y, row);
    d.records.push_back(std::move(r));
  }
  d.validate();
  return d;
}

void write_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  for (std::size_t i = 0; i < d.w_names.size(); ++i) out << d.w_names[i] << ',';
  out << "A,Z";
  for (const auto& n : d.m_names) out << ',' << n;
  out << ",Y\n";
  for (const auto& r : d.records) {
    for (double v : r.w) out << format_double(v) << ',';
    out << r.a << ',' << r.z;
    for (double v : r.m) out << ',' << format_double(v);
    out << ',' << format_double(r.y) << '\n';
  }
}

namespace {

// stratum key: covariate values joined; doubles formatted shortest
std::string stratum_key(const ObservedRecord& r, const std::vector<std::size_t>& idx,
                        const std::vector<std::string>& names) {
  std::string key;
  for (std::size_t k : idx) {
    if (!key.empty()) key += ",";
    key += names[k] + "=" + format_double(r.w[k]);
  }
  return key;
}

}  // namespace

DiagnosticsReport diagnose(const Dataset& d,
                           const std::vector<std::string>& strata_names) {
  if (d.records.empty()) throw DataError("diagnose: empty dataset");
  DiagnosticsReport rep;
  rep.n = d.size();

  auto arm_rates = [](auto begin, auto end) {
    std::size_t n1 = 0, n0 = 0, z1 = 0, z0 = 0;
    for (auto it = begin; it != end; ++it) {
      const ObservedRecord& r = **it;
      if (r.a == 1) {
        ++n1;
        z1 += r.z;
      } else {
        ++n0;
        z0 += r.z;
      }
    }
    return std::tuple{n1, n0, n1 ? double(z1) / n1 : 0.0, n0 ? double(z0) / n0 : 0.0};
  };

  std::vector<const ObservedRecord*> all;
  all.reserve(d.size());
  for (const auto& r : d.records) all.push_back(&r);
  auto [n1, n0, p1, p0] = arm_rates(all.begin(), all.end());
  rep.pz_given_a1 = p1;
  rep.pz_given_a0 = p0;
  rep.monotonicity_flag = (n1 > 0 && n0 > 0 && p1 < p0);
  if (n1 == 0 || n0 == 0) rep.warnings.push_back("one treatment arm is empty");

  if (!strata_names.empty()) {
    std::vector<std::size_t> idx;
    for (const auto& name : strata_names) {
      auto it = std::find(d.w_names.begin(), d.w_names.end(), name);
      if (it == d.w_names.end())
        throw DataError("diagnose: unknown stratum covariate '" + name + "'");
      idx.push_back(static_cast<std::size_t>(it - d.w_names.begin()));
    }
    std::map<std::string, std::vector<const ObservedRecord*>> groups;
    for (const auto& r : d.records)
      groups[stratum_key(r, idx, d.w_names)].push_back(&r);
    for (auto& [key, recs] : groups) {
      StratumDiagnostics s;
      s.label = key;
      auto [sn1, sn0, sp1, sp0] = arm_rates(recs.begin(), recs.end());
      s.n_a1 = sn1;
      s.n_a0 = sn0;
      s.pz_a1 = sp1;
      s.pz_a0 = sp0;
      if (sn1 == 0 || sn0 == 0) {
        s.skipped = true;
        rep.warnings.push_back("stratum '" + key + "' skipped: empty arm");
      } else {
        s.monotonicity_flag = sp1 < sp0;
      }
      rep.strata.push_back(std::move(s));
    }
  }
  return rep;
}

}  // namespace natmed
