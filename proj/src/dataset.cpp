#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "errors.hpp"
#include "util.hpp"

namespace wmdl {

const SourceData& MultiSourceData::source(int id) const {
  const int idx = source_index(id);
  if (idx < 0) throw config_error("unknown source id " + std::to_string(id));
  return sources[idx];
}

int MultiSourceData::source_index(int id) const {
  for (int i = 0; i < n_sources(); ++i) {
    if (sources[i].id == id) return i;
  }
  return -1;
}

int MultiSourceData::total_rows() const {
  int n = 0;
  for (const auto& s : sources) n += s.rows();
  return n;
}

int MultiSourceData::outcome_rows() const {
  int n = 0;
  for (const auto& s : sources) {
    if (s.has_outcomes) n += s.rows();
  }
  return n;
}

bool MultiSourceData::transfer_mode() const {
  const int idx = source_index(target_source);
  return idx >= 0 && !sources[idx].has_outcomes;
}

void MultiSourceData::validate() const {
  if (sources.empty()) throw config_error("dataset has no sources");
  if (d_x <= 0) throw config_error("dataset has no shared covariates");
  for (int i = 0; i < n_sources(); ++i) {
    const auto& s = sources[i];
    if (s.id < 0) throw config_error("source ids must be non-negative");
    if (i > 0 && sources[i - 1].id >= s.id)
      throw config_error("source ids must be unique and ascending");
    const std::string tag = "source " + std::to_string(s.id);
    if (s.rows() == 0) throw config_error(tag + ": no rows");
    if (s.x.cols() != d_x)
      throw config_error(tag + ": has " + std::to_string(s.x.cols()) +
                         " shared covariates, dataset declares " + std::to_string(d_x));
    if (s.z.rows() != 0 && s.z.rows() != s.x.rows())
      throw config_error(tag + ": z row count does not match x");
    if (!s.x.allFinite() || (s.z.size() > 0 && !s.z.allFinite()))
      throw config_error(tag + ": non-finite covariate value");
    if (!s.has_outcomes) {
      if (s.id != target_source)
        throw config_error(tag + ": rows lack outcomes but the source is not the declared target");
      if (!s.y.empty() || !s.a.empty())
        throw config_error(tag + ": covariates-only source carries outcome columns");
      continue;
    }
    if (static_cast<int>(s.y.size()) != s.rows() || static_cast<int>(s.a.size()) != s.rows())
      throw config_error(tag + ": y/a length does not match row count");
    int n_pos = 0, n_neg = 0;
    for (int r = 0; r < s.rows(); ++r) {
      if (!std::isfinite(s.y[r]))
        throw config_error(tag + " row " + std::to_string(r) + ": non-finite outcome");
      if (s.a[r] == 1) {
        ++n_pos;
      } else if (s.a[r] == -1) {
        ++n_neg;
      } else {
        throw config_error(tag + " row " + std::to_string(r) + ": treatment must be +1 or -1");
      }
    }
    if (n_pos == 0 || n_neg == 0)
      throw config_error(tag + ": needs at least one treated and one control row");
  }
  if (source_index(target_source) < 0)
    throw config_error("target source " + std::to_string(target_source) + " not present");
}

MultiSourceData restrict_to_source(const MultiSourceData& data, int source_id) {
  const auto& s = data.source(source_id);
  if (!s.has_outcomes)
    throw config_error("cannot restrict to covariates-only source " + std::to_string(source_id));
  MultiSourceData out;
  out.sources.push_back(s);
  out.d_x = data.d_x;
  out.target_source = source_id;
  return out;
}

FoldAssignment split_folds(const MultiSourceData& data, int n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw config_error("cross-fitting needs at least 2 folds");
  FoldAssignment fa;
  fa.n_folds = n_folds;
  fa.fold_of.resize(data.sources.size());
  for (size_t i = 0; i < data.sources.size(); ++i) {
    const auto& s = data.sources[i];
    const int n = s.rows();
    if (n < n_folds)
      throw config_error("source " + std::to_string(s.id) + " has " + std::to_string(n) +
                         " rows, fewer than " + std::to_string(n_folds) + " folds");
    std::vector<int>& labels = fa.fold_of[i];
    labels.reserve(n);
    const int base = n / n_folds, rem = n % n_folds;
    for (int f = 0; f < n_folds; ++f) {
      labels.insert(labels.end(), base + (f < rem ? 1 : 0), f);
    }
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(s.id)));
    std::shuffle(labels.begin(), labels.end(), rng);
  }
  return fa;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::optional<double> parse_double(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

// Column index suffix for auto-detection: "x12" -> 12 for prefix 'x'.
std::optional<int> prefixed_index(const std::string& name, char prefix) {
  if (name.size() < 2 || name[0] != prefix) return std::nullopt;
  int idx = 0;
  auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
  if (ec != std::errc() || ptr != name.data() + name.size() || idx <= 0) return std::nullopt;
  return idx;
}

int column_of(const std::vector<std::string>& header, const std::string& name,
              const std::string& role) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw config_error("csv is missing the " + role + " column '" + name + "'");
  return static_cast<int>(it - header.begin());
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct RawRow {
  std::optional<double> y;
  std::optional<int> a;
  std::vector<double> x;
  std::vector<std::optional<double>> z;  // aligned with candidate z columns
  int line_no = 0;
};

}  // namespace

MultiSourceData load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw config_error("'" + path + "' is empty");
  const std::vector<std::string> header = split_line(line);

  const int source_col = column_of(header, schema.source_col, "source");
  const int y_col = column_of(header, schema.y_col, "outcome");
  const int a_col = column_of(header, schema.a_col, "treatment");

  // Shared covariate columns: explicit list, or x{j} headers ordered by j.
  std::vector<int> x_idx;
  if (!schema.x_cols.empty()) {
    for (const auto& name : schema.x_cols) x_idx.push_back(column_of(header, name, "covariate"));
  } else {
    std::vector<std::pair<int, int>> found;  // (j, column)
    for (int c = 0; c < static_cast<int>(header.size()); ++c) {
      if (auto j = prefixed_index(header[c], 'x')) found.emplace_back(*j, c);
    }
    std::sort(found.begin(), found.end());
    for (auto& [j, c] : found) x_idx.push_back(c);
  }
  if (x_idx.empty()) throw config_error("csv has no shared covariate columns");
  const int d_x = static_cast<int>(x_idx.size());

  // Candidate source-specific columns, ordered by suffix.
  std::vector<std::pair<int, int>> z_found;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (auto j = prefixed_index(header[c], 'z')) z_found.emplace_back(*j, c);
  }
  std::sort(z_found.begin(), z_found.end());
  std::vector<int> z_idx;
  std::vector<std::string> z_names;
  for (auto& [j, c] : z_found) {
    z_idx.push_back(c);
    z_names.push_back(header[c]);
  }

  std::map<int, std::vector<RawRow>> by_source;
  const int n_cells = static_cast<int>(header.size());
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    const std::string where = "line " + std::to_string(line_no);
    if (static_cast<int>(cells.size()) != n_cells)
      throw config_error(where + ": expected " + std::to_string(n_cells) + " cells, got " +
                         std::to_string(cells.size()));

    const auto sv = parse_double(cells[source_col]);
    if (!sv || *sv != std::floor(*sv))
      throw config_error(where + ": source must be an integer, got '" + cells[source_col] + "'");
    const int sid = static_cast<int>(*sv);

    RawRow row;
    row.line_no = line_no;
    const std::string& y_cell = cells[y_col];
    const std::string& a_cell = cells[a_col];
    if (y_cell.empty() != a_cell.empty())
      throw config_error(where + ": y and a must be both present or both empty");
    if (!y_cell.empty()) {
      const auto yv = parse_double(y_cell);
      if (!yv) throw config_error(where + ": cannot parse y '" + y_cell + "'");
      const auto av = parse_double(a_cell);
      if (!av || (*av != -1.0 && *av != 0.0 && *av != 1.0))
        throw config_error(where + ": treatment must be in {-1,0,1}, got '" + a_cell + "'");
      row.y = *yv;
      row.a = (*av == 1.0) ? 1 : -1;  // {0,1} input: 0 is control
    }
    row.x.resize(d_x);
    for (int j = 0; j < d_x; ++j) {
      const auto xv = parse_double(cells[x_idx[j]]);
      if (!xv)
        throw config_error(where + ": cannot parse " + header[x_idx[j]] + " '" +
                           cells[x_idx[j]] + "'");
      row.x[j] = *xv;
    }
    row.z.resize(z_idx.size());
    for (size_t j = 0; j < z_idx.size(); ++j) row.z[j] = parse_double(cells[z_idx[j]]);
    by_source[sid].push_back(std::move(row));
  }
  if (by_source.empty()) throw config_error("'" + path + "' has a header but no data rows");

  MultiSourceData data;
  data.d_x = d_x;
  data.target_source = schema.target_source;
  for (auto& [sid, rows] : by_source) {
    SourceData s;
    s.id = sid;
    const int n = static_cast<int>(rows.size());
    const std::string tag = "source " + std::to_string(sid);

    // Which z columns belong to this source: declared, or those it fills.
    std::vector<int> mine;  // positions into z_idx/z_names
    if (auto it = schema.z_cols.find(sid); it != schema.z_cols.end()) {
      for (const auto& name : it->second) {
        auto pos = std::find(z_names.begin(), z_names.end(), name);
        if (pos == z_names.end())
          throw config_error(tag + ": declared column '" + name + "' not in csv header");
        mine.push_back(static_cast<int>(pos - z_names.begin()));
      }
    } else {
      for (size_t j = 0; j < z_names.size(); ++j) {
        const bool any = std::any_of(rows.begin(), rows.end(),
                                     [&](const RawRow& r) { return r.z[j].has_value(); });
        if (any) mine.push_back(static_cast<int>(j));
      }
    }

    s.has_outcomes = std::any_of(rows.begin(), rows.end(),
                                 [](const RawRow& r) { return r.y.has_value(); });
    s.x.resize(n, d_x);
    s.z.resize(n, static_cast<int>(mine.size()));
    if (s.has_outcomes) {
      s.y.resize(n);
      s.a.resize(n);
    }
    for (int r = 0; r < n; ++r) {
      const RawRow& row = rows[r];
      const std::string where = "line " + std::to_string(row.line_no);
      if (s.has_outcomes != row.y.has_value())
        throw config_error(where + ": " + tag + " mixes outcome rows with covariates-only rows");
      if (s.has_outcomes) {
        s.y[r] = *row.y;
        s.a[r] = *row.a;
      }
      for (int j = 0; j < d_x; ++j) s.x(r, j) = row.x[j];
      for (size_t j = 0; j < mine.size(); ++j) {
        if (!row.z[mine[j]])
          throw config_error(where + ": " + tag + " is missing its covariate " +
                             z_names[mine[j]]);
        s.z(r, static_cast<int>(j)) = *row.z[mine[j]];
      }
    }
    data.sources.push_back(std::move(s));
  }
  data.validate();
  return data;
}

void save_csv(const MultiSourceData& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write '" + path + "'");
  int max_dz = 0;
  for (const auto& s : data.sources) max_dz = std::max(max_dz, s.d_z());

  out << "source,y,a";
  for (int j = 1; j <= data.d_x; ++j) out << ",x" << j;
  for (int j = 1; j <= max_dz; ++j) out << ",z" << j;
  out << "\n";
  for (const auto& s : data.sources) {
    for (int r = 0; r < s.rows(); ++r) {
      out << s.id << ",";
      if (s.has_outcomes) out << format_double(s.y[r]);
      out << ",";
      if (s.has_outcomes) out << s.a[r];
      for (int j = 0; j < data.d_x; ++j) out << "," << format_double(s.x(r, j));
      for (int j = 0; j < max_dz; ++j) {
        out << ",";
        if (j < s.d_z()) out << format_double(s.z(r, j));
      }
      out << "\n";
    }
  }
  if (!out) throw config_error("failed writing '" + path + "'");
}

}  // namespace wmdl
