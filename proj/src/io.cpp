#include "bmix/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "bmix/errors.hpp"

namespace bmix::io {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

double to_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  if (!parse_double(s, v)) {
    throw InvalidData(context + ": not a number: '" + s + "'");
  }
  return v;
}

long to_long(const std::string& s, const std::string& context) {
  const double v = to_double(s, context);
  return static_cast<long>(v);
}

// Resolves a column given by header name or 1-based index.
std::size_t resolve_column(const std::vector<std::string>& header, const std::string& spec) {
  const auto it = std::find(header.begin(), header.end(), spec);
  if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
  double idx = 0.0;
  if (parse_double(spec, idx) && idx >= 1 && idx <= static_cast<double>(header.size()) &&
      idx == static_cast<double>(static_cast<long>(idx))) {
    return static_cast<std::size_t>(idx) - 1;
  }
  throw InvalidData("unknown column '" + spec + "'");
}

bool getline_nonempty(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!trim(line).empty()) return true;
  }
  return false;
}

std::size_t count_prefix(const std::vector<std::string>& header, const std::string& prefix) {
  return static_cast<std::size_t>(std::count_if(header.begin(), header.end(), [&](const std::string& h) {
    return h.rfind(prefix, 0) == 0;
  }));
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
      cell.push_back(ch);
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim(cell));
  return out;
}

Dataset parse_dataset(std::istream& in, const CsvOptions& options) {
  std::string line;
  if (!getline_nonempty(in, line)) {
    throw InvalidData("dataset: empty input");
  }
  const auto header = split_csv_line(line);

  std::optional<std::size_t> label_idx;
  if (!options.label_col.empty()) label_idx = resolve_column(header, options.label_col);
  std::vector<std::size_t> cols;
  if (options.columns.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (!label_idx || *label_idx != j) cols.push_back(j);
    }
  } else {
    for (const auto& c : options.columns) cols.push_back(resolve_column(header, c));
  }
  if (cols.empty()) {
    throw InvalidData("dataset: no feature columns selected");
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  long line_no = 1;
  while (getline_nonempty(in, line)) {
    ++line_no;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InvalidData("dataset: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " fields, expected " + std::to_string(header.size()));
    }
    std::vector<double> row;
    for (std::size_t j : cols) {
      row.push_back(to_double(cells[j], "dataset line " + std::to_string(line_no)));
    }
    rows.push_back(std::move(row));
    if (label_idx) raw_labels.push_back(cells[*label_idx]);
  }

  Dataset data;
  data.y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      data.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  for (std::size_t j : cols) data.feature_names.push_back(header[j]);
  if (label_idx) {
    std::vector<int> labels;
    std::map<std::string, int> ids;
    for (const auto& l : raw_labels) {
      auto [it, inserted] = ids.try_emplace(l, static_cast<int>(data.class_names.size()));
      if (inserted) data.class_names.push_back(l);
      labels.push_back(it->second);
    }
    data.true_labels = std::move(labels);
  }
  data.validate();
  return data;
}

Dataset read_dataset(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidData("cannot open '" + path + "'");
  }
  return parse_dataset(in, options);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_draws(std::ostream& out, const ChainOutput& chain) {
  int max_k = 0;
  for (const auto& rec : chain.records) max_k = std::max(max_k, rec.K);
  const Eigen::Index r = chain.dim;

  out << "iter,K,K_plus,log_lik";
  for (int k = 1; k <= max_k; ++k) out << ",eta_" << k;
  for (int k = 1; k <= max_k; ++k)
    for (Eigen::Index j = 1; j <= r; ++j) out << ",mu_" << k << '_' << j;
  for (int k = 1; k <= max_k; ++k)
    for (Eigen::Index i = 1; i <= r; ++i)
      for (Eigen::Index j = 1; j <= i; ++j) out << ",Sigma_" << k << '_' << i << j;
  for (int k = 1; k <= max_k; ++k) out << ",N_" << k;
  out << '\n';

  const auto tri = static_cast<std::size_t>(r * (r + 1) / 2);
  for (const auto& rec : chain.records) {
    out << rec.iter << ',' << rec.K << ',' << rec.K_plus << ',' << format_double(rec.log_lik);
    const auto pad = static_cast<std::size_t>(max_k - rec.K);
    for (int k = 0; k < rec.K; ++k) out << ',' << format_double(rec.eta[k]);
    out << std::string(pad, ',');
    for (const auto& m : rec.mu)
      for (Eigen::Index j = 0; j < r; ++j) out << ',' << format_double(m[j]);
    out << std::string(pad * static_cast<std::size_t>(r), ',');
    for (const auto& s : rec.Sigma)
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) out << ',' << format_double(s(i, j));
    out << std::string(pad * tri, ',');
    for (int n : rec.counts) out << ',' << n;
    out << std::string(pad, ',');
    out << '\n';
  }
}

void write_assignments(std::ostream& out, const ChainOutput& chain) {
  out << "iter";
  for (Eigen::Index i = 1; i <= chain.n_obs; ++i) out << ",S_" << i;
  out << '\n';
  for (const auto& rec : chain.records) {
    if (!rec.S) continue;
    out << rec.iter;
    for (int s : *rec.S) out << ',' << s + 1;
    out << '\n';
  }
}

void write_trace(std::ostream& out, const ChainOutput& chain) {
  out << "iter,series,value\n";
  for (const auto& t : chain.trace) {
    out << t.iter << ",K," << t.K << '\n';
    out << t.iter << ",K_plus," << t.K_plus << '\n';
    out << t.iter << ",log_lik," << format_double(t.log_lik) << '\n';
    for (std::size_t c = 0; c < t.component.size(); ++c) {
      out << t.iter << ",mu1[" << t.component[c] + 1 << "]," << format_double(t.mu_first[c]) << '\n';
    }
    for (std::size_t c = 0; c < t.component.size(); ++c) {
      out << t.iter << ",N[" << t.component[c] + 1 << "]," << t.counts[c] << '\n';
    }
  }
}

ChainOutput read_draws(std::istream& draws) {
  std::string line;
  if (!getline_nonempty(draws, line)) {
    throw InvalidData("draws: empty file");
  }
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "iter" || header[1] != "K" || header[2] != "K_plus" ||
      header[3] != "log_lik") {
    throw InvalidData("draws: unexpected header");
  }
  const auto max_k = count_prefix(header, "eta_");
  if (max_k == 0) {
    throw InvalidData("draws: no weight columns");
  }
  const auto r = static_cast<Eigen::Index>(count_prefix(header, "mu_") / max_k);
  const auto tri = static_cast<std::size_t>(r * (r + 1) / 2);
  if (r < 1 || header.size() != 4 + max_k * (2 + static_cast<std::size_t>(r) + tri)) {
    throw InvalidData("draws: header column count does not match K and r");
  }

  ChainOutput chain;
  chain.dim = r;
  const std::size_t eta_at = 4;
  const std::size_t mu_at = eta_at + max_k;
  const std::size_t sigma_at = mu_at + max_k * static_cast<std::size_t>(r);
  const std::size_t n_at = sigma_at + max_k * tri;
  long line_no = 1;
  while (getline_nonempty(draws, line)) {
    ++line_no;
    const std::string ctx = "draws line " + std::to_string(line_no);
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InvalidData(ctx + ": wrong number of fields");
    }
    SweepRecord rec;
    rec.iter = to_long(cells[0], ctx);
    rec.K = static_cast<int>(to_long(cells[1], ctx));
    rec.K_plus = static_cast<int>(to_long(cells[2], ctx));
    rec.log_lik = to_double(cells[3], ctx);
    if (rec.K < 1 || static_cast<std::size_t>(rec.K) > max_k) {
      throw InvalidData(ctx + ": K out of range");
    }
    const auto K = static_cast<std::size_t>(rec.K);
    rec.eta.resize(rec.K);
    for (std::size_t k = 0; k < K; ++k) {
      rec.eta[static_cast<Eigen::Index>(k)] = to_double(cells[eta_at + k], ctx);
      VectorXd m(r);
      for (Eigen::Index j = 0; j < r; ++j) {
        m[j] = to_double(cells[mu_at + k * static_cast<std::size_t>(r) + static_cast<std::size_t>(j)], ctx);
      }
      rec.mu.push_back(std::move(m));
      MatrixXd s(r, r);
      std::size_t pos = sigma_at + k * tri;
      for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
          s(i, j) = s(j, i) = to_double(cells[pos++], ctx);
        }
      }
      rec.Sigma.push_back(std::move(s));
      rec.counts.push_back(static_cast<int>(to_long(cells[n_at + k], ctx)));
    }
    chain.records.push_back(std::move(rec));
  }
  return chain;
}

void attach_assignments(ChainOutput& chain, std::istream& assignments) {
  std::string line;
  if (!getline_nonempty(assignments, line)) {
    throw InvalidData("assignments: empty file");
  }
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "iter") {
    throw InvalidData("assignments: unexpected header");
  }
  chain.n_obs = static_cast<Eigen::Index>(header.size() - 1);
  std::map<long, std::size_t> by_iter;
  for (std::size_t i = 0; i < chain.records.size(); ++i) by_iter[chain.records[i].iter] = i;
  long line_no = 1;
  while (getline_nonempty(assignments, line)) {
    ++line_no;
    const std::string ctx = "assignments line " + std::to_string(line_no);
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InvalidData(ctx + ": wrong number of fields");
    }
    const auto it = by_iter.find(to_long(cells[0], ctx));
    if (it == by_iter.end()) {
      throw InvalidData(ctx + ": iteration not present in draws");
    }
    auto& rec = chain.records[it->second];
    std::vector<int> S;
    S.reserve(cells.size() - 1);
    for (std::size_t i = 1; i < cells.size(); ++i) {
      const long s = to_long(cells[i], ctx) - 1;
      if (s < 0 || s >= rec.K) throw InvalidData(ctx + ": label out of range");
      S.push_back(static_cast<int>(s));
    }
    rec.S = std::move(S);
  }
}

void write_partition(std::ostream& out, const Partition& p) {
  out << "cluster\n";
  for (int l : p.labels) out << l + 1 << '\n';
}

std::vector<std::string> read_column(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidData("cannot open '" + path + "'");
  }
  std::string line;
  if (!getline_nonempty(in, line)) {
    throw InvalidData("'" + path + "' is empty");
  }
  const auto header = split_csv_line(line);
  const std::size_t idx = column.empty() ? 0 : resolve_column(header, column);
  std::vector<std::string> out;
  while (getline_nonempty(in, line)) {
    const auto cells = split_csv_line(line);
    if (idx >= cells.size()) {
      throw InvalidData("'" + path + "': short row");
    }
    out.push_back(cells[idx]);
  }
  return out;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InvalidData("cannot open '" + path + "'");
  }
  std::uint64_t h = 14695981039346656037ull;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw InvalidData("cannot write '" + tmp + "'");
    }
    out << contents;
    if (!out) {
      throw InvalidData("write failed for '" + tmp + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace bmix::io
