#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bmix/postprocess.hpp"

namespace bmix::io {

struct CsvOptions {
  // Feature columns by header name or 1-based index; empty = every column
  // other than the label column.
  std::vector<std::string> columns;
  // Optional class column (name or 1-based index), excluded from y.
  std::string label_col;
};

std::vector<std::string> split_csv_line(const std::string& line);

// Throws InvalidData on unreadable files, missing columns or non-numeric
// feature cells.
Dataset read_dataset(const std::string& path, const CsvOptions& options = {});
Dataset parse_dataset(std::istream& in, const CsvOptions& options = {});

// Draws file: one row per stored sweep,
//   iter, K, K_plus, log_lik, eta_1..eta_M, mu_k_j (k-major), Sigma_k_ij
//   (lower triangle, row-major), N_1..N_M
// where M is the largest K in the chain. Rows with K < M leave the unused
// cells of each block empty; the K column governs parsing.
void write_draws(std::ostream& out, const ChainOutput& chain);

// Assignments file: iter, S_1..S_N with 1-based component labels.
void write_assignments(std::ostream& out, const ChainOutput& chain);

// Long-format trace: iter, series, value for K, K_plus, log_lik and, per
// traced component k, mu1[k] and N[k].
void write_trace(std::ostream& out, const ChainOutput& chain);

// Restores records from a draws file (and optionally an assignments file
// with matching iterations). Only records, n_obs and dim are filled.
ChainOutput read_draws(std::istream& draws);
void attach_assignments(ChainOutput& chain, std::istream& assignments);

void write_partition(std::ostream& out, const Partition& p);
// Reads the named column (or the first column when empty) of a CSV.
std::vector<std::string> read_column(const std::string& path, const std::string& column);

std::string format_double(double v);

// 64-bit FNV-1a digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

// Writes to path + ".tmp" and renames over path.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace bmix::io
