#pragma once

// File formats and digests: embedding files, CSV output, SHA-256.

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uml/dgp.hpp"

namespace uml {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Digest over the raw little-endian bytes of every field of the spec.
std::string spec_digest(const LinearDgpSpec& spec);
// Digest of a matrix list (shapes and raw values); used for parameter digests.
std::string matrices_digest(const std::vector<const Eigen::MatrixXd*>& mats);

std::string read_text_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Shortest round-trip decimal form with '.' as separator, independent of locale.
std::string format_double(double value);
double parse_double(std::string_view text);

// "uml-emb v1 <n_rows> <dim> <has_labels:0|1>", then one row per line with
// the integer label last when present.
struct EmbeddingTable {
  Eigen::MatrixXd rows;
  std::optional<std::vector<int>> labels;
};
EmbeddingTable parse_embeddings(std::string_view text);
std::string format_embeddings(const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);

  void add_row(std::vector<std::string> cells);
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Numeric CSV with a header row; blank lines are skipped.
struct NumericCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
NumericCsv parse_numeric_csv(std::string_view text);

}  // namespace uml
