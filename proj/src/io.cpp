#include "uml/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <system_error>

#include "uml/errors.hpp"

namespace uml {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  }
  void update(const void* data, std::size_t len) {
    if (len && EVP_DigestUpdate(ctx_.get(), data, len) != 1) throw Error("sha256 update failed");
  }
  template <typename T>
  void update_pod(const T& value) {
    update(&value, sizeof(T));
  }
  void update_matrix(const Eigen::MatrixXd& m) {
    update_pod(static_cast<std::int64_t>(m.rows()));
    update_pod(static_cast<std::int64_t>(m.cols()));
    // Column-major storage, fixed by Eigen.
    update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out.data(), &len) != 1) throw Error("sha256 final failed");
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s;
    s.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
      s.push_back(kDigits[out[i] >> 4]);
      s.push_back(kDigits[out[i] & 0xF]);
    }
    return s;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      if (start < text.size()) lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

long long parse_int(std::string_view text, const char* what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidInput(std::string("expected an integer for ") + what + ", got '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

std::string spec_digest(const LinearDgpSpec& spec) {
  Sha256 h;
  h.update_pod(static_cast<std::int64_t>(spec.partition.d_c));
  h.update_pod(static_cast<std::int64_t>(spec.partition.d_x));
  h.update_pod(static_cast<std::int64_t>(spec.partition.d_y));
  h.update_pod(spec.sigma_x);
  h.update_pod(spec.sigma_y);
  h.update_matrix(spec.theta_true);
  h.update_pod(static_cast<std::int64_t>(spec.x_designs.size()));
  for (const auto& d : spec.x_designs) {
    h.update_matrix(d.a_c);
    h.update_matrix(d.a_x);
  }
  h.update_pod(static_cast<std::int64_t>(spec.y_designs.size()));
  for (const auto& d : spec.y_designs) {
    h.update_matrix(d.b_c);
    h.update_matrix(d.b_y);
  }
  return h.hex();
}

std::string matrices_digest(const std::vector<const Eigen::MatrixXd*>& mats) {
  Sha256 h;
  h.update_pod(static_cast<std::int64_t>(mats.size()));
  for (const auto* m : mats) h.update_matrix(*m);
  return h.hex();
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) throw Error("number formatting failed");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw InvalidInput("expected a number, got '" + std::string(text) + "'");
  }
  return v;
}

EmbeddingTable parse_embeddings(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw InvalidInput("embedding file is empty");
  const auto head = split_ws(lines[0]);
  if (head.size() != 5 || head[0] != "uml-emb" || head[1] != "v1") {
    throw InvalidInput("embedding header must read 'uml-emb v1 <n_rows> <dim> <has_labels>'");
  }
  const long long n = parse_int(head[2], "n_rows");
  const long long dim = parse_int(head[3], "dim");
  const long long has_labels = parse_int(head[4], "has_labels");
  if (n < 0 || dim < 1 || (has_labels != 0 && has_labels != 1)) throw InvalidInput("invalid embedding header values");

  EmbeddingTable t;
  t.rows.resize(n, dim);
  if (has_labels) t.labels.emplace(static_cast<std::size_t>(n));
  long long row = 0;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_ws(lines[li]);
    if (cells.empty()) continue;
    if (row >= n) throw InvalidInput("embedding file has more rows than its header declares");
    const std::size_t expected = static_cast<std::size_t>(dim + has_labels);
    if (cells.size() != expected) {
      throw InvalidInput("embedding row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                         " fields, expected " + std::to_string(expected));
    }
    for (long long c = 0; c < dim; ++c) t.rows(row, c) = parse_double(cells[static_cast<std::size_t>(c)]);
    if (has_labels) (*t.labels)[static_cast<std::size_t>(row)] = static_cast<int>(parse_int(cells.back(), "label"));
    ++row;
  }
  if (row != n) throw InvalidInput("embedding file has fewer rows than its header declares");
  if (!t.rows.allFinite()) throw InvalidInput("embedding file has non-finite values");
  return t;
}

std::string format_embeddings(const EmbeddingTable& table) {
  const bool labels = table.labels.has_value();
  if (labels && table.labels->size() != static_cast<std::size_t>(table.rows.rows())) {
    throw InvalidInput("label count must equal row count");
  }
  std::string out = "uml-emb v1 " + std::to_string(table.rows.rows()) + " " + std::to_string(table.rows.cols()) + " " +
                    (labels ? "1" : "0") + "\n";
  for (Index r = 0; r < table.rows.rows(); ++r) {
    for (Index c = 0; c < table.rows.cols(); ++c) {
      if (c) out += ' ';
      out += format_double(table.rows(r, c));
    }
    if (labels) out += " " + std::to_string((*table.labels)[static_cast<std::size_t>(r)]);
    out += '\n';
  }
  return out;
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) { return parse_embeddings(read_text_file(path)); }

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  write_text_file(path, format_embeddings(table));
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != header_.size()) throw InvalidInput("CSV row width does not match the header");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const {
  auto join = [](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += '\n';
    return line;
  };
  std::string out = join(header_);
  for (const auto& r : rows_) out += join(r);
  return out;
}

NumericCsv parse_numeric_csv(std::string_view text) {
  NumericCsv out;
  bool have_header = false;
  for (auto line : split_lines(text)) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      cells.push_back(cell);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!have_header) {
      for (auto c : cells) out.header.emplace_back(c);
      have_header = true;
      continue;
    }
    if (cells.size() != out.header.size()) {
      throw InvalidInput("CSV row " + std::to_string(out.rows.size() + 1) + " does not match the header width");
    }
    std::vector<double> row;
    for (auto c : cells) row.push_back(parse_double(c));
    out.rows.push_back(std::move(row));
  }
  if (!have_header) throw InvalidInput("CSV input is empty");
  return out;
}

}  // namespace uml
