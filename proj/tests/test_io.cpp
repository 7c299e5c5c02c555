#include <gtest/gtest.h>

#include <filesystem>
#include <limits>

#include "uml/dgp.hpp"
#include "uml/errors.hpp"
#include "uml/io.hpp"
#include "uml/rng.hpp"

using namespace uml;
using Eigen::MatrixXd;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Digests, SensitiveToEveryField) {
  const auto spec = make_orthogonal_spec({2, 1, 1}, 4, 4, 1, 1, 0.5, 0.5, 3);
  const std::string base = spec_digest(spec);
  EXPECT_EQ(base, spec_digest(make_orthogonal_spec({2, 1, 1}, 4, 4, 1, 1, 0.5, 0.5, 3)));
  auto changed = spec;
  changed.sigma_y = 0.25;
  EXPECT_NE(spec_digest(changed), base);
  changed = spec;
  changed.y_designs[0].b_y(0, 0) += 1e-15;
  EXPECT_NE(spec_digest(changed), base);
  const MatrixXd a = MatrixXd::Ones(2, 3), b = MatrixXd::Ones(3, 2);
  // Same values, different shapes.
  EXPECT_NE(matrices_digest({&a}), matrices_digest({&b}));
}

TEST(Numbers, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-2.0), "-2");
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.integer(-30, 30));
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(parse_double(format_double(std::numeric_limits<double>::denorm_min())),
            std::numeric_limits<double>::denorm_min());
  EXPECT_THROW(parse_double("1.5x"), InvalidInput);
  EXPECT_THROW(parse_double(""), InvalidInput);
  EXPECT_THROW(parse_double("1,5"), InvalidInput);
}

TEST(Embeddings, RoundTripWithAndWithoutLabels) {
  Rng rng(2);
  EmbeddingTable t{rng.normal_matrix(5, 3), std::vector<int>{0, 1, 2, 1, 0}};
  const auto back = parse_embeddings(format_embeddings(t));
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(*back.labels, *t.labels);
  EmbeddingTable plain{rng.normal_matrix(2, 4), std::nullopt};
  const auto back2 = parse_embeddings(format_embeddings(plain));
  EXPECT_FALSE(back2.labels.has_value());
  EXPECT_EQ(back2.rows, plain.rows);

  const auto path = std::filesystem::temp_directory_path() / "uml_test_embeddings.emb";
  write_embeddings(path, t);
  EXPECT_EQ(read_embeddings(path).rows, t.rows);
  std::filesystem::remove(path);
}

TEST(Embeddings, HandParsedFileAndErrors) {
  const auto t = parse_embeddings("uml-emb v1 2 2 1\n1 2 0\n\n-0.5 3e2 1\n");
  EXPECT_EQ(t.rows, (MatrixXd(2, 2) << 1, 2, -0.5, 300).finished());
  EXPECT_EQ(*t.labels, (std::vector<int>{0, 1}));
  EXPECT_THROW(parse_embeddings(""), InvalidInput);
  EXPECT_THROW(parse_embeddings("uml-emb v2 1 1 0\n1\n"), InvalidInput);
  EXPECT_THROW(parse_embeddings("uml-emb v1 2 1 0\n1\n"), InvalidInput);
  EXPECT_THROW(parse_embeddings("uml-emb v1 1 1 0\n1\n2\n"), InvalidInput);
  EXPECT_THROW(parse_embeddings("uml-emb v1 1 2 0\n1\n"), InvalidInput);
  EXPECT_THROW(parse_embeddings("uml-emb v1 1 1 1\n1 x\n"), InvalidInput);
  EXPECT_THROW(parse_embeddings("uml-emb v1 1 1 0\nnan\n"), InvalidInput);
}

TEST(Csv, TableAndParser) {
  CsvTable t({"a", "b"});
  t.add_row({"1", "2.5"});
  EXPECT_EQ(t.str(), "a,b\n1,2.5\n");
  EXPECT_THROW(t.add_row({"1"}), InvalidInput);
  const auto parsed = parse_numeric_csv("x, y\r\n1, 2\n\n3,4\n");
  EXPECT_EQ(parsed.header, (std::vector<std::string>{"x", "y"}));
  ASSERT_EQ(parsed.rows.size(), 2u);
  EXPECT_EQ(parsed.rows[1][0], 3.0);
  EXPECT_THROW(parse_numeric_csv("x,y\n1\n"), InvalidInput);
  EXPECT_THROW(parse_numeric_csv("x\nfoo\n"), InvalidInput);
  EXPECT_THROW(parse_numeric_csv(""), InvalidInput);
}

TEST(Files, AtomicWriteAndMissingRead) {
  const auto path = std::filesystem::temp_directory_path() / "uml_test_text.txt";
  write_text_file(path, "first");
  write_text_file(path, "second");
  EXPECT_EQ(read_text_file(path), "second");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_EQ(sha256_file(path), sha256_hex("second"));
  std::filesystem::remove(path);
  EXPECT_THROW(read_text_file("/nonexistent/dir/file"), InvalidInput);
}
