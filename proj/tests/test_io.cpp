#include "test_util.hpp"

#include "tnpca/errors.hpp"
#include "tnpca/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

using namespace tnpca;
using namespace tnpca::testing;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("tnpca_io_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_raw(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(TensorFile, HeaderLayout) {
  Tensor t({2, 2, 3});
  for (Index i = 0; i < t.size(); ++i) t.values()[static_cast<std::size_t>(i)] = static_cast<double>(i);
  const auto bytes = encode_tensor(t);
  // magic(4) + version(2) + order(1) + 3 dims(12) + 12 doubles.
  ASSERT_EQ(bytes.size(), 4u + 2 + 1 + 12 + 96);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SSTN");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 3);
  EXPECT_EQ(bytes[7], 2);
  EXPECT_EQ(bytes[15], 3);
  // Value 1.0 is the second double: little-endian IEEE bits 0x3FF0000000000000.
  EXPECT_EQ(bytes[19 + 8 + 7], 0x3F);
  EXPECT_EQ(bytes[19 + 8 + 6], 0xF0);
}

TEST(TensorFile, RoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(1);
  for (const auto& dims : {std::vector<Index>{4, 4, 6}, std::vector<Index>{3, 3, 2, 5}}) {
    const Tensor t = gaussian_tensor(dims, rng);
    write_tensor_file(dir / "t.sstn", t);
    const Tensor back = read_tensor_file(dir / "t.sstn");
    EXPECT_EQ(back.dims(), t.dims());
    EXPECT_EQ(std::memcmp(back.values().data(), t.values().data(), sizeof(double) * t.values().size()), 0);
  }
}

TEST(TensorFile, TruncatedPayloadRejected) {
  std::mt19937_64 rng(2);
  auto bytes = encode_tensor(gaussian_tensor({3, 3, 2}, rng));
  bytes.resize(bytes.size() - 5);
  try {
    decode_tensor(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("dims require 144"), std::string::npos) << e.what();
  }
  bytes.resize(10);
  EXPECT_THROW(decode_tensor(bytes), FormatError);
}

TEST(TensorFile, TrailingBytesRejected) {
  std::mt19937_64 rng(3);
  auto bytes = encode_tensor(gaussian_tensor({2, 2, 2}, rng));
  bytes.push_back(0);
  EXPECT_THROW(decode_tensor(bytes), FormatError);
}

TEST(TensorFile, BadMagicVersionAndOrder) {
  std::mt19937_64 rng(4);
  const auto good = encode_tensor(gaussian_tensor({2, 2, 2}, rng));
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_tensor(bad), FormatError);
  bad = good;
  bad[4] = 9;
  EXPECT_THROW(decode_tensor(bad), FormatError);
  bad = good;
  bad[6] = 5;
  EXPECT_THROW(decode_tensor(bad), FormatError);
}

TEST(TensorFile, SemiSymmetricValidationOnLoad) {
  TempDir dir;
  std::mt19937_64 rng(5);
  Tensor t = gaussian_tensor({3, 3, 2}, rng);
  write_tensor_file(dir / "asym.sstn", t);
  EXPECT_THROW(read_semisym_file(dir / "asym.sstn"), AsymmetryError);
  const SemiSymmetricTensor s = random_semisym(3, 2, rng);
  write_tensor_file(dir / "sym.sstn", s.tensor());
  EXPECT_EQ(read_semisym_file(dir / "sym.sstn").tensor(), s.tensor());
  write_tensor_file(dir / "four.sstn", gaussian_tensor({2, 2, 2, 2}, rng));
  EXPECT_THROW(read_semisym_file(dir / "four.sstn"), FormatError);
  EXPECT_THROW(read_tensor_file(dir / "missing.sstn"), FormatError);
}

TEST(Csv, MatrixReadsMissingAndRejectsRagged) {
  TempDir dir;
  write_raw(dir / "m.csv", "1,2,3\n4,,NA\n nan ,5.5,-1e3\n");
  const Eigen::MatrixXd m = read_csv_matrix(dir / "m.csv");
  ASSERT_EQ(m.rows(), 3);
  ASSERT_EQ(m.cols(), 3);
  EXPECT_EQ(m(0, 2), 3.0);
  EXPECT_TRUE(std::isnan(m(1, 1)));
  EXPECT_TRUE(std::isnan(m(1, 2)));
  EXPECT_TRUE(std::isnan(m(2, 0)));
  EXPECT_EQ(m(2, 2), -1000.0);

  write_raw(dir / "ragged.csv", "1,2\n3\n");
  EXPECT_THROW(read_csv_matrix(dir / "ragged.csv"), FormatError);
  write_raw(dir / "text.csv", "1,abc\n");
  EXPECT_THROW(read_csv_matrix(dir / "text.csv"), FormatError);
}

TEST(Csv, MatrixRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(6);
  Eigen::MatrixXd m = gaussian_matrix(5, 4, rng) * 1e3;
  m(2, 1) = std::nan("");
  write_csv_matrix(dir / "m.csv", m);
  const Eigen::MatrixXd back = read_csv_matrix(dir / "m.csv");
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 4; ++j) {
      if (std::isnan(m(i, j))) {
        EXPECT_TRUE(std::isnan(back(i, j)));
      } else {
        EXPECT_EQ(back(i, j), m(i, j));
      }
    }
  }
}

TEST(Csv, TableColumnsAndRoundTrip) {
  TempDir dir;
  write_raw(dir / "t.csv", "age,score\n30,1.5\n41,NA\n");
  const CsvTable t = read_csv_table(dir / "t.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"age", "score"}));
  EXPECT_EQ(t.column("age"), Eigen::Vector2d(30, 41));
  EXPECT_TRUE(std::isnan(t.column("score")(1)));
  EXPECT_THROW(t.column("height"), InvalidInput);
  write_csv_table(dir / "u.csv", t);
  const CsvTable u = read_csv_table(dir / "u.csv");
  EXPECT_EQ(u.header, t.header);
  EXPECT_EQ(u.values(0, 1), 1.5);
}

TEST(Adjacency, StacksSymmetricMatrices) {
  TempDir dir;
  write_raw(dir / "a.csv", "0,1,2\n1,0,3\n2,3,0\n");
  write_raw(dir / "b.csv", "5,0,0\n0,5,0\n0,0,5\n");
  const SemiSymmetricTensor x = load_adjacency_csv({dir / "a.csv", dir / "b.csv"});
  EXPECT_EQ(x.tensor().dims(), (std::vector<Index>{3, 3, 2}));
  EXPECT_EQ(x.slice(0)(1, 2), 3.0);
  EXPECT_EQ(x.slice(1)(2, 2), 5.0);
}

TEST(Adjacency, AsymmetryNamesEntry) {
  TempDir dir;
  write_raw(dir / "a.csv", "0,1,2\n1,0,3.001\n2,3,0\n");
  try {
    load_adjacency_csv({dir / "a.csv"});
    FAIL() << "expected AsymmetryError";
  } catch (const AsymmetryError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("X(1,2)"), std::string::npos) << msg;
  }
  // Below the tolerance the slices are averaged.
  write_raw(dir / "b.csv", "0,1\n1.0000000001,0\n");
  EXPECT_NEAR(load_adjacency_csv({dir / "b.csv"}).slice(0)(0, 1), 1.00000000005, 1e-15);
}

TEST(Adjacency, InconsistentShapes) {
  TempDir dir;
  write_raw(dir / "a.csv", "0,1\n1,0\n");
  write_raw(dir / "b.csv", "0,1,1\n1,0,1\n1,1,0\n");
  write_raw(dir / "c.csv", "0,1,1\n1,0,1\n");
  EXPECT_THROW(load_adjacency_csv({dir / "a.csv", dir / "b.csv"}), DimensionError);
  EXPECT_THROW(load_adjacency_csv({dir / "c.csv"}), DimensionError);
  write_raw(dir / "d.csv", "0,1\n1\n");
  EXPECT_THROW(load_adjacency_csv({dir / "d.csv"}), FormatError);
}

TEST(Adjacency, CsvToBinaryRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(7);
  const SemiSymmetricTensor x = random_semisym(4, 3, rng);
  std::vector<fs::path> paths;
  for (Index n = 0; n < 3; ++n) {
    paths.push_back(dir / ("s" + std::to_string(n) + ".csv"));
    write_csv_matrix(paths.back(), x.slice(n));
  }
  const SemiSymmetricTensor loaded = load_adjacency_csv(paths);
  write_tensor_file(dir / "x.sstn", loaded.tensor());
  EXPECT_EQ(read_semisym_file(dir / "x.sstn").tensor(), x.tensor());
}

TEST(Json, MatrixAndVectorRoundTrip) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd m = gaussian_matrix(3, 4, rng);
  EXPECT_EQ(matrix_from_json(Json::parse(matrix_to_json(m).dump())), m);
  const Eigen::VectorXd v = gaussian_vector(5, rng);
  EXPECT_EQ(vector_from_json(Json::parse(vector_to_json(v).dump())), v);
  EXPECT_THROW(matrix_from_json(Json::parse("[[1,2],[3]]")), FormatError);
  EXPECT_THROW(vector_from_json(Json::parse("{}")), FormatError);
}

TEST(Json, DecompositionRoundTrip) {
  std::mt19937_64 rng(9);
  TnDecomposition dec;
  dec.d = gaussian_vector(3, rng);
  dec.V = gaussian_matrix(5, 3, rng);
  dec.U = gaussian_matrix(7, 3, rng);
  const Json j = Json::parse(to_json(dec).dump());
  EXPECT_EQ(j.at("method"), "tnpca");
  const TnDecomposition back = tn_decomposition_from_json(j);
  EXPECT_EQ(back.d, dec.d);
  EXPECT_EQ(back.V, dec.V);
  EXPECT_EQ(back.U, dec.U);

  Json wrong = j;
  wrong["method"] = "hosvd";
  EXPECT_THROW(tn_decomposition_from_json(wrong), FormatError);
  Json narrow = j;
  narrow["d"] = Json::array({1.0});
  EXPECT_THROW(tn_decomposition_from_json(narrow), FormatError);
}

TEST(Json, TuckerRoundTrip) {
  std::mt19937_64 rng(10);
  const SemiSymmetricTensor x = random_semisym(5, 4, rng);
  const TuckerDecomposition dec = hosvd_semisym(x, 3, 2);
  const TuckerDecomposition back = tucker_decomposition_from_json(Json::parse(to_json(dec).dump()));
  EXPECT_EQ(back.core.dims(), dec.core.dims());
  EXPECT_EQ(back.core, dec.core);
  EXPECT_EQ(back.V, dec.V);
  EXPECT_EQ(back.U, dec.U);
}

TEST(Json, ReportsCarryExpectedFields) {
  Direction dir;
  dir.w = Eigen::Vector2d(0.6, 0.8);
  dir.s = 2.0;
  dir.delta_net = Eigen::Matrix2d::Identity();
  dir.method = DirectionMethod::kLda;
  dir.threshold = 0.5;
  const Json j = to_json(dir);
  EXPECT_EQ(j.at("method"), "lda");
  EXPECT_EQ(j.at("threshold"), 0.5);
  EXPECT_EQ(vector_from_json(j.at("w")), dir.w);

  const Json e = to_json(std::vector<Edge>{{0, 3, -1.5}});
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].at("i"), 0);
  EXPECT_EQ(e[0].at("j"), 3);
  EXPECT_EQ(e[0].at("value"), -1.5);

  TestResult r;
  r.p_value = 0.25;
  EXPECT_EQ(to_json(r).at("p_value"), 0.25);
}

TEST(Json, ReadFileRejectsGarbage) {
  TempDir dir;
  write_raw(dir / "bad.json", "{\"a\": ");
  EXPECT_THROW(read_json_file(dir / "bad.json"), FormatError);
  write_raw(dir / "good.json", "{\"a\": 1}");
  EXPECT_EQ(read_json_file(dir / "good.json").at("a"), 1);
}
