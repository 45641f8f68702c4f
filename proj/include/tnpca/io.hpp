#pragma once

#include "tnpca/decomposer.hpp"
#include "tnpca/inference.hpp"
#include "tnpca/predictor.hpp"
#include "tnpca/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tnpca {

using Json = nlohmann::json;

// Binary tensor files: "SSTN", u16 version, u8 order, order x u32 dims, then little-endian f64
// values with the first index fastest.
inline constexpr std::uint16_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws FormatError on a bad magic, version, order, or a payload of the wrong length.
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_file(const std::filesystem::path& path);
/// Order-3 file validated as a stack of symmetric slices.
SemiSymmetricTensor read_semisym_file(const std::filesystem::path& path);

/// Numeric CSV without a header. Empty cells and "NA"/"nan" read as NaN; ragged rows or other
/// non-numeric cells throw FormatError.
Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m);

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;  // NaN for missing cells

  /// Column by header name; throws InvalidInput when absent.
  Eigen::VectorXd column(const std::string& name) const;
};

/// CSV with one header row.
CsvTable read_csv_table(const std::filesystem::path& path);
std::string format_csv_table(const CsvTable& table);
void write_csv_table(const std::filesystem::path& path, const CsvTable& table);

/// One P x P CSV per subject stacked into a tensor. Inconsistent P throws DimensionError and
/// asymmetry beyond the tolerance throws AsymmetryError.
SemiSymmetricTensor load_adjacency_csv(const std::vector<std::filesystem::path>& paths);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
Json read_json_file(const std::filesystem::path& path);

Json matrix_to_json(const Eigen::MatrixXd& m);  // array of rows
Eigen::MatrixXd matrix_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

Json to_json(const TnDecomposition& dec);
Json to_json(const TuckerDecomposition& dec);
Json to_json(const TestResult& r);
Json to_json(const Direction& dir);
Json to_json(const std::vector<Edge>& edges);
Json to_json(const PredictionReport& r);
Json to_json(const IdentificationReport& r);

/// Reads the fields written by to_json(TnDecomposition). Throws FormatError on missing fields.
TnDecomposition tn_decomposition_from_json(const Json& j);
/// Reads the fields written by to_json(TuckerDecomposition).
TuckerDecomposition tucker_decomposition_from_json(const Json& j);

}  // namespace tnpca
