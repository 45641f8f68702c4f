#include "tnpca/io.hpp"

#include "tnpca/errors.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace tnpca {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'T', 'N'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                  std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
  if (in.size() - pos < sizeof(T)) throw FormatError("tensor file truncated in header");
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) bits |= static_cast<U>(static_cast<U>(in[pos + b]) << (8 * b));
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path, std::size_t line, std::size_t col) {
  if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size()) {
    std::ostringstream os;
    os << path.string() << ":" << line << ": column " << col + 1 << " is not numeric ('" << cell << "')";
    throw FormatError(os.str());
  }
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  return lines;
}

Eigen::MatrixXd parse_rows(const std::vector<std::string>& lines, std::size_t first, const std::filesystem::path& path,
                           std::size_t expected_cols) {
  const auto rows = static_cast<Index>(lines.size() - first);
  Eigen::MatrixXd m(rows, static_cast<Index>(expected_cols));
  for (std::size_t r = first; r < lines.size(); ++r) {
    const auto cells = split_csv_line(lines[r]);
    if (cells.size() != expected_cols) {
      std::ostringstream os;
      os << path.string() << ":" << r + 1 << ": expected " << expected_cols << " columns, found " << cells.size();
      throw FormatError(os.str());
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      m(static_cast<Index>(r - first), static_cast<Index>(c)) = parse_cell(cells[c], path, r + 1, c);
    }
  }
  return m;
}

std::string format_cell(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.order() != 3 && t.order() != 4) throw InvalidInput("tensor files hold order 3 or 4 tensors");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint16_t>(out, kTensorFileVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.order()));
  for (Index d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw InvalidInput("tensor extent exceeds 32 bits");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 8 * static_cast<std::size_t>(t.size()));
  for (double v : t.values()) put_le<double>(out, v);
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("not a tensor file (bad magic)");
  std::size_t pos = 4;
  const auto version = get_le<std::uint16_t>(bytes, pos);
  if (version != kTensorFileVersion) throw FormatError("unsupported tensor file version " + std::to_string(version));
  const auto order = get_le<std::uint8_t>(bytes, pos);
  if (order != 3 && order != 4) throw FormatError("tensor order must be 3 or 4, got " + std::to_string(order));
  std::vector<Index> dims;
  std::uint64_t count = 1;
  for (int m = 0; m < order; ++m) {
    dims.push_back(get_le<std::uint32_t>(bytes, pos));
    count *= static_cast<std::uint64_t>(dims.back());
  }
  const std::uint64_t payload = bytes.size() - pos;
  if (payload != 8 * count) {
    std::ostringstream os;
    os << "tensor payload holds " << payload << " bytes, dims require " << 8 * count;
    throw FormatError(os.str());
  }
  std::vector<double> values(static_cast<std::size_t>(count));
  for (auto& v : values) v = get_le<double>(bytes, pos);
  return Tensor(std::move(dims), std::move(values));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

SemiSymmetricTensor read_semisym_file(const std::filesystem::path& path) {
  Tensor t = read_tensor_file(path);
  if (t.order() != 3) throw FormatError(path.string() + " holds an order-" + std::to_string(t.order()) + " tensor");
  return SemiSymmetricTensor(std::move(t));
}

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw FormatError(path.string() + " is empty");
  return parse_rows(lines, 0, path, split_csv_line(lines[0]).size());
}

void write_csv_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << format_cell(m(i, j));
    os << '\n';
  }
  write_text_file(path, os.str());
}

Eigen::VectorXd CsvTable::column(const std::string& name) const {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == name) return values.col(static_cast<Index>(c));
  }
  throw InvalidInput("no column named '" + name + "'");
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw FormatError(path.string() + " has no header row");
  CsvTable table;
  table.header = split_csv_line(lines[0]);
  table.values = parse_rows(lines, 1, path, table.header.size());
  return table;
}

std::string format_csv_table(const CsvTable& table) {
  if (static_cast<Index>(table.header.size()) != table.values.cols()) {
    throw DimensionError("header length does not match column count");
  }
  std::ostringstream os;
  for (std::size_t c = 0; c < table.header.size(); ++c) os << (c ? "," : "") << table.header[c];
  os << '\n';
  for (Index i = 0; i < table.values.rows(); ++i) {
    for (Index j = 0; j < table.values.cols(); ++j) os << (j ? "," : "") << format_cell(table.values(i, j));
    os << '\n';
  }
  return os.str();
}

void write_csv_table(const std::filesystem::path& path, const CsvTable& table) {
  write_text_file(path, format_csv_table(table));
}

SemiSymmetricTensor load_adjacency_csv(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw InvalidInput("no adjacency files given");
  std::vector<Eigen::MatrixXd> slices;
  for (const auto& path : paths) {
    Eigen::MatrixXd m = read_csv_matrix(path);
    if (m.rows() != m.cols()) {
      std::ostringstream os;
      os << path.string() << " is " << m.rows() << " x " << m.cols() << ", not square";
      throw DimensionError(os.str());
    }
    if (!slices.empty() && m.rows() != slices.front().rows()) {
      std::ostringstream os;
      os << path.string() << " has " << m.rows() << " nodes, expected " << slices.front().rows();
      throw DimensionError(os.str());
    }
    slices.push_back(std::move(m));
  }
  return SemiSymmetricTensor::from_slices(slices);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Json read_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("expected a matrix as an array of rows");
  const auto rows = static_cast<Index>(j.size());
  const Index cols = rows ? static_cast<Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) throw FormatError("ragged matrix in JSON");
    for (Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

Json vector_to_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("expected a numeric array");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
}

Json to_json(const TnDecomposition& dec) {
  Json j;
  j["method"] = "tnpca";
  j["d"] = vector_to_json(dec.d);
  j["V"] = matrix_to_json(dec.V);
  j["U"] = matrix_to_json(dec.U);
  j["objective_trace"] = dec.objective_trace;
  j["converged"] = dec.converged;
  j["degenerate"] = dec.degenerate;
  j["residual_norms"] = dec.residual_norms;
  j["warnings"] = dec.warnings;
  return j;
}

Json to_json(const TuckerDecomposition& dec) {
  Json j;
  j["core"] = {{"dims", dec.core.dims()},
               {"values", std::vector<double>(dec.core.values().begin(), dec.core.values().end())}};
  j["V"] = matrix_to_json(dec.V);
  j["U"] = matrix_to_json(dec.U);
  j["fit_trace"] = dec.fit_trace;
  j["converged"] = dec.converged;
  j["iterations"] = dec.iterations;
  return j;
}

Json to_json(const TestResult& r) {
  return {{"statistic", r.statistic},
          {"p_value", r.p_value},
          {"permutations", r.permutations},
          {"bandwidth", r.bandwidth}};
}

Json to_json(const Direction& dir) {
  Json j;
  j["trait"] = dir.trait;
  j["method"] = to_string(dir.method);
  j["w"] = vector_to_json(dir.w);
  j["s"] = dir.s;
  j["delta_net"] = matrix_to_json(dir.delta_net);
  if (dir.threshold) j["threshold"] = *dir.threshold;
  if (dir.method == DirectionMethod::kLda) j["ridge"] = dir.ridge;
  return j;
}

Json to_json(const std::vector<Edge>& edges) {
  Json out = Json::array();
  for (const Edge& e : edges) out.push_back({{"i", e.i}, {"j", e.j}, {"value", e.value}});
  return out;
}

Json to_json(const PredictionReport& r) {
  Json j;
  j["trait"] = r.trait;
  j["metric"] = to_string(r.metric);
  j["psi_baseline"] = r.psi_baseline;
  j["psi_full"] = r.psi_full;
  j["rho"] = r.rho;
  j["best_K"] = r.best_k;
  j["degenerate"] = r.degenerate;
  Json val = Json::array();
  for (const auto& [k, err] : r.validation_errors) val.push_back({{"K", k}, {"error", err}});
  j["validation_errors"] = val;
  j["test_indices"] = r.test_indices;
  j["test_truth"] = vector_to_json(r.test_truth);
  j["test_predictions"] = vector_to_json(r.test_predictions);
  return j;
}

Json to_json(const IdentificationReport& r) {
  return {{"accuracy", r.accuracy}, {"K", r.k}, {"nearest", r.nearest}, {"predicted_label", r.predicted_label}};
}

TnDecomposition tn_decomposition_from_json(const Json& j) {
  try {
    if (j.value("method", std::string()) != "tnpca") throw FormatError("decomposition file is not a tnpca result");
    TnDecomposition dec;
    dec.d = vector_from_json(j.at("d"));
    dec.V = matrix_from_json(j.at("V"));
    dec.U = matrix_from_json(j.at("U"));
    if (dec.V.cols() != dec.d.size() || dec.U.cols() != dec.d.size()) {
      throw FormatError("decomposition factor widths disagree with d");
    }
    if (j.contains("objective_trace")) dec.objective_trace = j["objective_trace"].get<std::vector<std::vector<double>>>();
    if (j.contains("converged")) dec.converged = j["converged"].get<std::vector<bool>>();
    if (j.contains("degenerate")) dec.degenerate = j["degenerate"].get<std::vector<bool>>();
    if (j.contains("residual_norms")) dec.residual_norms = j["residual_norms"].get<std::vector<double>>();
    if (j.contains("warnings")) dec.warnings = j["warnings"].get<std::vector<std::string>>();
    return dec;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed decomposition JSON: ") + e.what());
  }
}

TuckerDecomposition tucker_decomposition_from_json(const Json& j) {
  try {
    TuckerDecomposition dec;
    const Json& core = j.at("core");
    dec.core = Tensor(core.at("dims").get<std::vector<Index>>(), core.at("values").get<std::vector<double>>());
    dec.V = matrix_from_json(j.at("V"));
    dec.U = matrix_from_json(j.at("U"));
    if (dec.core.order() != 3 || dec.core.dim(0) != dec.V.cols() || dec.core.dim(1) != dec.V.cols() ||
        dec.core.dim(2) != dec.U.cols()) {
      throw FormatError("Tucker core dims disagree with the factor widths");
    }
    if (j.contains("fit_trace")) dec.fit_trace = j["fit_trace"].get<std::vector<double>>();
    dec.converged = j.value("converged", true);
    dec.iterations = j.value("iterations", 0);
    return dec;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed Tucker JSON: ") + e.what());
  }
}

}  // namespace tnpca
