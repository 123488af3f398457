#include "intervene/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace intervene {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// One CSV record, RFC-4180 quoting rules; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string cell;
  bool in_quotes = false;
  bool saw_any = false;
  int ch;
  while ((ch = in.get()) != EOF) {
    saw_any = true;
    const char c = static_cast<char>(ch);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          cell.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cell);
      cell.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      fields.push_back(cell);
      return true;
    } else if (c == '\n') {
      fields.push_back(cell);
      return true;
    } else {
      cell.push_back(c);
    }
  }
  if (!saw_any) return false;
  fields.push_back(cell);
  return true;
}

double parse_cell(const std::string& text, std::size_t row, const std::string& column) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  // Trailing spaces are tolerated, anything else is not.
  while (end != nullptr && (*end == ' ' || *end == '\t')) ++end;
  if (end == begin || end == nullptr || *end != '\0')
    fail("row " + std::to_string(row) + ", column '" + column +
         "': cannot parse '" + text + "' as a number");
  if (!std::isfinite(value))
    fail("row " + std::to_string(row) + ", column '" + column +
         "': non-finite value '" + text + "'");
  return value;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

void Dataset::validate() const {
  if (covariates.rows() != outcomes.size())
    fail("dataset: covariate rows (" + std::to_string(covariates.rows()) +
         ") != outcome count (" + std::to_string(outcomes.size()) + ")");
  if (static_cast<Eigen::Index>(column_names.size()) != covariates.cols())
    fail("dataset: " + std::to_string(column_names.size()) + " column names for " +
         std::to_string(covariates.cols()) + " covariates");
  if (!covariates.allFinite())
    fail("dataset: covariates contain a non-finite value");
  if (!outcomes.allFinite())
    fail("dataset: outcomes contain a non-finite value");
}

Dataset load_dataset(const std::string& path, const std::string& outcome_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path + "'");

  std::vector<std::string> header;
  if (!read_record(in, header)) fail("'" + path + "': empty file");
  for (auto& name : header) name = trim(name);
  if (header.empty() || (header.size() == 1 && header[0].empty()))
    fail("'" + path + "': empty header row");

  int outcome_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == outcome_column) {
      if (outcome_idx >= 0) fail("'" + path + "': duplicate outcome column '" + outcome_column + "'");
      outcome_idx = static_cast<int>(i);
    }
  }
  if (outcome_idx < 0) fail("'" + path + "': no column named '" + outcome_column + "'");

  const std::size_t width = header.size();
  std::vector<double> values;
  std::vector<std::string> fields;
  std::size_t n = 0;
  std::size_t row = 1;  // header is row 1
  while (read_record(in, fields)) {
    ++row;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;  // blank line
    if (fields.size() != width)
      fail("'" + path + "': row " + std::to_string(row) + " has " +
           std::to_string(fields.size()) + " cells, expected " + std::to_string(width));
    for (std::size_t c = 0; c < width; ++c)
      values.push_back(parse_cell(trim(fields[c]), row, header[c]));
    ++n;
  }
  if (n == 0) fail("'" + path + "': no data rows");

  Dataset out;
  out.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width - 1));
  out.outcomes.resize(static_cast<Eigen::Index>(n));
  out.outcome_name = outcome_column;
  for (std::size_t c = 0; c < width; ++c)
    if (static_cast<int>(c) != outcome_idx) out.column_names.push_back(header[c]);
  for (std::size_t r = 0; r < n; ++r) {
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const double v = values[r * width + c];
      if (static_cast<int>(c) == outcome_idx)
        out.outcomes[static_cast<Eigen::Index>(r)] = v;
      else
        out.covariates(static_cast<Eigen::Index>(r), k++) = v;
    }
  }
  out.validate();
  return out;
}

std::pair<Dataset, ScalingInfo> standardize(const Dataset& data) {
  data.validate();
  const Eigen::Index n = data.rows();
  const Eigen::Index d = data.dim();
  if (n < 2) fail("standardize: need at least 2 rows");

  ScalingInfo info;
  info.means.resize(d + 1);
  info.scales.resize(d + 1);
  info.columns = data.column_names;
  info.columns.push_back(data.outcome_name);

  Dataset out = data;
  const double denom = static_cast<double>(n - 1);
  auto scale_column = [&](Eigen::Ref<Eigen::VectorXd> col, Eigen::Index c) {
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / denom);
    if (sd == 0.0)
      fail("standardize: column '" + info.columns[static_cast<std::size_t>(c)] +
           "' is constant");
    info.means[c] = mean;
    info.scales[c] = sd;
    col = (col.array() - mean) / sd;
  };
  for (Eigen::Index c = 0; c < d; ++c) scale_column(out.covariates.col(c), c);
  scale_column(out.outcomes, d);
  return {std::move(out), std::move(info)};
}

Dataset unstandardize(const Dataset& data, const ScalingInfo& scaling) {
  data.validate();
  const Eigen::Index d = data.dim();
  if (scaling.means.size() != d + 1 || scaling.scales.size() != d + 1)
    fail("unstandardize: scaling has " + std::to_string(scaling.means.size()) +
         " columns, dataset needs " + std::to_string(d + 1));
  Dataset out = data;
  for (Eigen::Index c = 0; c < d; ++c)
    out.covariates.col(c) = data.covariates.col(c).array() * scaling.scales[c] + scaling.means[c];
  out.outcomes = data.outcomes.array() * scaling.scales[d] + scaling.means[d];
  return out;
}

nlohmann::json ScalingInfo::to_json() const {
  nlohmann::json j;
  j["means"] = std::vector<double>(means.begin(), means.end());
  j["scales"] = std::vector<double>(scales.begin(), scales.end());
  j["columns"] = columns;
  return j;
}

ScalingInfo ScalingInfo::from_json(const nlohmann::json& j) {
  ScalingInfo info;
  const auto means = j.at("means").get<std::vector<double>>();
  const auto scales = j.at("scales").get<std::vector<double>>();
  info.columns = j.at("columns").get<std::vector<std::string>>();
  if (means.size() != scales.size() || means.size() != info.columns.size())
    fail("scaling json: means/scales/columns lengths disagree");
  info.means = Eigen::Map<const Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  info.scales = Eigen::Map<const Eigen::VectorXd>(scales.data(), static_cast<Eigen::Index>(scales.size()));
  for (double s : scales)
    if (!(s > 0.0)) fail("scaling json: scales must be positive");
  return info;
}

void save_csv(const Dataset& data, const std::string& path) {
  data.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write '" + path + "'");
  out.precision(17);
  for (std::size_t c = 0; c < data.column_names.size(); ++c)
    out << data.column_names[c] << ',';
  out << data.outcome_name << '\n';
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.dim(); ++c) out << data.covariates(r, c) << ',';
    out << data.outcomes[r] << '\n';
  }
}

std::uint64_t dataset_checksum(const Dataset& data) {
  std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
  auto mix = [&h](const double* p, std::size_t count) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < count * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  // Row-major walk so the hash is independent of Eigen's storage order.
  for (Eigen::Index r = 0; r < data.rows(); ++r)
    for (Eigen::Index c = 0; c < data.dim(); ++c) {
      const double v = data.covariates(r, c);
      mix(&v, 1);
    }
  mix(data.outcomes.data(), static_cast<std::size_t>(data.outcomes.size()));
  return h;
}

}  // namespace intervene
