#include "coe/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace coe {

using nlohmann::json;

void save_params(const std::string& path, const ParamMap& params) {
  json j;
  for (const auto& [name, m] : params) {
    std::vector<Scalar> values;
    values.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) values.push_back(m(i, k));
    j[name] = {{"shape", {m.rows(), m.cols()}}, {"values", values}};
  }
  std::ofstream out(path);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

ParamMap load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": missing file");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  ParamMap out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto shape = it.value().at("shape").get<std::vector<Eigen::Index>>();
    const auto values = it.value().at("values").get<std::vector<Scalar>>();
    if (shape.size() != 2 || static_cast<Eigen::Index>(values.size()) != shape[0] * shape[1])
      throw ValidationError(path + ": shape/value mismatch for '" + it.key() + "'");
    Matrix m(shape[0], shape[1]);
    std::size_t t = 0;
    for (Eigen::Index i = 0; i < shape[0]; ++i)
      for (Eigen::Index k = 0; k < shape[1]; ++k) m(i, k) = values[t++];
    out[it.key()] = std::move(m);
  }
  return out;
}

}  // namespace coe
