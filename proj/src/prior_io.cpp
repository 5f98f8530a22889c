#include "motionseg/prior_io.hpp"

#include "motionseg/errors.hpp"

#include <fstream>

namespace motionseg {

nlohmann::json prior_to_json(const MotionPrior& prior) {
  nlohmann::json mu = nlohmann::json::array();
  for (Index i = 0; i < prior.mean.size(); ++i) mu.push_back(prior.mean[i]);
  nlohmann::json cov = nlohmann::json::array();
  for (Index r = 0; r < prior.cov.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Index c = 0; c < prior.cov.cols(); ++c) row.push_back(prior.cov(r, c));
    cov.push_back(row);
  }
  return {{"kind", to_string(prior.kind)}, {"mu", mu}, {"cov", cov}, {"noise_var", prior.noise_var}};
}

MotionPrior prior_from_json(const nlohmann::json& j) {
  MotionPrior p;
  try {
    p.kind = parse_motion_model(j.at("kind").get<std::string>());
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto cov = j.at("cov").get<std::vector<std::vector<double>>>();
    p.noise_var = j.at("noise_var").get<double>();
    const auto d = static_cast<size_t>(parameter_count(p.kind));
    if (mu.size() != d || cov.size() != d) throw FormatError("prior dimensions do not match its kind");
    p.mean = Vector(static_cast<Index>(d));
    p.cov = Eigen::MatrixXd(static_cast<Index>(d), static_cast<Index>(d));
    for (size_t r = 0; r < d; ++r) {
      p.mean[static_cast<Index>(r)] = mu[r];
      if (cov[r].size() != d) throw FormatError("prior covariance is not square");
      for (size_t c = 0; c < d; ++c) p.cov(static_cast<Index>(r), static_cast<Index>(c)) = cov[r][c];
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed prior: ") + e.what());
  }
  p.validate();
  return p;
}

void write_prior(const MotionPrior& prior, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError(file.string() + ": cannot open for writing");
  out << prior_to_json(prior).dump(2) << "\n";
}

MotionPrior read_prior(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError(file.string() + ": cannot open prior file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  try {
    return prior_from_json(j);
  } catch (const FormatError& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

}  // namespace motionseg
