#include "pnpula/model_io.hpp"

#include <fstream>
#include <string>

#include "pnpula/errors.hpp"

namespace pnpula {

namespace {

std::vector<double> flatten_rows(const nlohmann::json& j) {
  std::vector<double> flat;
  if (!j.is_array()) throw ConfigError("expected an array for a matrix");
  for (const auto& e : j) {
    if (e.is_array()) {
      for (const auto& v : e) flat.push_back(v.get<double>());
    } else {
      flat.push_back(e.get<double>());
    }
  }
  return flat;
}

template <class F>
auto with_context(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  const auto flat = flatten_rows(j);
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw DimensionError("matrix has " + std::to_string(flat.size()) + " entries, expected " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = flat[static_cast<std::size_t>(i * cols + k)];
  }
  return m;
}

Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

GaussianMixture gmm_from_json(const nlohmann::json& j) {
  return with_context("GMM specification", [&] {
    if (!j.contains("components")) throw ConfigError("GMM specification: missing 'components'");
    const auto& comps = j.at("components");
    if (!comps.is_array() || comps.empty()) {
      throw ConfigError("GMM specification: 'components' must be a nonempty array");
    }
    const int d = j.contains("dimension") ? j.at("dimension").get<int>()
                                          : static_cast<int>(comps.front().at("mean").size());
    if (d <= 0) throw ConfigError("GMM specification: dimension must be positive");
    std::vector<GaussianComponent> out;
    for (const auto& c : comps) {
      GaussianComponent g;
      g.weight = c.at("weight").get<double>();
      g.mean = vector_from_json(c.at("mean"));
      if (g.mean.size() != d) throw DimensionError("GMM specification: mean dimension mismatch");
      g.covariance = matrix_from_json(c.at("covariance"), d, d);
      if (((g.covariance - g.covariance.transpose()).cwiseAbs().array() > 1e-10).any()) {
        throw ConfigError("GMM specification: covariance not symmetric within 1e-10");
      }
      out.push_back(std::move(g));
    }
    return GaussianMixture(std::move(out));
  });
}

nlohmann::json to_json(const GaussianMixture& mixture) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : mixture.components()) {
    std::vector<double> flat;
    for (Eigen::Index i = 0; i < c.covariance.rows(); ++i) {
      for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) flat.push_back(c.covariance(i, k));
    }
    comps.push_back({{"weight", c.weight}, {"mean", to_json(c.mean)}, {"covariance", flat}});
  }
  return {{"dimension", mixture.dimension()}, {"components", comps}};
}

LinearForwardModel forward_from_json(const nlohmann::json& j) {
  return with_context("forward-model specification", [&] {
    const auto& mj = j.at("matrix");
    Eigen::Index rows = 0, cols = 0;
    if (j.contains("rows") && j.contains("cols")) {
      rows = j.at("rows").get<Eigen::Index>();
      cols = j.at("cols").get<Eigen::Index>();
    } else {
      if (!mj.is_array() || mj.empty() || !mj.front().is_array()) {
        throw ConfigError("forward-model specification: flat 'matrix' needs 'rows' and 'cols'");
      }
      rows = static_cast<Eigen::Index>(mj.size());
      cols = static_cast<Eigen::Index>(mj.front().size());
      for (const auto& r : mj) {
        if (static_cast<Eigen::Index>(r.size()) != cols) {
          throw DimensionError("forward-model specification: ragged matrix rows");
        }
      }
    }
    return LinearForwardModel(matrix_from_json(mj, rows, cols), j.at("sigma").get<double>());
  });
}

nlohmann::json to_json(const LinearForwardModel& fwd) {
  return {{"matrix", matrix_to_json(fwd.matrix())}, {"sigma", fwd.sigma()}};
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

GaussianMixture load_gmm(const std::filesystem::path& path) {
  return gmm_from_json(read_json_file(path));
}

LinearForwardModel load_forward(const std::filesystem::path& path) {
  return forward_from_json(read_json_file(path));
}

}  // namespace pnpula
