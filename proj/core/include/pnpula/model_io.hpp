#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>

#include "pnpula/forward.hpp"
#include "pnpula/gmm.hpp"

namespace pnpula {

// GMM file:
//   {"dimension": d,
//    "components": [{"weight": w, "mean": [...], "covariance": [...]}, ...]}
// covariance is row-major, either flat (d*d numbers) or nested rows, and must
// be symmetric within 1e-10.
GaussianMixture gmm_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GaussianMixture& mixture);
GaussianMixture load_gmm(const std::filesystem::path& path);

// Forward-model file: {"matrix": row-major m x d (nested rows, or flat with
// "rows"/"cols"), "sigma": s}.
LinearForwardModel forward_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LinearForwardModel& fwd);
LinearForwardModel load_forward(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

// Row-major matrix parsing shared by the model files.
Matrix matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols);
Vector vector_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Vector& v);
nlohmann::json matrix_to_json(const Matrix& m);

}  // namespace pnpula
