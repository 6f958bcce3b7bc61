#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "pnpula/linalg.hpp"

namespace pnpula {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Ordered collection of d-dimensional points (one per row) with the chain
// step each was recorded at and a free-form provenance record.
class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(int dimension) : points_(0, dimension) {}
  SampleSet(RowMatrix points, std::vector<std::uint64_t> steps, nlohmann::json meta = {});

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  int dimension() const { return static_cast<int>(points_.cols()); }
  bool empty() const { return points_.rows() == 0; }

  Vector point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }
  auto row(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)); }

  const RowMatrix& points() const { return points_; }
  const std::vector<std::uint64_t>& steps() const { return steps_; }

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  // Rows selected by `indices`, steps carried along, meta copied.
  SampleSet subset(const std::vector<std::size_t>& indices) const;

  bool operator==(const SampleSet& other) const;

 private:
  RowMatrix points_;
  std::vector<std::uint64_t> steps_;
  nlohmann::json meta_;
};

// CSV with header `step,x_0,...,x_{d-1}`; doubles in shortest round-trip form.
std::string render_samples_csv(const SampleSet& samples);
void write_samples_csv(const SampleSet& samples, const std::filesystem::path& path);
SampleSet read_samples_csv(const std::filesystem::path& path);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace pnpula
