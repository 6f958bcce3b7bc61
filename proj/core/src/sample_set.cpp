#include "pnpula/sample_set.hpp"

#include <charconv>
#include <fstream>
#include <string>

#include "pnpula/errors.hpp"

namespace pnpula {

SampleSet::SampleSet(RowMatrix points, std::vector<std::uint64_t> steps, nlohmann::json meta)
    : points_(std::move(points)), steps_(std::move(steps)), meta_(std::move(meta)) {
  if (steps_.empty()) {
    steps_.resize(static_cast<std::size_t>(points_.rows()));
    for (std::size_t i = 0; i < steps_.size(); ++i) steps_[i] = i;
  }
  if (steps_.size() != static_cast<std::size_t>(points_.rows())) {
    throw DimensionError("SampleSet: step count does not match point count");
  }
}

SampleSet SampleSet::subset(const std::vector<std::size_t>& indices) const {
  RowMatrix pts(static_cast<Eigen::Index>(indices.size()), points_.cols());
  std::vector<std::uint64_t> steps(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= size()) throw DimensionError("SampleSet::subset: index out of range");
    pts.row(static_cast<Eigen::Index>(k)) = points_.row(static_cast<Eigen::Index>(indices[k]));
    steps[k] = steps_[indices[k]];
  }
  return SampleSet(std::move(pts), std::move(steps), meta_);
}

bool SampleSet::operator==(const SampleSet& other) const {
  return points_.rows() == other.points_.rows() && points_.cols() == other.points_.cols() &&
         points_ == other.points_ && steps_ == other.steps_ && meta_ == other.meta_;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view field, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": bad number '" +
                  std::string(field) + "'");
  }
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::string render_samples_csv(const SampleSet& samples) {
  std::string out = "step";
  for (int j = 0; j < samples.dimension(); ++j) out += ",x_" + std::to_string(j);
  out += '\n';
  const auto& pts = samples.points();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out += std::to_string(samples.steps()[i]);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      out += ',';
      out += format_double(pts(static_cast<Eigen::Index>(i), j));
    }
    out += '\n';
  }
  return out;
}

void write_samples_csv(const SampleSet& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << render_samples_csv(samples);
  if (!out) throw IoError("write failed: " + path.string());
}

SampleSet read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty sample file: " + path.string());
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "step") {
    throw IoError(path.string() + ": header must start with 'step'");
  }
  const int dim = static_cast<int>(header.size()) - 1;
  std::vector<double> values;
  std::vector<std::uint64_t> steps;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (static_cast<int>(fields.size()) != dim + 1) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": wrong field count");
    }
    std::uint64_t step = 0;
    const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), step);
    if (res.ec != std::errc()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad step index");
    }
    steps.push_back(step);
    for (int j = 1; j <= dim; ++j) values.push_back(parse_double(fields[j], path, line_no));
  }
  RowMatrix pts(static_cast<Eigen::Index>(steps.size()), dim);
  if (!values.empty()) {
    pts = Eigen::Map<const RowMatrix>(values.data(), static_cast<Eigen::Index>(steps.size()), dim);
  }
  return SampleSet(std::move(pts), std::move(steps));
}

}  // namespace pnpula
