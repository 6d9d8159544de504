#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace ordlab {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SegmentInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;  // 1 for 1-D segments
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool is_matrix() const { return rows > 1 && cols > 1; }
};

// Single source of truth for layer names and the canonical flattening order.
class SegmentRegistry {
 public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw std::invalid_argument("duplicate segment: " + name);
    SegmentInfo info{std::move(name), total_, rows, cols};
    index_[info.name] = segments_.size();
    total_ += info.size();
    segments_.push_back(std::move(info));
    return segments_.size() - 1;
  }

  const SegmentInfo& at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("unknown segment: " + std::string(name));
    return segments_[it->second];
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }
  const std::vector<SegmentInfo>& segments() const { return segments_; }
  std::size_t total_size() const { return total_; }

  bool operator==(const SegmentRegistry& o) const {
    if (total_ != o.total_ || segments_.size() != o.segments_.size()) return false;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto& a = segments_[i];
      const auto& b = o.segments_[i];
      if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

 private:
  std::vector<SegmentInfo> segments_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

using RegistryPtr = std::shared_ptr<const SegmentRegistry>;

// Flattened model parameters / gradients with named per-layer views.
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(RegistryPtr reg)
      : reg_(std::move(reg)), data_(reg_->total_size(), 0.0) {}

  const RegistryPtr& registry() const { return reg_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  std::span<double> segment(std::string_view name) {
    const auto& s = reg_->at(name);
    return {data_.data() + s.offset, s.size()};
  }
  std::span<const double> segment(std::string_view name) const {
    const auto& s = reg_->at(name);
    return {data_.data() + s.offset, s.size()};
  }

  Eigen::Map<MatrixRM> matrix(std::string_view name) {
    const auto& s = reg_->at(name);
    return {data_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
            static_cast<Eigen::Index>(s.cols)};
  }
  Eigen::Map<const MatrixRM> matrix(std::string_view name) const {
    const auto& s = reg_->at(name);
    return {data_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
            static_cast<Eigen::Index>(s.cols)};
  }

  Eigen::Map<Eigen::VectorXd> as_eigen() {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }
  Eigen::Map<const Eigen::VectorXd> as_eigen() const {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  double dot(const ParameterVector& o) const {
    check_same(o);
    double acc = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) acc += data_[i] * o.data_[i];
    return acc;
  }

  double squared_norm() const {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return acc;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  // this += alpha * o
  void axpy(double alpha, const ParameterVector& o) {
    check_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * o.data_[i];
  }

  void scale(double alpha) {
    for (double& v : data_) v *= alpha;
  }

  ParameterVector& operator+=(const ParameterVector& o) {
    axpy(1.0, o);
    return *this;
  }
  ParameterVector& operator-=(const ParameterVector& o) {
    axpy(-1.0, o);
    return *this;
  }

  friend ParameterVector operator-(ParameterVector a, const ParameterVector& b) {
    a -= b;
    return a;
  }
  friend ParameterVector operator+(ParameterVector a, const ParameterVector& b) {
    a += b;
    return a;
  }

  bool operator==(const ParameterVector& o) const { return data_ == o.data_; }

 private:
  void check_same(const ParameterVector& o) const {
    if (data_.size() != o.data_.size())
      throw std::invalid_argument("parameter vector size mismatch");
  }

  RegistryPtr reg_;
  std::vector<double> data_;
};

inline double segment_squared_norm(std::span<const double> seg) {
  double acc = 0.0;
  for (double v : seg) acc += v * v;
  return acc;
}

// cos(a, b) over raw spans; NaN when either norm is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

inline double cosine(const ParameterVector& a, const ParameterVector& b) {
  return cosine(a.flat(), b.flat());
}

}  // namespace ordlab
