#include "slv/score_matrix.h"

#include <cmath>

#include "slv/error.h"

namespace slv {

ScoreMatrix::ScoreMatrix(std::size_t rows, std::size_t cols, double fill,
                         Normalization tag)
    : rows_(rows), cols_(cols), tag_(tag), data_(rows * cols, fill) {}

ScoreMatrix::ScoreMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> values, Normalization tag)
    : rows_(rows), cols_(cols), tag_(tag), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw InputError("ScoreMatrix: expected " + std::to_string(rows * cols) +
                     " values, got " + std::to_string(data_.size()));
  }
}

std::vector<double> ScoreMatrix::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

ScoreMatrix ScoreMatrix::transpose() const {
  ScoreMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  switch (tag_) {
    case Normalization::kOverClasses: t.tag_ = Normalization::kOverProposals; break;
    case Normalization::kOverProposals: t.tag_ = Normalization::kOverClasses; break;
    default: t.tag_ = tag_; break;
  }
  return t;
}

ScoreMatrix ScoreMatrix::top_rows(std::size_t n) const {
  if (n > rows_) throw InputError("ScoreMatrix::top_rows: not enough rows");
  ScoreMatrix out(n, cols_, std::vector<double>(data_.begin(),
                                                data_.begin() + n * cols_));
  out.tag_ = tag_ == Normalization::kRaw ? Normalization::kRaw
                                         : Normalization::kProbability;
  return out;
}

bool ScoreMatrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool ScoreMatrix::satisfies_tag(double tol) const {
  if (tag_ == Normalization::kRaw) return all_finite();
  for (double v : data_) {
    if (!(v >= -tol && v <= 1.0 + tol)) return false;
  }
  if (tag_ == Normalization::kOverClasses) {
    for (std::size_t c = 0; c < cols_; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows_; ++r) s += (*this)(r, c);
      if (std::abs(s - 1.0) > tol) return false;
    }
  } else if (tag_ == Normalization::kOverProposals) {
    for (std::size_t r = 0; r < rows_; ++r) {
      double s = 0.0;
      for (double v : row(r)) s += v;
      if (std::abs(s - 1.0) > tol) return false;
    }
  }
  return true;
}

}  // namespace slv
