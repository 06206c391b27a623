#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace slv {

// Which axis, if any, a ScoreMatrix is normalized over.
enum class Normalization {
  kRaw,            // logits or unconstrained values
  kOverClasses,    // every column sums to 1
  kOverProposals,  // every row sums to 1
  kProbability,    // entries in [0,1], no sum constraint
};

// Dense rows x cols grid of scores, rows = classes (optionally plus a
// trailing background row), cols = proposals. Row-major storage.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::size_t rows, std::size_t cols, double fill = 0.0,
              Normalization tag = Normalization::kRaw);
  ScoreMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
              Normalization tag = Normalization::kRaw);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Normalization tag() const { return tag_; }
  void set_tag(Normalization tag) { tag_ = tag; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::vector<double> column(std::size_t c) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  ScoreMatrix transpose() const;
  // First n rows, e.g. the foreground block of a (C+1)-row matrix.
  ScoreMatrix top_rows(std::size_t n) const;

  bool same_shape(const ScoreMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  // Checks the tag's sum and range constraints within tol.
  bool satisfies_tag(double tol = 1e-9) const;

  friend bool operator==(const ScoreMatrix& a, const ScoreMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Normalization tag_ = Normalization::kRaw;
  std::vector<double> data_;
};

}  // namespace slv
