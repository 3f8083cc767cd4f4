#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace gridfuse {

/// Dense rows x cols cost matrix with per-entry gating.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& at(std::size_t r, std::size_t c) { return costs_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return costs_[r * cols_ + c]; }

  void forbid(std::size_t r, std::size_t c) { forbidden_[r * cols_ + c] = 1; }
  bool forbidden(std::size_t r, std::size_t c) const {
    return forbidden_[r * cols_ + c] != 0;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> costs_;
  std::vector<std::uint8_t> forbidden_;
};

struct Assignment {
  /// (row, col) pairs sorted by row.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_cost = 0.0;
};

/// Maximum-cardinality assignment over the allowed entries with minimal total
/// cost. Among equal optima the lexicographically smallest pair list wins.
/// Throws InvalidArgument for a negative or non-finite allowed cost.
Assignment hungarian_assign(const CostMatrix& m);

}  // namespace gridfuse
