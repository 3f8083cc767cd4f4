#include "gridfuse/assignment.hpp"

#include "gridfuse/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace gridfuse {

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows),
      cols_(cols),
      costs_(rows * cols, fill),
      forbidden_(rows * cols, 0) {}

namespace {

// Lexicographic cost: number of unmatched endpoints first, then the sum of
// real costs. Keeps maximum cardinality without a sentinel magnitude.
struct Lex {
  long long count = 0;
  double value = 0.0;

  Lex operator+(const Lex& o) const { return {count + o.count, value + o.value}; }
  Lex operator-(const Lex& o) const { return {count - o.count, value - o.value}; }
  Lex& operator+=(const Lex& o) { return *this = *this + o; }
  Lex& operator-=(const Lex& o) { return *this = *this - o; }
  bool operator<(const Lex& o) const {
    return count != o.count ? count < o.count : value < o.value;
  }
};

constexpr Lex kInf{std::numeric_limits<long long>::max() / 4, 0.0};

// Padded square problem. Rows [0, R) are real, rows [R, R+C) are the private
// dummy rows of each real column. Columns [0, C) are real, columns
// [C, C+R) are the private dummy columns of each real row.
class Padded {
 public:
  explicit Padded(const CostMatrix& m) : m_(m), r_(m.rows()), c_(m.cols()) {}

  std::size_t size() const { return r_ + c_; }

  bool allowed(std::size_t i, std::size_t j) const {
    if (i < r_) {
      if (j < c_) return !m_.forbidden(i, j);
      return j - c_ == i;
    }
    if (j < c_) return i - r_ == j;
    return true;
  }

  Lex cost(std::size_t i, std::size_t j) const {
    if (i < r_ && j < c_) return {0, m_.at(i, j)};
    if (i >= r_ && j >= c_) return {0, 0.0};
    return {1, 0.0};
  }

 private:
  const CostMatrix& m_;
  std::size_t r_;
  std::size_t c_;
};

struct Solution {
  std::vector<std::size_t> row_to_col;
  std::vector<Lex> u;
  std::vector<Lex> v;
};

// Shortest augmenting path Hungarian method with row and column potentials.
Solution solve(const Padded& a) {
  const std::size_t n = a.size();
  std::vector<Lex> u(n + 1), v(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<Lex> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      Lex delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        if (a.allowed(i0 - 1, j - 1)) {
          const Lex cur = a.cost(i0 - 1, j - 1) - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 == 0) throw InvariantViolation("assignment: no perfect matching");
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else if (minv[j].count < kInf.count / 2) {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Solution s;
  s.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) s.row_to_col[p[j] - 1] = j - 1;
  s.u.assign(u.begin() + 1, u.end());
  s.v.assign(v.begin() + 1, v.end());
  return s;
}

// Every optimal matching lives on the zero reduced-cost edges of an optimal
// dual. Rows are fixed one at a time to their smallest feasible column; a
// choice is feasible when the remaining rows can be re-routed along an
// alternating path.
class TieBreaker {
 public:
  TieBreaker(const Padded& a, Solution s, double tol)
      : n_(a.size()), row_to_col_(std::move(s.row_to_col)),
        col_to_row_(n_), fixed_(n_, 0), tight_(n_ * n_, 0) {
    for (std::size_t i = 0; i < n_; ++i) {
      col_to_row_[row_to_col_[i]] = i;
      for (std::size_t j = 0; j < n_; ++j) {
        if (!a.allowed(i, j)) continue;
        const Lex red = a.cost(i, j) - s.u[i] - s.v[j];
        tight_[i * n_ + j] = red.count == 0 && std::abs(red.value) <= tol;
      }
    }
  }

  // Moves row i onto column j if the rest of the matching can adapt.
  bool try_fix(std::size_t i, std::size_t j) {
    if (!tight_[i * n_ + j]) return false;
    const std::size_t old_col = row_to_col_[i];
    if (old_col == j) {
      fixed_[i] = 1;
      return true;
    }
    const std::size_t k = col_to_row_[j];
    if (fixed_[k]) return false;
    // Row k must move to some column, ending at old_col, without touching
    // fixed rows or column j.
    std::vector<std::size_t> prev_row(n_, n_);
    std::vector<char> seen_col(n_, 0);
    seen_col[j] = 1;
    std::deque<std::size_t> queue{k};
    std::size_t end_col = n_;
    while (!queue.empty() && end_col == n_) {
      const std::size_t r = queue.front();
      queue.pop_front();
      for (std::size_t c = 0; c < n_; ++c) {
        if (seen_col[c] || !tight_[r * n_ + c]) continue;
        seen_col[c] = 1;
        prev_row[c] = r;
        if (c == old_col) {
          end_col = c;
          break;
        }
        const std::size_t owner = col_to_row_[c];
        if (!fixed_[owner] && owner != i) queue.push_back(owner);
      }
    }
    if (end_col == n_) return false;
    std::size_t c = end_col;
    while (true) {
      const std::size_t r = prev_row[c];
      const std::size_t next = row_to_col_[r];
      row_to_col_[r] = c;
      col_to_row_[c] = r;
      if (r == k) break;
      c = next;
    }
    row_to_col_[i] = j;
    col_to_row_[j] = i;
    fixed_[i] = 1;
    return true;
  }

  std::size_t col_of(std::size_t i) const { return row_to_col_[i]; }

 private:
  std::size_t n_;
  std::vector<std::size_t> row_to_col_;
  std::vector<std::size_t> col_to_row_;
  std::vector<char> fixed_;
  std::vector<char> tight_;
};

}  // namespace

Assignment hungarian_assign(const CostMatrix& m) {
  double scale = 1.0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (m.forbidden(r, c)) continue;
      const double x = m.at(r, c);
      if (!std::isfinite(x) || x < 0.0) {
        throw InvalidArgument("hungarian_assign: costs must be finite and >= 0");
      }
      scale = std::max(scale, x);
    }
  }
  Assignment out;
  const Padded padded(m);
  if (padded.size() == 0) return out;

  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  const double tol = 1e-10 * scale * static_cast<double>(padded.size());
  TieBreaker tb(padded, solve(padded), tol);
  for (std::size_t i = 0; i < rows; ++i) {
    bool placed = false;
    for (std::size_t j = 0; j < cols && !placed; ++j) {
      placed = tb.try_fix(i, j);
    }
    if (!placed && !tb.try_fix(i, cols + i)) {
      throw InvariantViolation("assignment: tie-break lost optimality");
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = tb.col_of(i);
    if (j < cols) {
      out.pairs.emplace_back(i, j);
      out.total_cost += m.at(i, j);
    }
  }
  return out;
}

}  // namespace gridfuse
