#pragma once

#include "popdmp/filter.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace popdmp {

inline constexpr std::size_t kMaxGridDim = 16;
inline constexpr std::size_t kMaxGridPoints = 10'000'000;

/// Vertices and barycentric weights of the grid simplex containing a belief.
struct Stencil {
  std::array<std::uint32_t, kMaxGridDim> index{};
  std::array<double, kMaxGridDim> weight{};
  std::size_t size = 0;
};

/// Regular grid on the probability simplex over d states with K subdivisions,
/// triangulated by the Freudenthal (Kuhn) scheme in cumulative coordinates
/// x_j = K * sum_{i>j} rho_i.
class SimplexGrid {
 public:
  SimplexGrid(std::size_t d, std::size_t K);

  std::size_t dim() const { return d_; }
  std::size_t subdivisions() const { return K_; }
  std::size_t size() const { return count_; }

  std::span<const double> point(std::size_t i) const {
    return std::span<const double>(points_).subspan(i * d_, d_);
  }
  Belief belief(std::size_t i) const { return Belief(std::vector<double>(point(i).begin(), point(i).end())); }

  /// Rank of a composition (n_1..n_d, sum K) in the grid ordering.
  std::size_t index_of(std::span<const int> composition) const;

  Stencil locate(std::span<const double> rho) const;
  Stencil locate(const Belief& rho) const { return locate(rho.span()); }

  /// Grid vertex carrying the largest barycentric weight.
  std::size_t nearest(std::span<const double> rho) const;

  /// Every simplex of the triangulation as a list of d vertex indices.
  std::vector<std::vector<std::size_t>> simplices() const;

 private:
  std::uint64_t binom(std::size_t n, std::size_t k) const;

  std::size_t d_;
  std::size_t K_;
  std::size_t count_;
  std::vector<std::uint64_t> binom_;  // (K + d + 1) x (d + 1)
  std::vector<double> points_;
};

/// Value function sampled on a simplex grid, with the argmin candidate per point.
struct ValueGrid {
  std::shared_ptr<const SimplexGrid> grid;
  std::vector<double> values;
  std::vector<std::int32_t> argmins;

  static ValueGrid constant(std::shared_ptr<const SimplexGrid> grid, double value);
};

/// Barycentric interpolation within the containing grid simplex.
double interpolate(const ValueGrid& v, const Belief& rho);
double interpolate(const ValueGrid& v, std::span<const double> rho);

}  // namespace popdmp
