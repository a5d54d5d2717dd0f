#include "popdmp/simplex_grid.hpp"

#include "popdmp/error.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <numeric>

namespace popdmp {

namespace {

// Composition from cumulative coordinates c (length d-1); false if outside the simplex.
bool to_composition(std::span<const int> c, int K, std::span<int> n) {
  const std::size_t m = c.size();
  if (m == 0) {
    n[0] = K;
    return true;
  }
  n[0] = K - c[0];
  for (std::size_t i = 1; i < m; ++i) n[i] = c[i - 1] - c[i];
  n[m] = c[m - 1];
  return std::all_of(n.begin(), n.begin() + static_cast<std::ptrdiff_t>(m + 1), [](int v) { return v >= 0; });
}

}  // namespace

SimplexGrid::SimplexGrid(std::size_t d, std::size_t K) : d_(d), K_(K) {
  if (d < 1 || K < 1) throw ConfigError("simplex grid needs d >= 1 and K >= 1");
  if (d > kMaxGridDim) throw ConfigError("simplex grid supports at most 16 states");
  long double count = 1.0L;
  for (std::size_t i = 1; i < d; ++i)
    count = count * static_cast<long double>(K + i) / static_cast<long double>(i);
  if (count > static_cast<long double>(kMaxGridPoints))
    throw ConfigError("simplex grid would have more than 1e7 points");
  count_ = static_cast<std::size_t>(std::llround(count));

  const std::size_t rows = K + d + 1, cols = d + 1;
  binom_.assign(rows * cols, 0);
  for (std::size_t n = 0; n < rows; ++n) {
    binom_[n * cols] = 1;
    for (std::size_t k = 1; k <= std::min(n, d); ++k)
      binom_[n * cols + k] = binom_[(n - 1) * cols + k - 1] + (k <= n - 1 ? binom_[(n - 1) * cols + k] : 0);
  }

  points_.reserve(count_ * d);
  std::vector<int> n(d, 0);
  // Lexicographic enumeration of (n_1..n_{d-1}); n_d takes the remainder.
  auto emit = [&]() {
    for (std::size_t i = 0; i < d; ++i) points_.push_back(static_cast<double>(n[i]) / static_cast<double>(K));
  };
  if (d == 1) {
    n[0] = static_cast<int>(K);
    emit();
  } else {
    std::function<void(std::size_t, int)> rec = [&](std::size_t i, int rem) {
      if (i == d - 1) {
        n[i] = rem;
        emit();
        return;
      }
      for (int v = 0; v <= rem; ++v) {
        n[i] = v;
        rec(i + 1, rem - v);
      }
    };
    rec(0, static_cast<int>(K));
  }
}

std::uint64_t SimplexGrid::binom(std::size_t n, std::size_t k) const {
  if (k > n) return 0;
  return binom_[n * (d_ + 1) + k];
}

std::size_t SimplexGrid::index_of(std::span<const int> composition) const {
  std::size_t rank = 0;
  std::size_t rem = K_;
  for (std::size_t i = 0; i + 1 < d_; ++i) {
    const std::size_t p = d_ - 1 - i;  // parts left after fixing n_i
    const auto ni = static_cast<std::size_t>(composition[i]);
    // sum_{j<ni} C(rem - j + p - 1, p - 1) = C(rem + p, p) - C(rem - ni + p, p)
    rank += binom(rem + p, p) - binom(rem - ni + p, p);
    rem -= ni;
  }
  return rank;
}

Stencil SimplexGrid::locate(std::span<const double> rho) const {
  Stencil st;
  if (d_ == 1) {
    st.index[0] = 0;
    st.weight[0] = 1.0;
    st.size = 1;
    return st;
  }
  const std::size_t m = d_ - 1;
  const double K = static_cast<double>(K_);
  std::array<double, kMaxGridDim> x{}, frac{};
  std::array<int, kMaxGridDim> base{}, c{}, comp{};
  std::array<std::size_t, kMaxGridDim> order{};
  double tail = 0.0;
  for (std::size_t j = m; j-- > 0;) {
    tail += rho[j + 1];
    x[j] = std::clamp(K * tail, 0.0, K);
  }
  for (std::size_t j = 0; j < m; ++j) {
    base[j] = std::min(static_cast<int>(std::floor(x[j])), static_cast<int>(K_) - 1);
    frac[j] = x[j] - base[j];
    order[j] = j;
  }
  std::stable_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });

  std::copy(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(m), c.begin());
  for (std::size_t k = 0; k <= m; ++k) {
    if (k > 0) ++c[order[k - 1]];
    double w;
    if (k == 0)
      w = 1.0 - frac[order[0]];
    else if (k == m)
      w = frac[order[m - 1]];
    else
      w = frac[order[k - 1]] - frac[order[k]];
    if (w <= 0.0) continue;
    if (!to_composition(std::span<const int>(c.data(), m), static_cast<int>(K_),
                        std::span<int>(comp.data(), d_)))
      throw ModelError("belief lies outside the simplex grid");
    st.index[st.size] = static_cast<std::uint32_t>(index_of(std::span<const int>(comp.data(), d_)));
    st.weight[st.size] = w;
    ++st.size;
  }
  return st;
}

std::size_t SimplexGrid::nearest(std::span<const double> rho) const {
  Stencil st = locate(rho);
  std::size_t best = 0;
  for (std::size_t k = 1; k < st.size; ++k)
    if (st.weight[k] > st.weight[best]) best = k;
  return st.index[best];
}

std::vector<std::vector<std::size_t>> SimplexGrid::simplices() const {
  std::vector<std::vector<std::size_t>> out;
  if (d_ == 1) {
    out.push_back({0});
    return out;
  }
  const std::size_t m = d_ - 1;
  std::vector<int> base(m, 0), c(m), comp(d_);
  std::vector<std::size_t> perm(m);
  while (true) {
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<std::size_t> verts;
      c = base;
      bool ok = to_composition(c, static_cast<int>(K_), comp);
      if (ok) verts.push_back(index_of(comp));
      for (std::size_t k = 0; ok && k < m; ++k) {
        ++c[perm[k]];
        ok = to_composition(c, static_cast<int>(K_), comp);
        if (ok) verts.push_back(index_of(comp));
      }
      if (ok) out.push_back(std::move(verts));
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::size_t j = 0;
    while (j < m && ++base[j] == static_cast<int>(K_)) base[j++] = 0;
    if (j == m) break;
  }
  return out;
}

ValueGrid ValueGrid::constant(std::shared_ptr<const SimplexGrid> grid, double value) {
  ValueGrid v;
  v.values.assign(grid->size(), value);
  v.argmins.assign(grid->size(), 0);
  v.grid = std::move(grid);
  return v;
}

double interpolate(const ValueGrid& v, std::span<const double> rho) {
  Stencil st = v.grid->locate(rho);
  double total = 0.0;
  for (std::size_t k = 0; k < st.size; ++k) total += st.weight[k] * v.values[st.index[k]];
  return total;
}

double interpolate(const ValueGrid& v, const Belief& rho) { return interpolate(v, rho.span()); }

}  // namespace popdmp
