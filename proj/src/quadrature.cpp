#include "popdmp/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace popdmp {

std::size_t simpson_panels(double length, double h) {
  auto n = static_cast<std::size_t>(std::ceil(length / h - 1e-7));
  n = std::max<std::size_t>(n, 2);
  if (n % 2 != 0) ++n;
  return n;
}

void append_simpson(double a, double b, double h, std::size_t piece, std::vector<QuadNode>& out) {
  if (!(b > a)) return;
  const std::size_t n = simpson_panels(b - a, h);
  const double step = (b - a) / static_cast<double>(n);
  for (std::size_t k = 0; k <= n; ++k) {
    double coef = (k == 0 || k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    double t = (k == n) ? b : a + static_cast<double>(k) * step;
    out.push_back({t, coef * step / 3.0, piece});
  }
}

std::vector<QuadNode> simpson_nodes(const RelaxedControl& r, double t_end, double h) {
  std::vector<QuadNode> nodes;
  for (std::size_t i = 0; i < r.pieces().size(); ++i) {
    double a = r.piece_start(i);
    if (a >= t_end) break;
    double b = std::min(r.piece_end(i), t_end);
    append_simpson(a, b, h, i, nodes);
  }
  return nodes;
}

std::vector<double> node_times(const std::vector<QuadNode>& nodes) {
  std::vector<double> t(nodes.size());
  std::transform(nodes.begin(), nodes.end(), t.begin(), [](const QuadNode& n) { return n.t; });
  return t;
}

}  // namespace popdmp
