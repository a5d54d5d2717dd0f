#pragma once

#include "popdmp/model.hpp"

#include <cstddef>
#include <vector>

namespace popdmp {

/// Quadrature node tied to the control piece that is active on its panel.
/// Breakpoints appear twice, once as the right end of the left piece and
/// once as the left end of the right piece.
struct QuadNode {
  double t = 0.0;
  double weight = 0.0;
  std::size_t piece = 0;
};

/// Number of Simpson panels (even, >= 2) of width at most h on an interval.
std::size_t simpson_panels(double length, double h);

/// Appends composite Simpson nodes for [a, b] to `out`.
void append_simpson(double a, double b, double h, std::size_t piece, std::vector<QuadNode>& out);

/// Composite Simpson nodes on [0, t_end], integrating each control piece separately.
std::vector<QuadNode> simpson_nodes(const RelaxedControl& r, double t_end, double h);

/// Times of a node list, for flow_path.
std::vector<double> node_times(const std::vector<QuadNode>& nodes);

}  // namespace popdmp
