#include "popdmp/solver.hpp"

#include "popdmp/error.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>

#include <omp.h>

namespace popdmp {

// -- compiled operator ----------------------------------------------------------

namespace {

struct PointRows {
  std::vector<std::uint32_t> cols;
  std::vector<double> weights;
  std::vector<std::size_t> lengths;
  std::vector<double> stage;
};

// Remembers the last few located beliefs; reused only on bitwise-equal input.
class StencilCache {
 public:
  explicit StencilCache(std::size_t d) : d_(d), keys_(kSlots * d, -1.0) {}

  const Stencil& locate(const SimplexGrid& grid, std::span<const double> rho) {
    for (std::size_t s = 0; s < kSlots; ++s)
      if (std::equal(rho.begin(), rho.end(), keys_.begin() + static_cast<std::ptrdiff_t>(s * d_)))
        return stencils_[s];
    const std::size_t s = next_;
    next_ = (next_ + 1) % kSlots;
    std::copy(rho.begin(), rho.end(), keys_.begin() + static_cast<std::ptrdiff_t>(s * d_));
    stencils_[s] = grid.locate(rho);
    return stencils_[s];
  }

 private:
  static constexpr std::size_t kSlots = 8;
  std::size_t d_;
  std::size_t next_ = 0;
  std::vector<double> keys_;
  std::array<Stencil, kSlots> stencils_{};
};

}  // namespace

CompiledOperator::CompiledOperator(const BeliefOperator& op, std::shared_ptr<const SimplexGrid> grid)
    : op_(&op), grid_(std::move(grid)), num_candidates_(op.family().size()) {
  if (grid_->dim() != op.model().num_states())
    throw ConfigError("grid dimension does not match the number of post-jump states");
  const std::size_t n = grid_->size();
  const std::size_t nk = num_candidates_;
  std::vector<PointRows> rows(n);

#pragma omp parallel
  {
    std::vector<double> acc(n, 0.0);
    std::vector<char> mark(n, 0);
    std::vector<std::uint32_t> touched;
    StencilCache cache(grid_->dim());
#pragma omp for schedule(dynamic, 4)
    for (long li = 0; li < static_cast<long>(n); ++li) {
      const auto i = static_cast<std::size_t>(li);
      auto rho = grid_->point(i);
      PointRows& pr = rows[i];
      pr.lengths.resize(nk);
      pr.stage.resize(nk);
      for (std::size_t k = 0; k < nk; ++k) {
        double g = 0.0;
        for (std::size_t y = 0; y < rho.size(); ++y) g += rho[y] * op.table(k).stage_cost(y);
        pr.stage[k] = g;
        op.for_each_successor(rho, k, [&](double w, std::span<const double> next) {
          const Stencil& st = cache.locate(*grid_, next);
          for (std::size_t s = 0; s < st.size; ++s) {
            auto idx = st.index[s];
            if (!mark[idx]) {
              mark[idx] = 1;
              touched.push_back(idx);
            }
            acc[idx] += w * st.weight[s];
          }
        });
        std::sort(touched.begin(), touched.end());
        for (auto idx : touched) {
          pr.cols.push_back(idx);
          pr.weights.push_back(acc[idx]);
          acc[idx] = 0.0;
          mark[idx] = 0;
        }
        pr.lengths[k] = touched.size();
        touched.clear();
      }
    }
  }

  std::size_t total = 0;
  for (const auto& pr : rows) total += pr.cols.size();
  cols_.reserve(total);
  weights_.reserve(total);
  stage_.reserve(n * nk);
  row_ptr_.reserve(n * nk + 1);
  row_ptr_.push_back(0);
  for (auto& pr : rows) {
    cols_.insert(cols_.end(), pr.cols.begin(), pr.cols.end());
    weights_.insert(weights_.end(), pr.weights.begin(), pr.weights.end());
    stage_.insert(stage_.end(), pr.stage.begin(), pr.stage.end());
    for (std::size_t len : pr.lengths) row_ptr_.push_back(row_ptr_.back() + len);
    pr = PointRows{};
  }
}

double CompiledOperator::apply(std::size_t i, std::size_t k, std::span<const double> v) const {
  const std::size_t row = i * num_candidates_ + k;
  double total = 0.0;
  for (std::size_t e = row_ptr_[row]; e < row_ptr_[row + 1]; ++e) total += weights_[e] * v[cols_[e]];
  return stage_[row] + total;
}

// -- sweeps -------------------------------------------------------------------

namespace {

double point_update(const CompiledOperator& op, std::size_t i, std::span<const double> v,
                    std::vector<double>& scratch, std::int32_t* argmin) {
  const std::size_t nk = op.num_candidates();
  for (std::size_t k = 0; k < nk; ++k) scratch[k] = op.apply(i, k, v);
  TResult t = argmin_with_ties(scratch, op.belief_operator().tie_tol());
  if (argmin) *argmin = static_cast<std::int32_t>(t.argmin);
  return t.value;
}

}  // namespace

SweepOutput sweep_parallel(const CompiledOperator& op, std::span<const double> v, std::span<double> out,
                           std::span<std::int32_t> argmins) {
  const auto n = static_cast<long>(op.num_points());
  double residual = 0.0;
#pragma omp parallel reduction(max : residual)
  {
    std::vector<double> scratch(op.num_candidates());
#pragma omp for schedule(static)
    for (long li = 0; li < n; ++li) {
      const auto i = static_cast<std::size_t>(li);
      out[i] = point_update(op, i, v, scratch, argmins.empty() ? nullptr : &argmins[i]);
      residual = std::max(residual, std::abs(out[i] - v[i]));
    }
  }
  return {residual};
}

SweepOutput sweep_serial(const CompiledOperator& op, std::span<const double> v, std::span<double> out,
                         std::span<std::int32_t> argmins) {
  std::vector<double> scratch(op.num_candidates());
  double residual = 0.0;
  for (std::size_t i = 0; i < op.num_points(); ++i) {
    out[i] = point_update(op, i, v, scratch, argmins.empty() ? nullptr : &argmins[i]);
    residual = std::max(residual, std::abs(out[i] - v[i]));
  }
  return {residual};
}

SweepOutput sweep_reference(const BeliefOperator& op, const ValueGrid& v, std::span<double> out,
                            std::span<std::int32_t> argmins) {
  double residual = 0.0;
  for (std::size_t i = 0; i < v.grid->size(); ++i) {
    TResult t = op.T(v, v.grid->belief(i));
    out[i] = t.value;
    if (!argmins.empty()) argmins[i] = static_cast<std::int32_t>(t.argmin);
    residual = std::max(residual, std::abs(out[i] - v.values[i]));
  }
  return {residual};
}

// -- value iteration ------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_options(const SolveOptions& options) {
  if (!(options.tol > 0.0)) throw ConfigError("tolerance must be positive");
  if (options.max_iter == 0) throw ConfigError("max_iter must be at least 1");
}

}  // namespace

SolveResult value_iteration(const CompiledOperator& op, const SolveOptions& options) {
  check_options(options);
  const auto start = Clock::now();
  const std::size_t n = op.num_points();
  std::vector<double> v(n, 0.0), next(n, 0.0);
  SolveResult result;
  auto& report = result.report;
  while (report.iterations < options.max_iter) {
    double r = sweep_parallel(op, v, next, {}).residual;
    std::swap(v, next);
    report.residuals.push_back(r);
    ++report.iterations;
    if (r < options.tol) {
      report.converged = true;
      break;
    }
  }
  std::vector<std::int32_t> argmins(n, 0);
  report.final_residual = sweep_parallel(op, v, next, argmins).residual;
  report.wall_seconds = seconds_since(start);
  result.values.grid = op.grid();
  result.values.values = std::move(v);
  result.values.argmins = std::move(argmins);
  return result;
}

SolveResult value_iteration_reference(const BeliefOperator& op, std::shared_ptr<const SimplexGrid> grid,
                                      const SolveOptions& options) {
  check_options(options);
  const auto start = Clock::now();
  ValueGrid v = ValueGrid::constant(grid, 0.0);
  std::vector<double> next(grid->size(), 0.0);
  SolveResult result;
  auto& report = result.report;
  while (report.iterations < options.max_iter) {
    double r = sweep_reference(op, v, next, {}).residual;
    std::swap(v.values, next);
    report.residuals.push_back(r);
    ++report.iterations;
    if (r < options.tol) {
      report.converged = true;
      break;
    }
  }
  report.final_residual = sweep_reference(op, v, next, v.argmins).residual;
  report.wall_seconds = seconds_since(start);
  result.values = std::move(v);
  return result;
}

SolveResult evaluate_decision_rule(const CompiledOperator& op, std::span<const std::int32_t> choice,
                                   const SolveOptions& options) {
  check_options(options);
  const std::size_t n = op.num_points();
  if (choice.size() != n) throw ConfigError("decision rule must choose one candidate per grid point");
  const auto start = Clock::now();
  std::vector<double> v(n, 0.0), next(n, 0.0);
  SolveResult result;
  auto& report = result.report;
  auto apply_all = [&](std::span<const double> src, std::span<double> dst) {
    double residual = 0.0;
#pragma omp parallel for reduction(max : residual) schedule(static)
    for (long li = 0; li < static_cast<long>(n); ++li) {
      const auto i = static_cast<std::size_t>(li);
      dst[i] = op.apply(i, static_cast<std::size_t>(choice[i]), src);
      residual = std::max(residual, std::abs(dst[i] - src[i]));
    }
    return residual;
  };
  while (report.iterations < options.max_iter) {
    double r = apply_all(v, next);
    std::swap(v, next);
    report.residuals.push_back(r);
    ++report.iterations;
    if (r < options.tol) {
      report.converged = true;
      break;
    }
  }
  report.final_residual = apply_all(v, next);
  report.wall_seconds = seconds_since(start);
  result.values.grid = op.grid();
  result.values.values = std::move(v);
  result.values.argmins.assign(choice.begin(), choice.end());
  return result;
}

// -- policies -------------------------------------------------------------------

StationaryPolicy::StationaryPolicy(std::shared_ptr<const SimplexGrid> grid, std::vector<std::int32_t> choice,
                                   ControlFamily family)
    : grid_(std::move(grid)), choice_(std::move(choice)), family_(std::move(family)) {
  if (choice_.size() != grid_->size()) throw ConfigError("policy needs one choice per grid point");
  for (auto c : choice_)
    if (c < 0 || static_cast<std::size_t>(c) >= family_.size())
      throw ConfigError("policy choice outside the control family");
}

StationaryPolicy StationaryPolicy::constant(std::shared_ptr<const SimplexGrid> grid, ControlFamily family,
                                            std::size_t index) {
  std::vector<std::int32_t> choice(grid->size(), static_cast<std::int32_t>(index));
  return StationaryPolicy(std::move(grid), std::move(choice), std::move(family));
}

std::size_t StationaryPolicy::candidate_index(const Belief& rho) const {
  return static_cast<std::size_t>(choice_[grid_->nearest(rho.span())]);
}

std::size_t StationaryPolicy::exact_index(const BeliefOperator& op, const ValueGrid& v,
                                          const Belief& rho) const {
  return op.T(v, rho).argmin;
}

StationaryPolicy extract_policy(const ValueGrid& vg, const ControlFamily& family) {
  return StationaryPolicy(vg.grid, vg.argmins, family);
}

// -- regularisation sweep -----------------------------------------------------

std::vector<SigmaSweepRow> sigma_sweep(const PopdmpModel& model, std::shared_ptr<const SimplexGrid> grid,
                                       const ControlFamily& family, const StageQuadrature& quad,
                                       const std::vector<double>& sigmas, const SolveOptions& options,
                                       RegularizationKernel::Kind kind) {
  if (model.hazard_controlled)
    throw ConfigError("sigma sweep needs a model whose plain filter is admissible");
  BeliefOperator plain_op(model, family, quad, std::nullopt);
  CompiledOperator plain_compiled(plain_op, grid);
  SolveResult plain = value_iteration(plain_compiled, options);

  std::vector<SigmaSweepRow> rows;
  for (double sigma : sigmas) {
    if (!(sigma > 0.0)) throw ConfigError("sigma values must be positive");
    BeliefOperator op(model, family, quad, RegularizationKernel{kind, sigma});
    CompiledOperator compiled(op, grid);
    SolveResult reg = value_iteration(compiled, options);
    SigmaSweepRow row;
    row.sigma = sigma;
    row.iterations = reg.report.iterations;
    std::size_t agree = 0, interior = 0, interior_agree = 0;
    for (std::size_t i = 0; i < grid->size(); ++i) {
      row.gap = std::max(row.gap, std::abs(reg.values.values[i] - plain.values.values[i]));
      bool same = reg.values.argmins[i] == plain.values.argmins[i];
      agree += same;
      auto p = grid->point(i);
      if (std::all_of(p.begin(), p.end(), [](double x) { return x > 0.0; })) {
        ++interior;
        interior_agree += same;
      }
    }
    row.agreement = static_cast<double>(agree) / static_cast<double>(grid->size());
    row.interior_agreement =
        interior ? static_cast<double>(interior_agree) / static_cast<double>(interior) : 1.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace popdmp
