#include "bangbang/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "bangbang/endpoint.hpp"
#include "bangbang/errors.hpp"
#include "bangbang/parallel.hpp"

namespace bangbang {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void CostWeights::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || (lambda1 == 0.0 && lambda2 == 0.0)) {
    throw std::invalid_argument("cost weights must be >= 0 and not both zero");
  }
}

void RobustnessGrid::validate() const {
  if (samples < 10) throw std::invalid_argument("robustness grid needs at least 10 samples");
  if (upper_limit && !(*upper_limit > 0.0)) throw std::invalid_argument("robustness upper limit must be positive");
}

double l1_time_cost(const BangBangControl& control) {
  double total = 0.0;
  double start = 0.0;
  const auto events = control.events();
  for (std::size_t k = 0; k <= events.size(); ++k) {
    const double end = k < events.size() ? events[k].time : control.final_time();
    const Vector u = control.value_at(0.5 * (start + end));
    total += u.cwiseAbs().sum() * (end - start);
    start = end;
  }
  return total + control.final_time();
}

std::vector<double> robustness_profile(const DynamicsModel& model, const BangBangControl& control,
                                       const Vector& target, std::span<const double> times,
                                       const SvdSolver& solver, const IntegratorConfig& config) {
  const auto profile = backward_sensitivity_profile(model, control, target, times, config);
  std::vector<double> sigma(profile.size(), 0.0);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile[i].differential.columns() == 0) continue;
    try {
      sigma[i] = solver.sigma_min(profile[i].differential.matrix);
    } catch (const AllSingularValuesZero&) {
      sigma[i] = 0.0;
    }
  }
  return sigma;
}

double robustness_cost(const DynamicsModel& model, const BangBangControl& control,
                       const Vector& target, const RobustnessGrid& grid, const SvdSolver& solver,
                       const IntegratorConfig& config) {
  grid.validate();
  if (control.event_count() == 0) throw std::invalid_argument("robustness_cost: control has no switching");
  const double t_last = control.events().back().time;
  const double upper = grid.upper_limit ? std::min(*grid.upper_limit, t_last) : t_last;

  // Segments between consecutive switching times; cells are shared out in
  // proportion to segment length (largest remainder, at least one each).
  std::vector<double> breaks{0.0};
  for (const auto& e : control.events()) {
    if (e.time > 0.0 && e.time < upper) breaks.push_back(e.time);
  }
  breaks.push_back(upper);
  const std::size_t segments = breaks.size() - 1;
  std::vector<std::size_t> cells(segments, 1);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t used = segments;
  const double samples = static_cast<double>(grid.samples);
  for (std::size_t j = 0; j < segments; ++j) {
    const double share = samples * (breaks[j + 1] - breaks[j]) / upper;
    const auto whole = std::max<std::size_t>(1, static_cast<std::size_t>(share));
    used += whole - 1;
    cells[j] = whole;
    remainder.push_back({share - static_cast<double>(whole), j});
  }
  std::ranges::stable_sort(remainder, std::greater<>{}, &std::pair<double, std::size_t>::first);
  for (std::size_t r = 0; used < grid.samples && r < remainder.size(); ++r, ++used) {
    ++cells[remainder[r].second];
  }

  std::vector<double> nodes;
  std::vector<double> weights;
  for (std::size_t j = 0; j < segments; ++j) {
    const double w = (breaks[j + 1] - breaks[j]) / static_cast<double>(cells[j]);
    for (std::size_t i = 0; i < cells[j]; ++i) {
      nodes.push_back(breaks[j] + (static_cast<double>(i) + 0.5) * w);
      weights.push_back(w);
    }
  }
  const auto sigma = robustness_profile(model, control, target, nodes, solver, config);
  double sum = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) return kInf;
    sum += weights[i] / (sigma[i] * sigma[i]);
  }
  return sum;
}

std::vector<double> project_onto_gaps(std::span<const double> times, double final_time, double eta) {
  const std::size_t k = times.size();
  const double upper = final_time - static_cast<double>(k + 1) * eta;
  if (upper < 0.0) throw DomainError("project_onto_gaps: t_f too short for the requested gaps");
  // Shifted variables z_i = tau_i - i*eta must be nondecreasing inside [0, upper]:
  // pool-adjacent-violators, then clamp.
  std::vector<double> level;
  std::vector<std::size_t> weight;
  for (std::size_t i = 0; i < k; ++i) {
    level.push_back(times[i] - static_cast<double>(i + 1) * eta);
    weight.push_back(1);
    while (level.size() > 1 && level[level.size() - 2] > level.back()) {
      const double w1 = static_cast<double>(weight[weight.size() - 2]);
      const double w2 = static_cast<double>(weight.back());
      const double merged = (w1 * level[level.size() - 2] + w2 * level.back()) / (w1 + w2);
      weight[weight.size() - 2] += weight.back();
      level[level.size() - 2] = merged;
      level.pop_back();
      weight.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(k);
  for (std::size_t b = 0; b < level.size(); ++b) {
    const double z = std::clamp(level[b], 0.0, upper);
    for (std::size_t r = 0; r < weight[b]; ++r) {
      out.push_back(z + static_cast<double>(out.size() + 1) * eta);
    }
  }
  return out;
}

namespace {

/// Nudges times by at most a few ulps so that the gap checks hold exactly in
/// floating point.
void snap_to_gaps(std::vector<double>& tau, double final_time, double eta) {
  if (tau.empty()) return;
  double previous = 0.0;
  for (double& t : tau) {
    if (t - previous < eta) t = previous + eta;
    while (t - previous < eta) t = std::nextafter(t, kInf);
    previous = t;
  }
  double next = final_time;
  for (auto it = tau.rbegin(); it != tau.rend(); ++it) {
    if (next - *it < eta) *it = next - eta;
    while (next - *it < eta) *it = std::nextafter(*it, -kInf);
    next = *it;
  }
}

/// Switching-time problem in the variables y = (tau_1..tau_K[, t_f]). The
/// search runs in the K + 1 gaps g_i = tau_{i+1} - tau_i - eta >= 0
/// (tau_0 = 0, tau_{K+1} = t_f). For a fixed t_f the gaps have a fixed sum and
/// the largest one is eliminated at every iteration.
class TimingNlp {
 public:
  TimingNlp(const TimingProblem& problem, const BangBangControl& structure, const NlpOptions& options)
      : p_(problem),
        o_(options),
        structure_(structure),
        events_(structure.event_count()),
        dim_(events_ + (problem.free_final_time ? 1 : 0)),
        eta_(std::max(problem.gap.eta, 1e-9)) {}

  std::size_t dim() const { return dim_; }

  Vector initial_point() const {
    std::vector<double> tau = structure_.times();
    double tf = structure_.final_time();
    if (p_.free_final_time) {
      tf = std::clamp(tf, (tau.empty() ? 0.0 : tau.back()) + eta_,
                      std::max(p_.max_final_time, static_cast<double>(events_ + 1) * eta_));
    }
    tau = project_onto_gaps(tau, tf, eta_);
    snap_to_gaps(tau, tf, eta_);
    Vector y(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < events_; ++i) y[static_cast<Eigen::Index>(i)] = tau[i];
    if (p_.free_final_time) y[static_cast<Eigen::Index>(events_)] = tf;
    return y;
  }

  double final_time(const Vector& y) const {
    return p_.free_final_time ? y[static_cast<Eigen::Index>(events_)] : structure_.final_time();
  }

  /// All K + 1 gaps of y.
  Vector gaps(const Vector& y) const {
    Vector g(static_cast<Eigen::Index>(events_ + 1));
    double previous = 0.0;
    for (std::size_t i = 0; i < events_; ++i) {
      const double t = y[static_cast<Eigen::Index>(i)];
      g[static_cast<Eigen::Index>(i)] = t - previous - eta_;
      previous = t;
    }
    g[static_cast<Eigen::Index>(events_)] = final_time(y) - previous - eta_;
    return g;
  }

  Vector from_gaps(const Vector& g) const {
    Vector y(static_cast<Eigen::Index>(dim_));
    std::vector<double> tau(events_);
    double t = 0.0;
    for (std::size_t i = 0; i < events_; ++i) {
      t += eta_ + g[static_cast<Eigen::Index>(i)];
      tau[i] = t;
    }
    double tf = structure_.final_time();
    if (p_.free_final_time) tf = t + eta_ + g[static_cast<Eigen::Index>(events_)];
    snap_to_gaps(tau, tf, eta_);
    for (std::size_t i = 0; i < events_; ++i) y[static_cast<Eigen::Index>(i)] = tau[i];
    if (p_.free_final_time) y[static_cast<Eigen::Index>(events_)] = tf;
    return y;
  }

  /// dy/dg, dim x (K + 1).
  Matrix gap_map() const {
    const auto n = static_cast<Eigen::Index>(dim_);
    const auto k = static_cast<Eigen::Index>(events_);
    Matrix t = Matrix::Zero(n, k + 1);
    for (Eigen::Index j = 0; j < k; ++j) t.row(j).head(j + 1).setOnes();
    if (p_.free_final_time) t.row(k).setOnes();
    return t;
  }

  std::optional<BangBangControl> control_at(const Vector& y) const {
    try {
      const std::vector<double> tau(y.data(), y.data() + events_);
      auto c = structure_.with_times(tau);
      return p_.free_final_time ? c.with_final_time(final_time(y)) : c;
    } catch (const OrderViolation&) {
      return std::nullopt;
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  }

  double objective(const BangBangControl& c) const {
    double j = p_.weights.lambda1 * p_.cost(c);
    if (p_.weights.lambda2 > 0.0) {
      j += p_.weights.lambda2 *
           robustness_cost(*p_.model, c, p_.target, p_.grid, p_.solver, p_.integrator);
    }
    return j;
  }

  struct Point {
    Vector y;
    double j = kInf;
    Vector residual;  // E(y) - target
    double merit = kInf;
  };

  Point evaluate(const Vector& y, double mu) const {
    Point pt{y, kInf, Vector(), kInf};
    const auto c = control_at(y);
    if (!c) return pt;
    try {
      pt.residual = endpoint(*p_.model, p_.x0, *c, p_.integrator) - p_.target;
      pt.j = objective(*c);
    } catch (const IntegrationBlowup&) {
      pt.j = kInf;
      return pt;
    }
    pt.merit = pt.j + mu * pt.residual.squaredNorm();
    return pt;
  }

  /// Residual Jacobian dE/dy: variation vectors, plus f(t_f) for a free t_f.
  Matrix residual_jacobian(const Vector& y) const {
    const auto c = control_at(y);
    if (!c) throw OrderViolation("residual_jacobian: inadmissible point");
    auto sens = endpoint_sensitivity(*p_.model, p_.x0, *c, p_.integrator);
    Matrix jac(sens.state.size(), static_cast<Eigen::Index>(dim_));
    jac.leftCols(static_cast<Eigen::Index>(events_)) = sens.differential.matrix;
    if (p_.free_final_time) {
      const double tf = c->final_time();
      jac.col(static_cast<Eigen::Index>(events_)) = p_.model->rhs(tf, sens.state, c->value_at(tf));
    }
    return jac;
  }

  /// Forward-difference gradient of lambda1 C + lambda2 C_r.
  Vector objective_gradient(const Point& pt) const {
    Vector g(static_cast<Eigen::Index>(dim_));
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      Vector y = pt.y;
      y[i] += o_.fd_step;
      auto c = control_at(y);
      double sign = 1.0;
      if (!c) {
        y[i] = pt.y[i] - o_.fd_step;
        c = control_at(y);
        sign = -1.0;
      }
      g[i] = c ? sign * (objective(*c) - pt.j) / o_.fd_step : 0.0;
    }
    return g;
  }

  RobustifyResult solve() const {
    const Eigen::Index n = static_cast<Eigen::Index>(dim_);
    const Eigen::Index ng = static_cast<Eigen::Index>(events_ + 1);
    std::optional<RobustifyResult> incumbent;
    std::size_t iterations = 0;
    auto consider = [&](const Point& pt) {
      if (!std::isfinite(pt.j) || pt.residual.size() == 0) return;
      const double residual = pt.residual.norm();
      if (residual > o_.feasibility_tolerance) return;
      if (!incumbent || pt.j < incumbent->objective) {
        incumbent = finish(pt, true, iterations);
      }
    };

    Point pt = polish(evaluate(initial_point(), 0.0));
    consider(pt);
    Matrix b = Matrix::Identity(n, n);
    bool b_scaled = false;
    const Matrix t_map = gap_map();
    const double gap_sum = structure_.final_time() - static_cast<double>(events_ + 1) * eta_;

    double last_step = kInf;
    for (int e = o_.first_penalty_exponent; e <= o_.last_penalty_exponent; ++e) {
      const double mu = std::pow(10.0, e);
      pt = evaluate(pt.y, mu);
      if (!std::isfinite(pt.merit)) break;
      Matrix jac = residual_jacobian(pt.y);
      Vector gj = objective_gradient(pt);
      for (std::size_t it = 0; it < o_.max_inner_iterations; ++it) {
        ++iterations;
        const Vector gy = gj + 2.0 * mu * jac.transpose() * pt.residual;
        const Matrix hy = b + 2.0 * mu * jac.transpose() * jac;
        const Vector g_all = gaps(pt.y);

        // Reduced coordinates z: every gap but the pivot (fixed t_f only).
        Eigen::Index pivot = -1;
        if (!p_.free_final_time) g_all.maxCoeff(&pivot);
        std::vector<Eigen::Index> coords;
        for (Eigen::Index i = 0; i < ng; ++i) {
          if (i != pivot) coords.push_back(i);
        }
        const auto nz = static_cast<Eigen::Index>(coords.size());
        Matrix a(n, nz);
        Vector z(nz);
        for (Eigen::Index c = 0; c < nz; ++c) {
          const Eigen::Index i = coords[static_cast<std::size_t>(c)];
          a.col(c) = pivot >= 0 ? Vector(t_map.col(i) - t_map.col(pivot)) : Vector(t_map.col(i));
          z[c] = std::max(g_all[i], 0.0);
        }
        const Vector gz = a.transpose() * gy;
        const Matrix hz = a.transpose() * hy * a;

        // Bertsekas-style active set: gaps at their bound with the gradient pushing into it.
        const Vector probe = (z - gz).cwiseMax(0.0);
        const double eps_active = std::min(1e-4, (z - probe).norm());
        std::vector<Eigen::Index> free_idx;
        std::vector<bool> active(static_cast<std::size_t>(nz), false);
        for (Eigen::Index i = 0; i < nz; ++i) {
          if (z[i] <= eps_active && gz[i] > 0.0) {
            active[static_cast<std::size_t>(i)] = true;
          } else {
            free_idx.push_back(i);
          }
        }
        Vector dir = Vector::Zero(nz);
        for (Eigen::Index i = 0; i < nz; ++i) {
          if (active[static_cast<std::size_t>(i)]) dir[i] = -gz[i] / std::max(hz(i, i), 1e-12);
        }
        if (!free_idx.empty()) {
          const auto nf = static_cast<Eigen::Index>(free_idx.size());
          Matrix hff(nf, nf);
          Vector gf(nf);
          for (Eigen::Index r = 0; r < nf; ++r) {
            gf[r] = gz[free_idx[static_cast<std::size_t>(r)]];
            for (Eigen::Index c = 0; c < nf; ++c) {
              hff(r, c) = hz(free_idx[static_cast<std::size_t>(r)], free_idx[static_cast<std::size_t>(c)]);
            }
          }
          Eigen::LDLT<Matrix> ldlt(hff);
          Vector df = ldlt.info() == Eigen::Success ? Vector(ldlt.solve(-gf)) : Vector(-gf);
          if (!df.allFinite() || df.dot(gf) >= 0.0) df = -gf;
          for (Eigen::Index r = 0; r < nf; ++r) dir[free_idx[static_cast<std::size_t>(r)]] = df[r];
        }
        if (gz.dot(dir) >= 0.0) dir = -gz;
        const double longest = dir.cwiseAbs().maxCoeff();
        const double cap = 0.25 * final_time(pt.y);
        if (longest > cap) dir *= cap / longest;

        // Backtracking along the projection arc.
        std::optional<Point> accepted;
        double alpha = 1.0;
        for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
          const Vector z_trial = (z + alpha * dir).cwiseMax(0.0);
          Vector g_trial = g_all;
          for (Eigen::Index c = 0; c < nz; ++c) g_trial[coords[static_cast<std::size_t>(c)]] = z_trial[c];
          if (pivot >= 0) {
            g_trial[pivot] = gap_sum - (g_trial.sum() - g_trial[pivot]);
            if (g_trial[pivot] < 0.0) continue;
          } else if (g_trial.sum() + static_cast<double>(events_ + 1) * eta_ > p_.max_final_time) {
            continue;
          }
          const Vector trial_y = from_gaps(g_trial);
          if ((trial_y - pt.y).norm() < 1e-15) break;
          Point trial = evaluate(trial_y, mu);
          if (trial.merit <= pt.merit + 1e-4 * gy.dot(trial_y - pt.y)) {
            accepted = std::move(trial);
            break;
          }
        }
        if (!accepted) {
          last_step = 0.0;
          break;
        }
        const Vector s = accepted->y - pt.y;
        last_step = s.norm();
        pt = std::move(*accepted);
        jac = residual_jacobian(pt.y);
        const Vector gj_new = objective_gradient(pt);
        Vector r = gj_new - gj;
        gj = gj_new;
        // Damped BFGS on the objective part; the penalty part is Gauss-Newton.
        const double sr = s.dot(r);
        if (!b_scaled && sr > 0.0) {
          b = Matrix::Identity(n, n) * (r.squaredNorm() / sr);
          b_scaled = true;
        }
        const Vector bs = b * s;
        const double sbs = s.dot(bs);
        if (sbs > 1e-300) {
          if (sr < 0.2 * sbs) {
            const double theta = 0.8 * sbs / (sbs - sr);
            r = theta * r + (1.0 - theta) * bs;
          }
          const double sr_d = s.dot(r);
          if (sr_d > 1e-300) b += r * r.transpose() / sr_d - bs * bs.transpose() / sbs;
        }
        if (last_step <= o_.step_tolerance) break;
      }
      const bool stage_converged = pt.residual.size() &&
                                   pt.residual.norm() <= o_.feasibility_tolerance &&
                                   last_step <= o_.step_tolerance;
      pt = polish(pt);
      consider(pt);
      if (stage_converged) break;
    }

    pt = polish(pt);
    consider(pt);
    if (incumbent) return *incumbent;
    return finish(pt, false, iterations);
  }

 private:
  /// Minimal-norm Newton steps on E(y) = target in gap coordinates; gaps that
  /// would turn negative are held at zero and the step is recomputed.
  Point polish(Point pt) const {
    const Matrix t_map = gap_map();
    const Eigen::Index ng = static_cast<Eigen::Index>(events_ + 1);
    const double gap_sum = structure_.final_time() - static_cast<double>(events_ + 1) * eta_;
    for (std::size_t it = 0; it < o_.polish_iterations; ++it) {
      if (pt.residual.size() == 0 || pt.residual.norm() <= 1e-14) break;
      const Matrix jac = residual_jacobian(pt.y);
      const Vector g = gaps(pt.y).cwiseMax(0.0);
      Eigen::Index pivot = -1;
      if (!p_.free_final_time) g.maxCoeff(&pivot);
      std::vector<Eigen::Index> movable;
      for (Eigen::Index i = 0; i < ng; ++i) {
        if (i != pivot) movable.push_back(i);
      }
      Vector dg = Vector::Zero(ng);
      std::vector<bool> pinned(static_cast<std::size_t>(ng), false);
      for (std::size_t round = 0; round <= movable.size(); ++round) {
        std::vector<Eigen::Index> free_idx;
        Vector rhs = -pt.residual;
        for (Eigen::Index i : movable) {
          const auto col = pivot >= 0 ? Vector(jac * (t_map.col(i) - t_map.col(pivot)))
                                      : Vector(jac * t_map.col(i));
          if (pinned[static_cast<std::size_t>(i)]) {
            rhs -= col * dg[i];
          } else {
            free_idx.push_back(i);
          }
        }
        if (free_idx.empty()) break;
        Matrix a(jac.rows(), static_cast<Eigen::Index>(free_idx.size()));
        for (std::size_t c = 0; c < free_idx.size(); ++c) {
          const Eigen::Index i = free_idx[c];
          a.col(static_cast<Eigen::Index>(c)) = pivot >= 0 ? Vector(jac * (t_map.col(i) - t_map.col(pivot)))
                                                           : Vector(jac * t_map.col(i));
        }
        Vector step;
        try {
          step = p_.solver.min_norm_solve(a, rhs);
        } catch (const std::exception&) {
          break;
        }
        bool clipped = false;
        for (std::size_t c = 0; c < free_idx.size(); ++c) {
          const Eigen::Index i = free_idx[c];
          dg[i] = step[static_cast<Eigen::Index>(c)];
          if (g[i] + dg[i] < 0.0) {
            dg[i] = -g[i];
            pinned[static_cast<std::size_t>(i)] = true;
            clipped = true;
          }
        }
        if (!clipped) break;
      }
      if (pivot >= 0) dg[pivot] = -(dg.sum() - dg[pivot]);

      bool improved = false;
      for (double alpha = 1.0; alpha > 1e-3; alpha *= 0.5) {
        Vector g_trial = (g + alpha * dg).cwiseMax(0.0);
        if (pivot >= 0) {
          g_trial[pivot] = gap_sum - (g_trial.sum() - g_trial[pivot]);
          if (g_trial[pivot] < 0.0) continue;
        } else if (g_trial.sum() + static_cast<double>(events_ + 1) * eta_ > p_.max_final_time) {
          continue;
        }
        Point trial = evaluate(from_gaps(g_trial), 0.0);
        if (trial.residual.size() && trial.residual.norm() < pt.residual.norm()) {
          pt = std::move(trial);
          improved = true;
          break;
        }
      }
      if (!improved) break;
    }
    return pt;
  }

  RobustifyResult finish(const Point& pt, bool converged, std::size_t iterations) const {
    auto c = *control_at(pt.y);
    RobustifyResult r{c, 0.0, 0.0, pt.j, {}, 0.0, converged, iterations};
    r.cost_c = p_.cost(c);
    try {
      r.cost_cr = robustness_cost(*p_.model, c, p_.target, p_.grid, p_.solver, p_.integrator);
    } catch (const std::exception&) {
      r.cost_cr = kInf;
    }
    r.constraint_residual = pt.residual.size() ? pt.residual.norm() : kInf;
    return r;
  }

  const TimingProblem& p_;
  const NlpOptions& o_;
  const BangBangControl& structure_;
  std::size_t events_;
  std::size_t dim_;
  double eta_;
};

}  // namespace

RobustifyResult solve_timing_nlp(const TimingProblem& problem, const BangBangControl& initial,
                                 const NlpOptions& options) {
  if (!problem.model) throw std::invalid_argument("timing problem has no model");
  problem.weights.validate();
  problem.grid.validate();
  if (initial.event_count() == 0) throw std::invalid_argument("timing problem needs switching times");
  TimingNlp nlp(problem, initial, options);
  return nlp.solve();
}

BangBangControl place_needles(const BangBangControl& base, std::span<const std::size_t> channels,
                              const GapPolicy& gap, double after_time) {
  if (channels.empty()) return base;
  for (std::size_t ch : channels) {
    if (ch >= base.channels()) throw std::invalid_argument("place_needles: unknown channel");
  }
  const double tf = base.final_time();
  const double eta = gap.eta;
  const double start =
      std::max(after_time, base.event_count() ? base.events().back().time : 0.0);
  const std::size_t count = 2 * channels.size();
  const std::size_t total = base.event_count() + count;
  if (static_cast<double>(total + 1) * eta >= tf) {
    throw DomainError("place_needles: t_f too short for the switchings and their gaps");
  }
  double spacing = 2.0 * eta;
  if (start + static_cast<double>(count) * spacing > tf - eta || spacing <= 0.0) {
    spacing = (tf - start) / static_cast<double>(count + 1);
  }
  std::vector<double> times = base.times();
  std::vector<SwitchingEvent> events(base.events().begin(), base.events().end());
  if (spacing >= eta && spacing > 0.0) {
    for (std::size_t i = 0; i < count; ++i) {
      const double t = start + static_cast<double>(i + 1) * spacing;
      times.push_back(t);
      events.push_back({t, channels[i / 2]});
    }
  } else {
    // Not enough room after `start`: pack the needles at the minimal gap
    // against t_f and push earlier switchings back just as far as needed.
    for (std::size_t i = 0; i < count; ++i) {
      times.push_back(tf - static_cast<double>(count - i) * eta);
      events.push_back({0.0, channels[i / 2]});
    }
    times = project_onto_gaps(times, tf, eta);
    snap_to_gaps(times, tf, eta);
  }
  for (std::size_t k = 0; k < events.size(); ++k) events[k].time = times[k];
  return BangBangControl(base.bounds(), base.initial_values(), std::move(events), tf);
}

namespace {

std::vector<std::vector<std::size_t>> tuples(std::size_t channels, std::size_t length) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> current(length, 0);
  if (length == 0) return {current};
  while (true) {
    out.push_back(current);
    std::size_t pos = length;
    while (pos > 0) {
      --pos;
      if (++current[pos] < channels) break;
      current[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

}  // namespace

ChannelSearch enumerate_needle_channels(const TimingProblem& problem,
                                        const BangBangControl& base_control, std::size_t needles,
                                        SearchMode mode, std::span<const std::size_t> greedy_prefix,
                                        const NlpOptions& options, std::size_t jobs) {
  const std::size_t m = base_control.channels();
  std::vector<std::vector<std::size_t>> candidates;
  if (mode == SearchMode::exhaustive) {
    candidates = tuples(m, needles);
  } else {
    if (needles == 0 || greedy_prefix.size() + 1 != needles) {
      throw std::invalid_argument("greedy search needs a prefix of length needles - 1");
    }
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<std::size_t> t(greedy_prefix.begin(), greedy_prefix.end());
      t.push_back(j);
      candidates.push_back(std::move(t));
    }
  }
  const double after = base_control.event_count() ? base_control.events().back().time : 0.0;

  ChannelSearch search;
  search.table.resize(candidates.size());
  parallel_for(candidates.size(), jobs, [&](std::size_t i) {
    auto& row = search.table[i];
    row.channels = candidates[i];
    try {
      const auto start = place_needles(base_control, row.channels, problem.gap, after);
      auto result = solve_timing_nlp(problem, start, options);
      result.channels = row.channels;
      row.result = std::move(result);
    } catch (const DomainError&) {
    } catch (const OrderViolation&) {
    }
  });
  for (std::size_t i = 0; i < search.table.size(); ++i) {
    const auto& r = search.table[i].result;
    if (!r || !r->converged) continue;
    if (!search.best || r->objective < search.table[*search.best].result->objective) search.best = i;
  }
  return search;
}

std::vector<SwitchingStructure> all_structures(std::size_t channels, std::size_t switchings) {
  std::vector<SwitchingStructure> out;
  const auto seqs = tuples(channels, switchings);
  for (std::size_t mask = 0; mask < (std::size_t{1} << channels); ++mask) {
    std::vector<double> init(channels);
    for (std::size_t i = 0; i < channels; ++i) init[i] = (mask >> i) & 1U ? 1.0 : 0.0;
    for (const auto& s : seqs) out.push_back({init, s});
  }
  return out;
}

RobustifyResult derive_nominal(const TimingProblem& problem, const NominalSearch& search,
                               const NlpOptions& options, std::size_t jobs) {
  if (!problem.model) throw std::invalid_argument("nominal search has no model");
  if (search.structures.empty() || search.starts == 0) throw NoFeasibleNominal("empty nominal search space");
  if (!(search.min_final_time > 0.0) || !(search.max_final_time >= search.min_final_time)) {
    throw std::invalid_argument("nominal search: invalid final-time range");
  }
  TimingProblem nominal = problem;
  nominal.weights = {1.0, 0.0};
  nominal.free_final_time = true;
  nominal.max_final_time = search.max_final_time;
  const double eta = std::max(problem.gap.eta, 1e-9);
  const std::size_t m = problem.model->control_dim();
  const ChannelBounds bounds = on_off_bounds(m);

  const std::size_t total = search.structures.size() * search.starts;
  std::vector<std::optional<RobustifyResult>> results(total);
  parallel_for(total, jobs, [&](std::size_t job) {
    const std::size_t s = job / search.starts;
    const std::size_t start = job % search.starts;
    const auto& structure = search.structures[s];
    std::seed_seq seq{static_cast<std::uint64_t>(search.seed), static_cast<std::uint64_t>(s),
                      static_cast<std::uint64_t>(start)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t n_events = structure.channels.size();
    double tf = search.min_final_time + unit(rng) * (search.max_final_time - search.min_final_time);
    tf = std::max(tf, static_cast<double>(n_events + 1) * eta * 1.5);
    std::vector<double> times(n_events);
    for (double& t : times) t = unit(rng) * tf;
    std::ranges::sort(times);
    times = project_onto_gaps(times, tf, eta);
    snap_to_gaps(times, tf, eta);
    std::vector<SwitchingEvent> events;
    for (std::size_t k = 0; k < n_events; ++k) events.push_back({times[k], structure.channels[k]});
    try {
      const BangBangControl initial(bounds, structure.initial_values, std::move(events), tf);
      auto r = solve_timing_nlp(nominal, initial, options);
      if (r.converged) results[job] = std::move(r);
    } catch (const OrderViolation&) {
    } catch (const DomainError&) {
    } catch (const IntegrationBlowup&) {
    }
  });

  std::optional<RobustifyResult> best;
  for (auto& r : results) {
    if (r && (!best || r->cost_c < best->cost_c)) best = std::move(r);
  }
  if (!best) throw NoFeasibleNominal("no multi-start run reached the target within tolerance");
  return *best;
}

EpsilonSweep epsilon_max(const DynamicsModel& model_nominal, const ModelFactory& perturbed,
                         const BangBangControl& control, const Vector& x0, const Vector& target,
                         std::span<const double> eps_grid, const TrackingConfig& config,
                         std::size_t jobs) {
  if (eps_grid.empty() || !std::ranges::is_sorted(eps_grid)) {
    throw std::invalid_argument("epsilon grid must be non-empty and ascending");
  }
  std::vector<char> failed(eps_grid.size(), 0);
  parallel_for(eps_grid.size(), jobs, [&](std::size_t i) {
    const auto model = perturbed(eps_grid[i]);
    try {
      failed[i] = track(model_nominal, *model, control, x0, target, config).any_rejected() ? 1 : 0;
    } catch (const IntegrationBlowup&) {
      failed[i] = 1;
    }
  });
  EpsilonSweep out;
  out.failed.assign(failed.begin(), failed.end());
  out.epsilon_max = eps_grid.back();
  for (std::size_t i = 0; i < failed.size(); ++i) {
    if (failed[i]) {
      out.epsilon_max = i == 0 ? eps_grid.front() - 1.0 : eps_grid[i - 1];
      break;
    }
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

void write_cost_table_csv(std::ostream& out, const ChannelSearch& search) {
  out << "tuple,converged,C,C_r,residual\n";
  const auto old_precision = out.precision(17);
  for (const auto& row : search.table) {
    for (std::size_t i = 0; i < row.channels.size(); ++i) out << (i ? "-" : "") << row.channels[i] + 1;
    if (row.result) {
      out << ',' << (row.result->converged ? 1 : 0) << ',' << row.result->cost_c << ','
          << row.result->cost_cr << ',' << row.result->constraint_residual << '\n';
    } else {
      out << ",0,nan,nan,nan\n";
    }
  }
  out.precision(old_precision);
}

}  // namespace bangbang
