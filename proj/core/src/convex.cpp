#include "lem/convex.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lem::convex {

int ConvexProgram::add_variable(std::string name, double lower, double upper) {
  variables_.push_back({std::move(name), lower, upper});
  linear_.push_back(0.0);
  return static_cast<int>(variables_.size()) - 1;
}

void ConvexProgram::set_bounds(int var, double lower, double upper) {
  auto& v = variables_.at(static_cast<std::size_t>(var));
  v.lower = lower;
  v.upper = upper;
}

void ConvexProgram::add_quadratic(int i, int j, double coef) {
  if (i < 0 || j < 0 || i >= num_variables() || j >= num_variables())
    throw std::invalid_argument("add_quadratic: variable index out of range");
  quad_.push_back({i, j, coef});
}

void ConvexProgram::add_linear(int var, double coef) { linear_.at(static_cast<std::size_t>(var)) += coef; }

int ConvexProgram::add_equality(LinearExpr terms, double rhs, std::string tag) {
  equalities_.push_back({std::move(terms), rhs, std::move(tag)});
  return static_cast<int>(equalities_.size()) - 1;
}

int ConvexProgram::add_inequality(LinearExpr terms, double rhs, std::string tag) {
  inequalities_.push_back({std::move(terms), rhs, std::move(tag)});
  return static_cast<int>(inequalities_.size()) - 1;
}

Eigen::MatrixXd ConvexProgram::hessian() const {
  const int n = num_variables();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (const auto& q : quad_) {
    if (q.i == q.j) {
      h(q.i, q.i) += 2.0 * q.coef;
    } else {
      h(q.i, q.j) += q.coef;
      h(q.j, q.i) += q.coef;
    }
  }
  return h;
}

Eigen::VectorXd ConvexProgram::linear() const {
  return Eigen::Map<const Eigen::VectorXd>(linear_.data(), static_cast<Eigen::Index>(linear_.size()));
}

double ConvexProgram::objective(const Eigen::VectorXd& x) const {
  double f = constant_ + linear().dot(x);
  for (const auto& q : quad_) f += q.coef * x(q.i) * x(q.j);
  return f;
}

Eigen::VectorXd ConvexProgram::gradient(const Eigen::VectorXd& x) const { return hessian() * x + linear(); }

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::numerical_failure: return "numerical-failure";
  }
  return "unknown";
}

double KktReport::max_residual() const {
  return std::max({stationarity, primal_feasibility, dual_feasibility, complementarity});
}

std::vector<std::pair<int, double>> SolveResult::duals_for(const ConvexProgram& prog, const std::string& tag) const {
  std::vector<std::pair<int, double>> out;
  const auto& rows = prog.equalities();
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (rows[r].tag == tag) out.emplace_back(static_cast<int>(r), eq_duals(static_cast<Eigen::Index>(r)));
  return out;
}

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_program(const ConvexProgram& prog) {
  const int n = prog.num_variables();
  auto check_rows = [n](const std::vector<Constraint>& rows, const char* what) {
    for (const auto& row : rows) {
      if (!std::isfinite(row.rhs)) throw std::invalid_argument(std::string(what) + " row '" + row.tag + "' has non-finite rhs");
      for (const auto& t : row.terms) {
        if (t.var < 0 || t.var >= n)
          throw std::invalid_argument(std::string(what) + " row '" + row.tag + "' references unknown variable");
        if (!std::isfinite(t.coef)) throw std::invalid_argument(std::string(what) + " row '" + row.tag + "' has non-finite coefficient");
      }
    }
  };
  check_rows(prog.equalities(), "equality");
  check_rows(prog.inequalities(), "inequality");
  if (n == 0) return;
  MatrixXd h = prog.hessian();
  if (!h.allFinite()) throw std::invalid_argument("objective has non-finite quadratic coefficients");
  if (h.cwiseAbs().maxCoeff() > 0.0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(h, Eigen::EigenvaluesOnly);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    if (eig.eigenvalues().minCoeff() < -1e-9 * scale)
      throw std::invalid_argument("objective quadratic term is not positive semidefinite");
  }
}

// Where a variable's bounds or fixing row live in the internal problem.
struct BoundMap {
  int lower_row = -1;  // inequality row index
  int upper_row = -1;
  int fixed_row = -1;  // equality row index
};

struct Internal {
  MatrixXd h;
  VectorXd c;
  MatrixXd a;
  VectorXd b;
  MatrixXd g;
  VectorXd hv;
  std::vector<int> eq_source;   // user equality row, or −1 for a fixing row
  std::vector<double> eq_scale;
  std::vector<int> in_source;   // user inequality row, or −1 for a bound row
  std::vector<double> in_scale;
  std::vector<BoundMap> bounds;
  std::vector<int> dropped;     // user/fixing equality rows found linearly dependent (internal pre-drop index)
  MatrixXd a_dropped;
  VectorXd b_dropped;
};

double row_scale(const LinearExpr& terms) {
  double m = 0.0;
  for (const auto& t : terms) m = std::max(m, std::abs(t.coef));
  return m > 0.0 ? m : 1.0;
}

Internal build_internal(const ConvexProgram& prog) {
  const int n = prog.num_variables();
  Internal in;
  in.h = prog.hessian();
  in.c = prog.linear();
  in.bounds.resize(static_cast<std::size_t>(n));

  std::vector<VectorXd> eq_rows;
  std::vector<double> eq_rhs;
  for (std::size_t r = 0; r < prog.equalities().size(); ++r) {
    const auto& row = prog.equalities()[r];
    VectorXd v = VectorXd::Zero(n);
    for (const auto& t : row.terms) v(t.var) += t.coef;
    const double s = row_scale(row.terms);
    eq_rows.push_back(v / s);
    eq_rhs.push_back(row.rhs / s);
    in.eq_source.push_back(static_cast<int>(r));
    in.eq_scale.push_back(s);
  }
  std::vector<VectorXd> in_rows;
  std::vector<double> in_rhs;
  for (std::size_t r = 0; r < prog.inequalities().size(); ++r) {
    const auto& row = prog.inequalities()[r];
    VectorXd v = VectorXd::Zero(n);
    for (const auto& t : row.terms) v(t.var) += t.coef;
    const double s = row_scale(row.terms);
    in_rows.push_back(v / s);
    in_rhs.push_back(row.rhs / s);
    in.in_source.push_back(static_cast<int>(r));
    in.in_scale.push_back(s);
  }
  for (int k = 0; k < n; ++k) {
    const auto& var = prog.variables()[static_cast<std::size_t>(k)];
    VectorXd e = VectorXd::Zero(n);
    e(k) = 1.0;
    if (std::isfinite(var.lower) && std::isfinite(var.upper) && var.lower == var.upper) {
      in.bounds[static_cast<std::size_t>(k)].fixed_row = static_cast<int>(eq_rows.size());
      eq_rows.push_back(e);
      eq_rhs.push_back(var.lower);
      in.eq_source.push_back(-1);
      in.eq_scale.push_back(1.0);
      continue;
    }
    if (std::isfinite(var.lower)) {
      in.bounds[static_cast<std::size_t>(k)].lower_row = static_cast<int>(in_rows.size());
      in_rows.push_back(-e);
      in_rhs.push_back(-var.lower);
      in.in_source.push_back(-1);
      in.in_scale.push_back(1.0);
    }
    if (std::isfinite(var.upper)) {
      in.bounds[static_cast<std::size_t>(k)].upper_row = static_cast<int>(in_rows.size());
      in_rows.push_back(e);
      in_rhs.push_back(var.upper);
      in.in_source.push_back(-1);
      in.in_scale.push_back(1.0);
    }
  }

  // Drop linearly dependent equality rows; their duals are reported as zero.
  const auto me = static_cast<Index>(eq_rows.size());
  MatrixXd a_all(me, n);
  VectorXd b_all(me);
  for (Index r = 0; r < me; ++r) {
    a_all.row(r) = eq_rows[static_cast<std::size_t>(r)].transpose();
    b_all(r) = eq_rhs[static_cast<std::size_t>(r)];
  }
  std::vector<int> keep;
  if (me > 0) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(a_all.transpose());
    qr.setThreshold(1e-11);
    const Index rank = qr.rank();
    std::vector<bool> kept(static_cast<std::size_t>(me), false);
    for (Index k = 0; k < rank; ++k) kept[static_cast<std::size_t>(qr.colsPermutation().indices()(k))] = true;
    for (Index r = 0; r < me; ++r) {
      if (kept[static_cast<std::size_t>(r)])
        keep.push_back(static_cast<int>(r));
      else
        in.dropped.push_back(static_cast<int>(r));
    }
  }
  in.a.resize(static_cast<Index>(keep.size()), n);
  in.b.resize(static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    in.a.row(static_cast<Index>(k)) = a_all.row(keep[k]);
    in.b(static_cast<Index>(k)) = b_all(keep[k]);
  }
  in.a_dropped.resize(static_cast<Index>(in.dropped.size()), n);
  in.b_dropped.resize(static_cast<Index>(in.dropped.size()));
  for (std::size_t k = 0; k < in.dropped.size(); ++k) {
    in.a_dropped.row(static_cast<Index>(k)) = a_all.row(in.dropped[k]);
    in.b_dropped(static_cast<Index>(k)) = b_all(in.dropped[k]);
  }
  // Re-map the kept rows onto eq_source / eq_scale order.
  std::vector<int> src;
  std::vector<double> scl;
  std::vector<int> remap(static_cast<std::size_t>(me), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    src.push_back(in.eq_source[static_cast<std::size_t>(keep[k])]);
    scl.push_back(in.eq_scale[static_cast<std::size_t>(keep[k])]);
    remap[static_cast<std::size_t>(keep[k])] = static_cast<int>(k);
  }
  for (auto& bm : in.bounds)
    if (bm.fixed_row >= 0) bm.fixed_row = remap[static_cast<std::size_t>(bm.fixed_row)];
  // Dropped rows keep their original source/scale for the feasibility check.
  std::vector<int> dropped_src;
  for (int r : in.dropped) dropped_src.push_back(in.eq_source[static_cast<std::size_t>(r)]);
  in.dropped = dropped_src;
  in.eq_source = std::move(src);
  in.eq_scale = std::move(scl);

  const auto mi = static_cast<Index>(in_rows.size());
  in.g.resize(mi, n);
  in.hv.resize(mi);
  for (Index r = 0; r < mi; ++r) {
    in.g.row(r) = in_rows[static_cast<std::size_t>(r)].transpose();
    in.hv(r) = in_rhs[static_cast<std::size_t>(r)];
  }
  return in;
}

double max_step(const VectorXd& v, const VectorXd& dv) {
  double alpha = 1.0;
  for (Index k = 0; k < v.size(); ++k)
    if (dv(k) < 0.0) alpha = std::min(alpha, -v(k) / dv(k));
  return alpha;
}

double inf_norm(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

KktReport kkt_residuals(const ConvexProgram& prog, const SolveResult& result) {
  if (result.status != SolveStatus::optimal)
    throw std::logic_error(std::string("kkt_residuals requires an optimal result, got ") + to_string(result.status));
  const int n = prog.num_variables();
  const VectorXd& x = result.x;
  KktReport rep;
  VectorXd grad = prog.gradient(x);
  VectorXd stat = grad;
  double dual_obj = prog.constant() - 0.5 * x.dot(prog.hessian() * x);

  for (std::size_t r = 0; r < prog.equalities().size(); ++r) {
    const auto& row = prog.equalities()[r];
    const double y = result.eq_duals(static_cast<Index>(r));
    double lhs = 0.0;
    for (const auto& t : row.terms) {
      lhs += t.coef * x(t.var);
      stat(t.var) += t.coef * y;
    }
    rep.primal_feasibility = std::max(rep.primal_feasibility, std::abs(lhs - row.rhs));
    dual_obj -= row.rhs * y;
  }
  for (std::size_t r = 0; r < prog.inequalities().size(); ++r) {
    const auto& row = prog.inequalities()[r];
    const double z = result.ineq_duals(static_cast<Index>(r));
    double lhs = 0.0;
    for (const auto& t : row.terms) {
      lhs += t.coef * x(t.var);
      stat(t.var) += t.coef * z;
    }
    rep.primal_feasibility = std::max(rep.primal_feasibility, lhs - row.rhs);
    rep.dual_feasibility = std::max(rep.dual_feasibility, -z);
    rep.complementarity = std::max(rep.complementarity, std::abs(z * (row.rhs - lhs)));
    dual_obj -= row.rhs * z;
  }
  for (int k = 0; k < n; ++k) {
    const auto& var = prog.variables()[static_cast<std::size_t>(k)];
    const double zl = result.lower_duals(k);
    const double zu = result.upper_duals(k);
    stat(k) += zu - zl;
    rep.dual_feasibility = std::max({rep.dual_feasibility, -zl, -zu});
    if (std::isfinite(var.lower)) {
      rep.primal_feasibility = std::max(rep.primal_feasibility, var.lower - x(k));
      rep.complementarity = std::max(rep.complementarity, std::abs(zl * (x(k) - var.lower)));
      dual_obj += var.lower * zl;
    }
    if (std::isfinite(var.upper)) {
      rep.primal_feasibility = std::max(rep.primal_feasibility, x(k) - var.upper);
      rep.complementarity = std::max(rep.complementarity, std::abs(zu * (var.upper - x(k))));
      dual_obj -= var.upper * zu;
    }
  }
  rep.stationarity = inf_norm(stat);
  rep.primal_objective = prog.objective(x);
  rep.dual_objective = dual_obj;
  rep.duality_gap = rep.primal_objective - rep.dual_objective;
  return rep;
}

SolveResult solve(const ConvexProgram& prog) {
  check_program(prog);
  const auto& opt = prog.options;
  const int n = prog.num_variables();
  SolveResult res;
  res.x = VectorXd::Zero(n);
  res.eq_duals = VectorXd::Zero(static_cast<Index>(prog.equalities().size()));
  res.ineq_duals = VectorXd::Zero(static_cast<Index>(prog.inequalities().size()));
  res.lower_duals = VectorXd::Zero(n);
  res.upper_duals = VectorXd::Zero(n);

  for (const auto& var : prog.variables())
    if (var.lower > var.upper) {
      res.status = SolveStatus::infeasible;
      res.message = "variable '" + var.name + "' has empty bounds";
      return res;
    }

  const Internal in = build_internal(prog);
  const Index me = in.a.rows();
  const Index mi = in.g.rows();

  // Starting point: box midpoints, or one unit inside a single finite bound.
  VectorXd x(n);
  for (int k = 0; k < n; ++k) {
    const auto& var = prog.variables()[static_cast<std::size_t>(k)];
    const bool lo = std::isfinite(var.lower), hi = std::isfinite(var.upper);
    if (lo && hi) x(k) = 0.5 * (var.lower + var.upper);
    else if (lo) x(k) = var.lower + 1.0;
    else if (hi) x(k) = var.upper - 1.0;
    else x(k) = 0.0;
  }
  VectorXd y = VectorXd::Zero(me);
  VectorXd s = (in.hv - in.g * x).cwiseMax(1.0);
  VectorXd z = VectorXd::Ones(mi);

  const double b_norm = 1.0 + std::max(inf_norm(in.b), inf_norm(in.hv.unaryExpr([](double v) {
                                  return std::isfinite(v) ? v : 0.0;
                                })));
  const double c_norm = 1.0 + inf_norm(in.c);
  constexpr double kReg = 1e-11;
  constexpr double kBlowUp = 1e11;

  MatrixXd kkt(n + me, n + me);
  VectorXd rhs(n + me), sol(n + me);
  bool converged = false;
  int stalled = 0;
  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    const VectorXd rd = in.h * x + in.c + in.a.transpose() * y + in.g.transpose() * z;
    const VectorXd rp = in.a * x - in.b;
    const VectorXd rg = in.g * x + s - in.hv;
    const double gap = mi > 0 ? s.dot(z) : 0.0;
    const double mu = mi > 0 ? gap / static_cast<double>(mi) : 0.0;
    const double pobj = 0.5 * x.dot(in.h * x) + in.c.dot(x);

    if (std::max(inf_norm(rp), inf_norm(rg)) <= opt.feasibility_tol * b_norm &&
        inf_norm(rd) <= opt.optimality_tol * c_norm && gap <= opt.gap_tol * (1.0 + std::abs(pobj))) {
      converged = true;
      break;
    }
    if (!x.allFinite() || !y.allFinite() || !z.allFinite() || !s.allFinite()) break;

    // Certificates when iterates blow up.
    const double dual_size = std::max(inf_norm(y), inf_norm(z));
    if (dual_size > kBlowUp) {
      const VectorXd yn = y / dual_size, zn = z / dual_size;
      const double resid = inf_norm(in.a.transpose() * yn + in.g.transpose() * zn);
      const double lin = in.b.dot(yn) + in.hv.dot(zn);
      if (resid < 1e-6 && lin < -1e-9) {
        res.status = SolveStatus::infeasible;
        res.message = "primal infeasibility certificate found";
        break;
      }
    }
    const double x_size = inf_norm(x);
    if (x_size > kBlowUp) {
      const VectorXd d = x / x_size;
      const double gmax = mi > 0 ? (in.g * d).maxCoeff() : 0.0;
      if (inf_norm(in.a * d) < 1e-6 && gmax < 1e-6 && in.c.dot(d) < -1e-9 && inf_norm(in.h * d) < 1e-6) {
        res.status = SolveStatus::unbounded;
        res.message = "unbounded direction found";
        break;
      }
    }

    const VectorXd w = z.cwiseQuotient(s);
    kkt.setZero();
    kkt.topLeftCorner(n, n) = in.h + in.g.transpose() * w.asDiagonal() * in.g;
    const double reg = kReg + 1e-14 * kkt.topLeftCorner(n, n).diagonal().cwiseAbs().maxCoeff();
    kkt.topLeftCorner(n, n).diagonal().array() += reg;
    kkt.topRightCorner(n, me) = in.a.transpose();
    kkt.bottomLeftCorner(me, n) = in.a;
    kkt.bottomRightCorner(me, me).diagonal().setConstant(-kReg);
    Eigen::PartialPivLU<MatrixXd> lu(kkt);

    auto newton = [&](const VectorXd& rc, VectorXd& dx, VectorXd& dy, VectorXd& dz, VectorXd& ds) {
      const VectorXd t = (rc + z.cwiseProduct(rg)).cwiseQuotient(s);
      rhs.head(n) = -rd - in.g.transpose() * t;
      rhs.tail(me) = -rp;
      sol = lu.solve(rhs);
      // one step of iterative refinement against the regularised matrix
      sol += lu.solve(rhs - kkt * sol);
      dx = sol.head(n);
      dy = sol.tail(me);
      dz = t + w.cwiseProduct(in.g * dx);
      ds = -rg - in.g * dx;
    };

    VectorXd dx, dy, dz, ds;
    double alpha = 1.0;
    if (mi > 0) {
      newton(-s.cwiseProduct(z), dx, dy, dz, ds);
      const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
      const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi);
      const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);
      const VectorXd rc =
          -s.cwiseProduct(z) - ds.cwiseProduct(dz) + VectorXd::Constant(mi, sigma * mu);
      newton(rc, dx, dy, dz, ds);
      alpha = std::min(1.0, 0.995 * std::min(max_step(s, ds), max_step(z, dz)));
    } else {
      newton(VectorXd::Zero(0), dx, dy, dz, ds);
    }
    if (!dx.allFinite() || !dy.allFinite() || !dz.allFinite() || !ds.allFinite()) break;
    if (alpha < 1e-12) {
      if (++stalled > 5) break;
    } else {
      stalled = 0;
    }
    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
  }
  res.iterations = it;

  // Map back to the caller's rows.
  res.x = x;
  for (Index k = 0; k < me; ++k) {
    const int src = in.eq_source[static_cast<std::size_t>(k)];
    if (src >= 0) res.eq_duals(src) = y(k) / in.eq_scale[static_cast<std::size_t>(k)];
  }
  for (Index k = 0; k < mi; ++k) {
    const int src = in.in_source[static_cast<std::size_t>(k)];
    if (src >= 0) res.ineq_duals(src) = z(k) / in.in_scale[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < n; ++k) {
    const auto& bm = in.bounds[static_cast<std::size_t>(k)];
    if (bm.fixed_row >= 0) {
      const double yf = y(bm.fixed_row);
      res.upper_duals(k) = std::max(yf, 0.0);
      res.lower_duals(k) = std::max(-yf, 0.0);
    } else {
      if (bm.lower_row >= 0) res.lower_duals(k) = z(bm.lower_row);
      if (bm.upper_row >= 0) res.upper_duals(k) = z(bm.upper_row);
    }
  }
  res.objective = prog.objective(x);

  if (res.status == SolveStatus::infeasible || res.status == SolveStatus::unbounded) {
    return res;
  }
  if (converged && in.a_dropped.rows() > 0) {
    const double viol = inf_norm(in.a_dropped * x - in.b_dropped);
    if (viol > 10.0 * opt.feasibility_tol * b_norm) {
      res.status = SolveStatus::infeasible;
      res.message = "inconsistent linearly dependent equality rows";
      return res;
    }
  }
  SolveResult probe = res;
  probe.status = SolveStatus::optimal;
  res.diagnostics = kkt_residuals(prog, probe);
  if (converged) {
    res.status = SolveStatus::optimal;
  } else {
    res.status = SolveStatus::numerical_failure;
    res.message = "interior point did not converge in " + std::to_string(it) + " iterations";
  }
  return res;
}

}  // namespace lem::convex
