#include "dagdp/transcription.hpp"

#include <cmath>
#include <ostream>

namespace dagdp {

namespace {

// Legendre polynomial P_n on [-1, 1] by the three-term recurrence.
double legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return p0;
  for (int k = 2; k <= n; ++k) {
    const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

// Radau polynomial on (0, 1]: its roots are the collocation points.
double radau_poly(int n, double t) {
  const double x = 2.0 * t - 1.0;
  return legendre(n - 1, x) - legendre(n, x);
}

double bisect_root(int n, double lo, double hi) {
  double flo = radau_poly(n, lo);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = radau_poly(n, mid);
    if (fmid == 0.0) return mid;
    if ((flo < 0) == (fmid < 0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> radau_points(int n_cp) {
  if (n_cp < 1 || n_cp > 5)
    throw UnsupportedOrder("collocation order must be in 1..5, got " + std::to_string(n_cp));
  std::vector<double> pts;
  // Interior roots by sign-change scan, then the fixed right endpoint.
  const int samples = 4000;
  double prev_t = 1e-9;
  double prev_f = radau_poly(n_cp, prev_t);
  for (int i = 1; i <= samples; ++i) {
    const double t = static_cast<double>(i) / samples * (1.0 - 1e-7);
    const double f = radau_poly(n_cp, t);
    if ((prev_f < 0) != (f < 0)) pts.push_back(bisect_root(n_cp, prev_t, t));
    prev_t = t;
    prev_f = f;
  }
  pts.push_back(1.0);
  if (static_cast<int>(pts.size()) != n_cp)
    throw Error("radau point scan found an unexpected root count");
  return pts;
}

std::vector<std::vector<double>> differentiation_matrix(const std::vector<double>& points) {
  const int n = static_cast<int>(points.size());
  if (n < 1) throw Error("differentiation matrix needs at least one point");
  std::vector<double> nodes;
  nodes.push_back(0.0);
  nodes.insert(nodes.end(), points.begin(), points.end());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (std::size_t j = i + 1; j < nodes.size(); ++j)
      if (std::abs(nodes[i] - nodes[j]) < 1e-12)
        throw DuplicateNodes("interpolation nodes coincide");
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!(nodes[i - 1] < nodes[i])) throw Error("interpolation nodes must be ascending");

  // M[j][k] = derivative of Lagrange basis l_j at points[k].
  std::vector<std::vector<double>> M(nodes.size(), std::vector<double>(points.size(), 0.0));
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    for (std::size_t k = 0; k < points.size(); ++k) {
      const double x = points[k];
      double sum = 0.0;
      for (std::size_t m = 0; m < nodes.size(); ++m) {
        if (m == j) continue;
        double prod = 1.0 / (nodes[j] - nodes[m]);
        for (std::size_t l = 0; l < nodes.size(); ++l) {
          if (l == j || l == m) continue;
          prod *= (x - nodes[l]) / (nodes[j] - nodes[l]);
        }
        sum += prod;
      }
      M[j][k] = sum;
    }
  }
  return M;
}

DiscretizedNlp::DiscretizedNlp(std::vector<double> lower, std::vector<double> upper,
                               Expr objective, std::vector<Expr> constraints,
                               std::vector<FlatVarInfo> layout)
    : lower_(std::move(lower)),
      upper_(std::move(upper)),
      objective_(std::move(objective)),
      constraints_(std::move(constraints)),
      layout_(std::move(layout)) {
  if (lower_.size() != upper_.size()) throw InvalidSpec("bound vectors differ in length");
  for (std::size_t i = 0; i < lower_.size(); ++i)
    if (!(lower_[i] <= upper_[i])) throw InvalidSpec("inverted bound at flat index " + std::to_string(i));
}

int DiscretizedNlp::state_index(int m, int g) const {
  if (m < 0 || m >= state_count || g < 0 || g >= grid_points())
    throw IndexOutOfRange("state grid index");
  return m * grid_points() + g;
}

int DiscretizedNlp::algebraic_index(int y, int e, int k) const {
  if (y < 0 || y >= algebraic_count || e < 0 || e >= elements || k < 1 || k > points_per_element)
    throw IndexOutOfRange("algebraic grid index");
  return state_count * grid_points() + y * elements * points_per_element +
         e * points_per_element + (k - 1);
}

int DiscretizedNlp::control_index(int c, int e) const {
  if (c < 0 || c >= control_count || e < 0 || e >= elements)
    throw IndexOutOfRange("control element index");
  return state_count * grid_points() + algebraic_count * elements * points_per_element +
         c * elements + e;
}

int DiscretizedNlp::parameter_index(int p) const {
  if (p < 0 || p >= parameter_count) throw IndexOutOfRange("parameter index");
  return state_count * grid_points() + algebraic_count * elements * points_per_element +
         control_count * elements + p;
}

namespace {

constexpr double kQuadratureBound = 1e9;

struct GridShape {
  int nx;  // model states
  int ny;
  int nu;
  int np;
  int stages;
  int nfe;
  int ncp;
  int elements;        // stages * nfe
  int grid;            // elements * ncp + 1
  int state_count;     // nx + 1 (quadrature)

  int state_flat(int m, int g) const { return m * grid + g; }
  int alg_flat(int y, int e, int k) const {
    return state_count * grid + y * elements * ncp + e * ncp + (k - 1);
  }
  int control_flat(int c, int e) const {
    return state_count * grid + ny * elements * ncp + c * elements + e;
  }
  int param_flat(int p) const {
    return state_count * grid + ny * elements * ncp + nu * elements + p;
  }
  int n_vars() const { return state_count * grid + ny * elements * ncp + nu * elements + np; }
};

GridShape make_shape(const DagdpModel& model, const CollocationScheme& scheme) {
  if (scheme.n_fe_per_stage < 1) throw InvalidSpec("elements per stage must be positive");
  GridShape s;
  s.nx = static_cast<int>(model.states().size());
  s.ny = static_cast<int>(model.algebraics().size());
  s.nu = static_cast<int>(model.controls().size());
  s.np = static_cast<int>(model.parameters().size());
  s.stages = model.stage_count();
  s.nfe = scheme.n_fe_per_stage;
  s.ncp = scheme.n_cp;
  s.elements = s.stages * s.nfe;
  s.grid = s.elements * s.ncp + 1;
  s.state_count = s.nx + 1;
  return s;
}

std::string quadrature_name(const DagdpModel& model) {
  std::string name = "q";
  bool taken = true;
  while (taken) {
    taken = false;
    for (const auto& n : model.local_names())
      if (n == name) {
        taken = true;
        name += "_";
        break;
      }
  }
  return name;
}

}  // namespace

DiscretizedNlp transcribe(const DagdpModel& model, const BooleanAssignment& a,
                          const CollocationScheme& scheme) {
  if (!is_feasible(model, a))
    throw InfeasibleConfiguration("assignment " + a.render() + " violates the model logic");
  const GridShape shape = make_shape(model, scheme);
  const auto tau = radau_points(scheme.n_cp);
  const auto M = differentiation_matrix(tau);

  // --- bounds and layout ---------------------------------------------------
  std::vector<double> lower(static_cast<std::size_t>(shape.n_vars()));
  std::vector<double> upper(static_cast<std::size_t>(shape.n_vars()));
  std::vector<FlatVarInfo> layout(static_cast<std::size_t>(shape.n_vars()));
  std::vector<double> grid_times(static_cast<std::size_t>(shape.grid));

  std::vector<double> element_start(static_cast<std::size_t>(shape.elements));
  std::vector<double> element_width(static_cast<std::size_t>(shape.elements));
  for (int e = 0; e < shape.elements; ++e) {
    const int s = e / shape.nfe;
    const double h =
        (model.boundaries()[s + 1] - model.boundaries()[s]) / shape.nfe;
    element_start[e] = model.boundaries()[s] + (e - s * shape.nfe) * h;
    element_width[e] = h;
  }
  grid_times[0] = model.boundaries()[0];
  for (int e = 0; e < shape.elements; ++e)
    for (int k = 1; k <= shape.ncp; ++k)
      grid_times[static_cast<std::size_t>(e * shape.ncp + k)] =
          element_start[e] + element_width[e] * tau[static_cast<std::size_t>(k - 1)];

  const std::string qname = quadrature_name(model);
  for (int m = 0; m < shape.state_count; ++m) {
    const bool is_quad = m == shape.nx;
    const double lb = is_quad ? -kQuadratureBound : model.states()[m].lower;
    const double ub = is_quad ? kQuadratureBound : model.states()[m].upper;
    const std::string& base = is_quad ? qname : model.states()[m].name;
    for (int g = 0; g < shape.grid; ++g) {
      const int idx = shape.state_flat(m, g);
      lower[idx] = lb;
      upper[idx] = ub;
      const int e = g == 0 ? 0 : (g - 1) / shape.ncp;
      const int k = g - e * shape.ncp;
      FlatVarInfo info;
      info.kind = is_quad ? FlatVarInfo::Kind::Quadrature : FlatVarInfo::Kind::State;
      info.stage = e / shape.nfe;
      info.element = e;
      info.point = k;
      info.declaration = is_quad ? -1 : m;
      info.name = base + "[e" + std::to_string(e) + ",p" + std::to_string(k) + "]";
      info.time = grid_times[g];
      layout[idx] = std::move(info);
    }
    // Initial condition: fixed through equal bounds at the horizon start.
    const int idx0 = shape.state_flat(m, 0);
    lower[idx0] = upper[idx0] = is_quad ? 0.0 : model.states()[m].initial;
  }
  for (int y = 0; y < shape.ny; ++y)
    for (int e = 0; e < shape.elements; ++e)
      for (int k = 1; k <= shape.ncp; ++k) {
        const int idx = shape.alg_flat(y, e, k);
        lower[idx] = model.algebraics()[y].lower;
        upper[idx] = model.algebraics()[y].upper;
        FlatVarInfo info;
        info.kind = FlatVarInfo::Kind::Algebraic;
        info.stage = e / shape.nfe;
        info.element = e;
        info.point = k;
        info.declaration = y;
        info.name = model.algebraics()[y].name + "[e" + std::to_string(e) + ",p" +
                    std::to_string(k) + "]";
        info.time = grid_times[static_cast<std::size_t>(e * shape.ncp + k)];
        layout[idx] = std::move(info);
      }
  for (int c = 0; c < shape.nu; ++c)
    for (int e = 0; e < shape.elements; ++e) {
      const int idx = shape.control_flat(c, e);
      lower[idx] = model.controls()[c].lower;
      upper[idx] = model.controls()[c].upper;
      FlatVarInfo info;
      info.kind = FlatVarInfo::Kind::Control;
      info.stage = e / shape.nfe;
      info.element = e;
      info.declaration = c;
      info.name = model.controls()[c].name + "[e" + std::to_string(e) + "]";
      info.time = element_start[e];
      layout[idx] = std::move(info);
      if (e == 0 && model.controls()[c].fixed_initial)
        lower[idx] = upper[idx] = *model.controls()[c].fixed_initial;
    }
  for (int p = 0; p < shape.np; ++p) {
    const int idx = shape.param_flat(p);
    lower[idx] = model.parameters()[p].lower;
    upper[idx] = model.parameters()[p].upper;
    FlatVarInfo info;
    info.kind = FlatVarInfo::Kind::Parameter;
    info.declaration = p;
    info.name = model.parameters()[p].name;
    layout[idx] = std::move(info);
  }

  // --- constraints ---------------------------------------------------------
  const int time_local = model.time_index();
  std::vector<Expr> constraints;
  constraints.reserve(static_cast<std::size_t>(shape.elements * shape.ncp *
                                               (shape.state_count + shape.ny)));
  for (int e = 0; e < shape.elements; ++e) {
    const int stage = e / shape.nfe;
    const int mode = a.selected[static_cast<std::size_t>(stage)];
    const Disjunct& dis = model.disjuncts(stage)[static_cast<std::size_t>(mode)];
    const double h = element_width[e];
    for (int k = 1; k <= shape.ncp; ++k) {
      const double t_ek = grid_times[static_cast<std::size_t>(e * shape.ncp + k)];
      auto remap = [&](int local) -> Expr {
        if (local == time_local) return Expr::constant(t_ek);
        if (local < shape.nx) return Expr::variable(shape.state_flat(local, e * shape.ncp + k));
        if (local < shape.nx + shape.nu)
          return Expr::variable(shape.control_flat(local - shape.nx, e));
        if (local < shape.nx + shape.nu + shape.ny)
          return Expr::variable(shape.alg_flat(local - shape.nx - shape.nu, e, k));
        return Expr::variable(shape.param_flat(local - shape.nx - shape.nu - shape.ny));
      };
      for (int m = 0; m < shape.state_count; ++m) {
        // d/dtau of the interpolant at tau_k, divided by the element width.
        Expr deriv = Expr::constant(M[0][static_cast<std::size_t>(k - 1)] / h) *
                     Expr::variable(shape.state_flat(m, e * shape.ncp));
        for (int j = 1; j <= shape.ncp; ++j)
          deriv = deriv + Expr::constant(M[static_cast<std::size_t>(j)]
                                          [static_cast<std::size_t>(k - 1)] / h) *
                              Expr::variable(shape.state_flat(m, e * shape.ncp + j));
        const Expr& rhs_local =
            m < shape.nx ? dis.state_rhs[static_cast<std::size_t>(m)] : model.integrand();
        if (m == shape.nx && rhs_local.empty()) {
          constraints.push_back(deriv);  // no integrand: quadrature stays constant
          continue;
        }
        constraints.push_back(deriv - rhs_local.substitute(remap));
      }
      for (const Expr& alg : dis.algebraic) constraints.push_back(alg.substitute(remap));
      for (const Expr& glob : model.global_constraints())
        constraints.push_back(glob.substitute(remap));
    }
  }

  // Objective: minus the quadrature state at the final time (the integrand
  // is a payoff; the NLP minimizes).
  Expr objective = Expr::neg(Expr::variable(shape.state_flat(shape.nx, shape.grid - 1)));

  DiscretizedNlp nlp(std::move(lower), std::move(upper), std::move(objective),
                     std::move(constraints), std::move(layout));
  nlp.state_count = shape.state_count;
  nlp.control_count = shape.nu;
  nlp.algebraic_count = shape.ny;
  nlp.parameter_count = shape.np;
  nlp.elements = shape.elements;
  nlp.points_per_element = shape.ncp;
  nlp.grid_times = std::move(grid_times);
  return nlp;
}

namespace {

// Dense Gaussian elimination with partial pivoting; solves in place.
void solve_dense(std::vector<std::vector<double>>& A, std::vector<double>& b) {
  const int n = static_cast<int>(b.size());
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
    if (A[pivot][col] == 0.0) throw Error("singular collocation system");
    std::swap(A[col], A[pivot]);
    std::swap(b[col], b[pivot]);
    for (int r = col + 1; r < n; ++r) {
      const double factor = A[r][col] / A[col][col];
      if (factor == 0.0) continue;
      for (int c = col; c < n; ++c) A[r][c] -= factor * A[col][c];
      b[r] -= factor * b[col];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    double sum = b[r];
    for (int c = r + 1; c < n; ++c) sum -= A[r][c] * b[c];
    b[r] = sum / A[r][r];
  }
}

}  // namespace

std::vector<std::vector<double>> collocation_simulate(const DagdpModel& model,
                                                      const BooleanAssignment& a,
                                                      const CollocationScheme& scheme,
                                                      const std::vector<double>& controls) {
  if (!is_feasible(model, a))
    throw InfeasibleConfiguration("assignment " + a.render() + " violates the model logic");
  if (!model.algebraics().empty() || !model.parameters().empty())
    throw InvalidSpec("simulation mode covers pure ODE models only");
  const GridShape shape = make_shape(model, scheme);
  if (static_cast<int>(controls.size()) != shape.nu * shape.elements)
    throw InvalidSpec("controls must hold one value per control per element");
  const auto tau = radau_points(scheme.n_cp);
  const auto M = differentiation_matrix(tau);
  const int nsx = shape.state_count;
  const int n = nsx * shape.ncp;  // unknowns per element

  std::vector<std::vector<double>> out(
      static_cast<std::size_t>(nsx), std::vector<double>(static_cast<std::size_t>(shape.grid)));
  std::vector<double> x_in(static_cast<std::size_t>(nsx));
  for (int m = 0; m < shape.nx; ++m) out[m][0] = x_in[m] = model.states()[m].initial;
  out[shape.nx][0] = x_in[shape.nx] = 0.0;

  std::vector<double> local_point(static_cast<std::size_t>(model.local_var_count()));
  std::vector<double> local_grad(static_cast<std::size_t>(model.local_var_count()));
  EvalScratch scratch;

  for (int e = 0; e < shape.elements; ++e) {
    const int stage = e / shape.nfe;
    const int mode = a.selected[static_cast<std::size_t>(stage)];
    const Disjunct& dis = model.disjuncts(stage)[static_cast<std::size_t>(mode)];
    const double h = (model.boundaries()[stage + 1] - model.boundaries()[stage]) / shape.nfe;
    const double t0 = model.boundaries()[stage] + (e - stage * shape.nfe) * h;

    // Unknowns w[m*ncp + (k-1)] = state m at collocation point k.
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int m = 0; m < nsx; ++m)
      for (int k = 1; k <= shape.ncp; ++k) w[m * shape.ncp + k - 1] = x_in[m];

    for (int newton = 0; newton < 60; ++newton) {
      std::vector<std::vector<double>> J(static_cast<std::size_t>(n),
                                         std::vector<double>(static_cast<std::size_t>(n), 0.0));
      std::vector<double> r(static_cast<std::size_t>(n), 0.0);
      for (int k = 1; k <= shape.ncp; ++k) {
        for (int c = 0; c < shape.nu; ++c)
          local_point[shape.nx + c] = controls[static_cast<std::size_t>(c * shape.elements + e)];
        for (int m = 0; m < shape.nx; ++m)
          local_point[m] = w[m * shape.ncp + k - 1];
        local_point[static_cast<std::size_t>(model.time_index())] =
            t0 + h * tau[static_cast<std::size_t>(k - 1)];
        for (int m = 0; m < nsx; ++m) {
          const int row = m * shape.ncp + k - 1;
          double deriv = x_in[m] * M[0][static_cast<std::size_t>(k - 1)] / h;
          for (int j = 1; j <= shape.ncp; ++j) {
            deriv += w[m * shape.ncp + j - 1] *
                     M[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - 1)] / h;
            J[row][m * shape.ncp + j - 1] +=
                M[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - 1)] / h;
          }
          const Expr& f = m < shape.nx ? dis.state_rhs[static_cast<std::size_t>(m)]
                                       : model.integrand();
          double fval = 0.0;
          if (!f.empty()) {
            std::fill(local_grad.begin(), local_grad.end(), 0.0);
            fval = f.eval(local_point, scratch);
            f.backprop(1.0, local_grad, scratch);
            for (int m2 = 0; m2 < shape.nx; ++m2)
              J[row][m2 * shape.ncp + k - 1] -= local_grad[static_cast<std::size_t>(m2)];
          }
          r[row] = deriv - fval;
        }
      }
      double rmax = 0.0;
      for (double v : r) rmax = std::max(rmax, std::abs(v));
      if (rmax <= 1e-12) break;
      solve_dense(J, r);
      for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] -= r[static_cast<std::size_t>(i)];
    }

    for (int m = 0; m < nsx; ++m) {
      for (int k = 1; k <= shape.ncp; ++k)
        out[m][static_cast<std::size_t>(e * shape.ncp + k)] = w[m * shape.ncp + k - 1];
      x_in[m] = w[m * shape.ncp + shape.ncp - 1];
      if (!std::isfinite(x_in[m])) throw NonFiniteState("collocation simulation diverged");
    }
  }
  return out;
}

void write_debug(const DiscretizedNlp& nlp, std::ostream& out) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(nlp.n_vars()));
  for (int i = 0; i < nlp.n_vars(); ++i) {
    if (static_cast<std::size_t>(i) < nlp.layout().size() &&
        !nlp.layout()[static_cast<std::size_t>(i)].name.empty())
      names.push_back(nlp.layout()[static_cast<std::size_t>(i)].name);
    else
      names.push_back("v" + std::to_string(i));
  }
  out << "nlp " << nlp.n_vars() << " variables, " << nlp.constraints().size()
      << " equality constraints\n";
  for (int i = 0; i < nlp.n_vars(); ++i)
    out << "var " << i << " " << names[static_cast<std::size_t>(i)] << " in ["
        << format_double(nlp.lower()[static_cast<std::size_t>(i)]) << ", "
        << format_double(nlp.upper()[static_cast<std::size_t>(i)]) << "]\n";
  out << "objective " << nlp.objective().prefix(names) << "\n";
  for (std::size_t c = 0; c < nlp.constraints().size(); ++c)
    out << "eq " << c << " " << nlp.constraints()[c].prefix(names) << "\n";
}

}  // namespace dagdp
