#include "lorentz/metric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lorentz/geodesic.hpp"

namespace lorentz {

namespace {

constexpr double kPi = std::numbers::pi;

// Golden-section refinement of a 1D maximum bracketed by [a, b].
double golden_max(const std::function<double(double)>& fn, double a, double b, double best) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = fn(c), fd = fn(d);
  for (int it = 0; it < 60 && b - a > 1e-13 * (1.0 + std::abs(a)); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fn(d);
    }
  }
  return std::max({best, fc, fd});
}

// Max over [a, b] by n + 1 uniform samples followed by local refinement of the best one.
double dense_max(const std::function<double(double)>& fn, double a, double b, int n) {
  if (b <= a) return fn(a);
  const double h = (b - a) / n;
  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (int k = 0; k <= n; ++k) {
    const double v = fn(a + k * h);
    if (v > best) {
      best = v;
      arg = k;
    }
  }
  const double lo = a + std::max(0, arg - 1) * h;
  const double hi = a + std::min(n, arg + 1) * h;
  return golden_max(fn, lo, hi, best);
}

// 2D max of fn(x, y) over the chart disc of radius `radius` about (cx, cy), clipped to
// |z| <= clip. Polar samples followed by alternating golden refinement in angle and radius.
double disc_max(const std::function<double(double, double)>& fn, double cx, double cy,
                double radius, double clip, int n_r, int n_t) {
  auto inside = [&](double x, double y) { return x * x + y * y <= clip * clip * (1.0 + 1e-14); };
  double best = -std::numeric_limits<double>::infinity();
  double best_r = 0.0, best_t = 0.0;
  if (inside(cx, cy)) best = fn(cx, cy);
  for (int i = 1; i <= n_r; ++i) {
    const double r = radius * i / n_r;
    for (int j = 0; j < n_t; ++j) {
      const double t = 2.0 * kPi * j / n_t;
      const double x = cx + r * std::cos(t), y = cy + r * std::sin(t);
      if (!inside(x, y)) continue;
      const double v = fn(x, y);
      if (v > best) {
        best = v;
        best_r = r;
        best_t = t;
      }
    }
  }
  if (best_r == 0.0) return best;
  auto polar = [&](double r, double t) {
    const double x = cx + r * std::cos(t), y = cy + r * std::sin(t);
    if (!inside(x, y)) return -std::numeric_limits<double>::infinity();
    return fn(x, y);
  };
  const double dt = 2.0 * kPi / n_t, dr = radius / n_r;
  best = golden_max([&](double t) { return polar(best_r, t); }, best_t - dt, best_t + dt, best);
  best = golden_max([&](double r) { return polar(r, best_t); }, std::max(0.0, best_r - dr),
                    std::min(radius, best_r + dr), best);
  return best;
}

// Fixed-step RK4 solution of f'' = -K f on [0, r_max] with quintic Hermite evaluation
// using (f, f', f'' = -K f) at the nodes.
class JacobiTable {
 public:
  JacobiTable(std::function<double(double)> curvature, double r_max, double step)
      : curvature_(std::move(curvature)) {
    const int n = std::max(1, static_cast<int>(std::ceil(r_max / step - 1e-12)));
    h_ = r_max / n;
    f_.resize(n + 1);
    fp_.resize(n + 1);
    k_.resize(n + 1);
    double y0 = 0.0, y1 = 1.0;
    for (int i = 0; i <= n; ++i) {
      const double r = i * h_;
      f_[i] = y0;
      fp_[i] = y1;
      k_[i] = curvature_(r);
      if (i == n) break;
      const double kh = curvature_(r + 0.5 * h_), k1 = curvature_(r + h_);
      const double a0 = y1, b0 = -k_[i] * y0;
      const double a1 = y1 + 0.5 * h_ * b0, b1 = -kh * (y0 + 0.5 * h_ * a0);
      const double a2 = y1 + 0.5 * h_ * b1, b2 = -kh * (y0 + 0.5 * h_ * a1);
      const double a3 = y1 + h_ * b2, b3 = -k1 * (y0 + h_ * a2);
      y0 += h_ / 6.0 * (a0 + 2 * a1 + 2 * a2 + a3);
      y1 += h_ / 6.0 * (b0 + 2 * b1 + 2 * b2 + b3);
    }
    r_max_ = r_max;
  }

  // f and f' at r; f is extended as an odd function.
  std::pair<double, double> eval(double r) const {
    const double sign = r < 0 ? -1.0 : 1.0;
    r = std::abs(r);
    if (r > r_max_ * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "warp evaluated at r=" << r << " beyond chart radius " << r_max_;
      throw MetricError(os.str());
    }
    const int last = static_cast<int>(f_.size()) - 1;
    int i = std::min(last - 1, static_cast<int>(r / h_));
    const double t = (r - i * h_) / h_;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    const double h0 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
    const double h1 = t - 6 * t3 + 8 * t4 - 3 * t5;
    const double h2 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
    const double h3 = 10 * t3 - 15 * t4 + 6 * t5;
    const double h4 = -4 * t3 + 7 * t4 - 3 * t5;
    const double h5 = 0.5 * t3 - t4 + 0.5 * t5;
    const double d0 = -30 * t2 + 60 * t3 - 30 * t4;
    const double d1 = 1 - 18 * t2 + 32 * t3 - 15 * t4;
    const double d2 = t - 4.5 * t2 + 6 * t3 - 2.5 * t4;
    const double d3 = 30 * t2 - 60 * t3 + 30 * t4;
    const double d4 = -12 * t2 + 28 * t3 - 15 * t4;
    const double d5 = 1.5 * t2 - 4 * t3 + 2.5 * t4;
    const double s0 = -k_[i] * f_[i], s1 = -k_[i + 1] * f_[i + 1];
    const double hh = h_ * h_;
    const double f = h0 * f_[i] + h1 * h_ * fp_[i] + h2 * hh * s0 + h3 * f_[i + 1] +
                     h4 * h_ * fp_[i + 1] + h5 * hh * s1;
    const double fp = (d0 * f_[i] + d1 * h_ * fp_[i] + d2 * hh * s0 + d3 * f_[i + 1] +
                       d4 * h_ * fp_[i + 1] + d5 * hh * s1) /
                      h_;
    return {sign * f, fp};
  }

 private:
  std::function<double(double)> curvature_;
  double h_ = 0.0;
  double r_max_ = 0.0;
  std::vector<double> f_, fp_, k_;
};

}  // namespace

Christoffel christoffel(const PolarMetricSample& s) {
  Christoffel c;
  c.r_rr = s.E_r / (2.0 * s.E);
  c.r_rt = s.E_t / (2.0 * s.E);
  c.r_tt = -s.G_r / (2.0 * s.E);
  c.t_rr = -s.E_t / (2.0 * s.G);
  c.t_rt = s.G_r / (2.0 * s.G);
  c.t_tt = s.G_t / (2.0 * s.G);
  return c;
}

CurvatureBounds MetricChart::bounds() const {
  CurvatureBounds b;
  b.c1 = c1();
  b.c2 = c2();
  // Captures this chart; valid while the chart outlives the bounds.
  b.c2_of_radius = [this](double l) { return c2_of_radius(l); };
  const auto d = max_log_curvature_derivatives({0.0, 0.0}, chart_radius());
  b.c3 = d.gradient_norm;
  b.c4 = d.hessian_norm;
  return b;
}

// ---------------------------------------------------------------------------
// WarpedPolarMetric

WarpedPolarMetric::WarpedPolarMetric(std::string family, std::function<double(double)> curvature,
                                     WarpProfile warp, double r_max,
                                     std::optional<RadialLogCurvature> log_curvature,
                                     std::optional<double> constant_curvature)
    : family_(std::move(family)),
      curvature_(std::move(curvature)),
      warp_(std::move(warp)),
      r_max_(r_max),
      log_curvature_(std::move(log_curvature)),
      constant_curvature_(constant_curvature) {
  if (!(r_max_ > 0.0)) throw MetricError("chart radius must be positive");
  const int n = 20000;
  c1_ = -dense_max([this](double r) { return curvature_(r); }, 0.0, r_max_, n);
  c2_ = dense_max([this](double r) { return -curvature_(r); }, 0.0, r_max_, n);
  if (!(c1_ > 0.0)) throw MetricError("curvature is not strictly negative on the chart");
}

PolarMetricSample WarpedPolarMetric::sample(double r, double /*theta*/) const {
  const double f = warp_.f(r), fp = warp_.f_prime(r);
  PolarMetricSample s;
  s.E = 1.0;
  s.G = f * f;
  s.G_r = 2.0 * f * fp;
  return s;
}

std::pair<double, double> WarpedPolarMetric::log_curvature_radial(double r) const {
  if (log_curvature_) return {log_curvature_->first(r), log_curvature_->second(r)};
  const double h = 1e-4;
  // K is even in r for a smooth radial metric.
  auto F = [this](double x) { return std::log(-curvature_(std::abs(x))); };
  const double fm = F(r - h), f0 = F(r), fp = F(r + h);
  return {(fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)};
}

LogCurvatureDerivatives WarpedPolarMetric::log_curvature_derivatives(double r, double) const {
  r = std::abs(r);
  const auto [d1, d2] = log_curvature_radial(r);
  LogCurvatureDerivatives out;
  out.gradient_norm = std::abs(d1);
  if (r < 1e-6) {
    out.hessian_norm = std::abs(log_curvature_radial(0.0).second);
  } else {
    out.hessian_norm = std::max(std::abs(d2), std::abs(warp_.f_prime(r) / warp_.f(r) * d1));
  }
  return out;
}

double WarpedPolarMetric::c2_of_radius(double l) const {
  if (l < 0.0 || l > r_max_ * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "radius " << l << " outside chart [0, " << r_max_ << "]";
    throw MetricError(os.str());
  }
  if (constant_curvature_) return *constant_curvature_;
  const int n = std::max(2000, static_cast<int>(std::ceil(l / 1e-3)));
  return dense_max([this](double r) { return -curvature_(r); }, 0.0, std::min(l, r_max_), n);
}

double WarpedPolarMetric::max_neg_curvature(ChartPoint center, double radius) const {
  if (constant_curvature_) return *constant_curvature_;
  const double lo = std::max(0.0, std::abs(center.r) - radius);
  const double hi = std::min(r_max_, std::abs(center.r) + radius);
  return dense_max([this](double r) { return -curvature_(r); }, lo, hi, 4000);
}

LogCurvatureDerivatives WarpedPolarMetric::max_log_curvature_derivatives(ChartPoint center,
                                                                         double radius) const {
  if (constant_curvature_) return {};
  const double lo = std::max(0.0, std::abs(center.r) - radius);
  const double hi = std::min(r_max_, std::abs(center.r) + radius);
  LogCurvatureDerivatives out;
  out.gradient_norm = dense_max(
      [this](double r) { return log_curvature_derivatives(r, 0.0).gradient_norm; }, lo, hi, 4000);
  out.hessian_norm = dense_max(
      [this](double r) { return log_curvature_derivatives(r, 0.0).hessian_norm; }, lo, hi, 4000);
  return out;
}

double WarpedPolarMetric::distance(ChartPoint a, ChartPoint b) const {
  if (a.r == 0.0) return std::abs(b.r);
  if (b.r == 0.0) return std::abs(a.r);
  const double dt = a.theta - b.theta;
  const double s = std::sin(0.5 * dt);
  if (s * s < 1e-30) return std::abs(a.r - b.r);
  if (constant_curvature_) {
    const double k = std::sqrt(*constant_curvature_);
    const double sh = std::sinh(0.5 * k * (a.r - b.r));
    const double q = sh * sh + std::sinh(k * a.r) * std::sinh(k * b.r) * s * s;
    return 2.0 * std::asinh(std::sqrt(q)) / k;
  }
  return clairaut_distance(warp_.f, warp_.f_prime, a.r, b.r, dt);
}

// ---------------------------------------------------------------------------
// ConformalDiscMetric

ConformalDiscMetric::ConformalDiscMetric(std::string family, ConformalFactor factor,
                                         double domain_radius, bool radial, double psi_lower_bound,
                                         std::function<double(ChartPoint, ChartPoint)> closed)
    : family_(std::move(family)),
      factor_(std::move(factor)),
      domain_radius_(domain_radius),
      radial_(radial),
      psi_lower_bound_(psi_lower_bound),
      closed_form_distance_(std::move(closed)) {
  if (!(domain_radius_ > 0.0)) throw MetricError("domain radius must be positive");
  if (!(psi_lower_bound_ > 0.0)) throw MetricError("conformal factor bound must be positive");
  auto negk = [this](double x, double y) { return -curvature_xy(x, y); };
  auto k = [this](double x, double y) { return curvature_xy(x, y); };
  c1_ = -disc_max(k, 0.0, 0.0, domain_radius_, domain_radius_, 200, 256);
  c2_ = disc_max(negk, 0.0, 0.0, domain_radius_, domain_radius_, 200, 256);
  if (!(c1_ > 0.0)) throw MetricError("curvature is not strictly negative on the chart");
}

double ConformalDiscMetric::curvature_xy(double x, double y) const {
  return -factor_.laplacian_log_psi(x, y) / (2.0 * factor_.psi(x, y));
}

double ConformalDiscMetric::curvature(double r, double theta) const {
  return curvature_xy(r * std::cos(theta), r * std::sin(theta));
}

PolarMetricSample ConformalDiscMetric::sample(double r, double theta) const {
  const double c = std::cos(theta), s = std::sin(theta);
  const double x = r * c, y = r * s;
  const double psi = factor_.psi(x, y);
  const auto g = factor_.grad_log_psi(x, y);
  const double lr = c * g[0] + s * g[1];
  const double lt = -y * g[0] + x * g[1];
  PolarMetricSample out;
  out.E = psi;
  out.E_r = psi * lr;
  out.E_t = psi * lt;
  out.G = psi * r * r;
  out.G_r = psi * r * r * lr + 2.0 * psi * r;
  out.G_t = psi * r * r * lt;
  return out;
}

LogCurvatureDerivatives ConformalDiscMetric::log_curvature_derivatives(double r,
                                                                       double theta) const {
  const double x = r * std::cos(theta), y = r * std::sin(theta);
  const double h = 1e-4;
  auto F = [this](double px, double py) { return std::log(-curvature_xy(px, py)); };
  const double f0 = F(x, y);
  const double fxp = F(x + h, y), fxm = F(x - h, y), fyp = F(x, y + h), fym = F(x, y - h);
  const double Fx = (fxp - fxm) / (2 * h), Fy = (fyp - fym) / (2 * h);
  const double Fxx = (fxp - 2 * f0 + fxm) / (h * h), Fyy = (fyp - 2 * f0 + fym) / (h * h);
  const double Fxy = (F(x + h, y + h) - F(x + h, y - h) - F(x - h, y + h) + F(x - h, y - h)) /
                     (4 * h * h);
  const auto gl = factor_.grad_log_psi(x, y);
  const double sx = 0.5 * gl[0], sy = 0.5 * gl[1];
  const double hxx = Fxx - sx * Fx + sy * Fy;
  const double hxy = Fxy - sy * Fx - sx * Fy;
  const double hyy = Fyy + sx * Fx - sy * Fy;
  const double psi = factor_.psi(x, y);
  const double tr = 0.5 * (hxx + hyy), dif = 0.5 * (hxx - hyy);
  const double rad = std::sqrt(dif * dif + hxy * hxy);
  LogCurvatureDerivatives out;
  out.gradient_norm = std::sqrt((Fx * Fx + Fy * Fy) / psi);
  out.hessian_norm = (std::abs(tr) + rad) / psi;
  return out;
}

double ConformalDiscMetric::sampled_max_neg_curvature(double cx, double cy, double radius) const {
  return disc_max([this](double x, double y) { return -curvature_xy(x, y); }, cx, cy, radius,
                  domain_radius_, 160, 256);
}

double ConformalDiscMetric::c2_of_radius(double l) const {
  if (l < 0.0 || l > domain_radius_ * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "radius " << l << " outside chart [0, " << domain_radius_ << "]";
    throw MetricError(os.str());
  }
  return sampled_max_neg_curvature(0.0, 0.0, l);
}

double ConformalDiscMetric::max_neg_curvature(ChartPoint center, double radius) const {
  const double chart_radius = radius / euclidean_lower_bound_factor();
  return sampled_max_neg_curvature(center.r * std::cos(center.theta),
                                   center.r * std::sin(center.theta), chart_radius);
}

LogCurvatureDerivatives ConformalDiscMetric::max_log_curvature_derivatives(ChartPoint center,
                                                                           double radius) const {
  const double cx = center.r * std::cos(center.theta), cy = center.r * std::sin(center.theta);
  const double chart_radius = radius / euclidean_lower_bound_factor();
  auto at = [this](double x, double y) {
    return log_curvature_derivatives(std::hypot(x, y), std::atan2(y, x));
  };
  LogCurvatureDerivatives out;
  out.gradient_norm = disc_max([&](double x, double y) { return at(x, y).gradient_norm; }, cx, cy,
                               chart_radius, domain_radius_, 60, 128);
  out.hessian_norm = disc_max([&](double x, double y) { return at(x, y).hessian_norm; }, cx, cy,
                              chart_radius, domain_radius_, 60, 128);
  return out;
}

double ConformalDiscMetric::distance(ChartPoint a, ChartPoint b) const {
  if (closed_form_distance_) return closed_form_distance_(a, b);
  return shoot_distance(conformal_hamiltonian(*this),
                        {a.r * std::cos(a.theta), a.r * std::sin(a.theta)},
                        {b.r * std::cos(b.theta), b.r * std::sin(b.theta)});
}

double ConformalDiscMetric::euclidean_lower_bound_factor() const {
  return std::sqrt(psi_lower_bound_);
}

std::array<double, 4> ConformalDiscMetric::metric_at_pole() const {
  const double p = factor_.psi(0.0, 0.0);
  return {p, 0.0, 0.0, p};
}

// ---------------------------------------------------------------------------
// Families

std::shared_ptr<const WarpedPolarMetric> make_hyperbolic(double scale, double r_max) {
  if (!(scale > 0.0)) throw MetricError("hyperbolic scale must be positive");
  const double k = std::sqrt(scale);
  WarpProfile w{[k](double r) { return std::sinh(k * r) / k; },
                [k](double r) { return std::cosh(k * r); }};
  RadialLogCurvature lc{[](double) { return 0.0; }, [](double) { return 0.0; }};
  return std::make_shared<WarpedPolarMetric>(
      "hyperbolic", [scale](double) { return -scale; }, std::move(w), r_max, lc, scale);
}

std::shared_ptr<const WarpedPolarMetric> make_radial_from_curvature(
    std::function<double(double)> curvature, double r_max, double ode_step,
    std::optional<RadialLogCurvature> log_curvature, std::string family) {
  if (!(r_max > 0.0)) throw MetricError("chart radius must be positive");
  if (!(ode_step > 0.0)) throw MetricError("ode step must be positive");
  const int n = std::max(1, static_cast<int>(std::ceil(r_max / ode_step)));
  for (int i = 0; i <= n; ++i) {
    const double r = r_max * i / n;
    const double k = curvature(r);
    if (!(k < 0.0)) {
      std::ostringstream os;
      os << "curvature not strictly negative at r=" << r << " (K=" << k << ")";
      throw MetricError(os.str());
    }
  }
  auto table = std::make_shared<JacobiTable>(curvature, r_max, ode_step);
  WarpProfile w{[table](double r) { return table->eval(r).first; },
                [table](double r) { return table->eval(r).second; }};
  return std::make_shared<WarpedPolarMetric>(std::move(family), std::move(curvature),
                                             std::move(w), r_max, std::move(log_curvature));
}

std::shared_ptr<const WarpedPolarMetric> make_radial_pinched(double k0, double amplitude,
                                                             double r_max) {
  if (!(k0 > 0.0)) throw MetricError("radial_pinched: k0 must be positive");
  if (!(amplitude >= 0.0)) throw MetricError("radial_pinched: amplitude must be nonnegative");
  auto K = [k0, amplitude](double r) {
    const double r2 = r * r;
    return -(k0 + amplitude * r2 / (1.0 + r2));
  };
  // log(-K) derivatives through s = r^2/(1+r^2).
  auto first = [k0, amplitude](double r) {
    const double q = 1.0 + r * r;
    const double negk = k0 + amplitude * r * r / q;
    return amplitude * (2.0 * r / (q * q)) / negk;
  };
  auto second = [k0, amplitude, first](double r) {
    const double q = 1.0 + r * r;
    const double negk = k0 + amplitude * r * r / q;
    const double f1 = first(r);
    return amplitude * ((2.0 - 6.0 * r * r) / (q * q * q)) / negk - f1 * f1;
  };
  return make_radial_from_curvature(K, r_max, 1e-3, RadialLogCurvature{first, second},
                                    "radial_pinched");
}

std::shared_ptr<const ConformalDiscMetric> make_poincare(double scale, double domain_radius) {
  if (!(scale > 0.0)) throw MetricError("poincare scale must be positive");
  if (!(domain_radius > 0.0 && domain_radius < 1.0))
    throw MetricError("poincare domain radius must lie in (0, 1)");
  ConformalFactor cf;
  cf.psi = [scale](double x, double y) {
    const double q = 1.0 - x * x - y * y;
    return 4.0 / (scale * q * q);
  };
  cf.grad_log_psi = [](double x, double y) {
    const double q = 1.0 - x * x - y * y;
    return std::array<double, 2>{4.0 * x / q, 4.0 * y / q};
  };
  cf.laplacian_log_psi = [](double x, double y) {
    const double q = 1.0 - x * x - y * y;
    return 8.0 / (q * q);
  };
  auto closed = [scale](ChartPoint a, ChartPoint b) {
    const double ax = a.r * std::cos(a.theta), ay = a.r * std::sin(a.theta);
    const double bx = b.r * std::cos(b.theta), by = b.r * std::sin(b.theta);
    const double d2 = (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
    const double den = (1.0 - ax * ax - ay * ay) * (1.0 - bx * bx - by * by);
    return 2.0 * std::asinh(std::sqrt(d2 / den)) / std::sqrt(scale);
  };
  return std::make_shared<ConformalDiscMetric>("poincare", std::move(cf), domain_radius, true,
                                               4.0 / scale, closed);
}

std::shared_ptr<const ConformalDiscMetric> make_poincare_perturbed(double epsilon,
                                                                   double domain_radius) {
  if (!std::isfinite(epsilon)) throw MetricError("poincare_perturbed: epsilon must be finite");
  if (!(domain_radius > 0.0 && domain_radius < 1.0))
    throw MetricError("poincare_perturbed: domain radius must lie in (0, 1)");
  ConformalFactor cf;
  cf.psi = [epsilon](double x, double y) {
    const double q = 1.0 - x * x - y * y;
    return 4.0 * std::exp(2.0 * epsilon * x) / (q * q);
  };
  cf.grad_log_psi = [epsilon](double x, double y) {
    const double q = 1.0 - x * x - y * y;
    return std::array<double, 2>{2.0 * epsilon + 4.0 * x / q, 4.0 * y / q};
  };
  cf.laplacian_log_psi = [](double x, double y) {
    const double q = 1.0 - x * x - y * y;
    return 8.0 / (q * q);
  };
  // psi >= 4 exp(-2|eps|) on the whole unit disc, which contains every chart geodesic.
  const double lower = 4.0 * std::exp(-2.0 * std::abs(epsilon));
  const bool radial = epsilon == 0.0;
  return std::make_shared<ConformalDiscMetric>("poincare_perturbed", std::move(cf), domain_radius,
                                               radial, lower);
}

WarpChristoffels christoffels_polar(const WarpedPolarMetric& m, double r) {
  if (r == 0.0) throw PoleError("Christoffel symbols are singular at the pole");
  const double f = m.f(r), fp = m.f_prime(r);
  return {fp / f, -f * fp};
}

double jacobi_defect(const WarpedPolarMetric& m, double r, double h) {
  const double fpp = (-m.f(r + 2 * h) + 16 * m.f(r + h) - 30 * m.f(r) + 16 * m.f(r - h) -
                      m.f(r - 2 * h)) /
                     (12 * h * h);
  const double f = m.f(r);
  return std::abs(fpp + m.radial_curvature(r) * f) / std::max(1.0, std::abs(f));
}

}  // namespace lorentz
