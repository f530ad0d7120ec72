#include <algorithm>
#include <cmath>
#include <exception>

#include "cdyn/integrate.hpp"

namespace cdyn {

std::string_view to_string(Scheme s) { return s == Scheme::rk4 ? "rk4" : "dp45"; }
std::string_view to_string(Stabilization s) { return s == Stabilization::none ? "none" : "projection"; }

std::optional<Stabilization> stabilization_from_string(std::string_view s) {
  if (s == "none") return Stabilization::none;
  if (s == "projection") return Stabilization::projection;
  return std::nullopt;
}

void validate(const IntegratorOpts& opts) {
  if (opts.scheme == Scheme::rk4 && !(opts.dt > 0.0)) throw Error("integrator: dt must be positive");
  if (opts.scheme == Scheme::dp45 && !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0)) {
    throw Error("integrator: tolerances must be positive");
  }
  if (opts.max_steps < 1) throw Error("integrator: max_steps must be at least 1");
  if (!(opts.drift_abort > 0.0)) throw Error("integrator: drift_abort must be positive");
}

std::vector<double> uniform_samples(double t0, double t_end, int count) {
  std::vector<double> ts;
  if (count <= 1) return {t_end};
  ts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) ts.push_back(i + 1 == count ? t_end : t0 + (t_end - t0) * i / (count - 1));
  return ts;
}

namespace {

constexpr double kMinStep = 1e-12;

// Dormand-Prince 5(4).
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output.
constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                 d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                 d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

struct Recorder {
  const std::vector<double>& ts;
  OdeSolution& out;
  std::size_t next{0};

  bool pending(double t_hi) const { return next < ts.size() && ts[next] <= t_hi; }
  template <class F>
  void take(double t_hi, double h, F&& interpolate) {
    while (pending(t_hi)) {
      out.times.push_back(ts[next]);
      out.states.push_back(interpolate(ts[next]));
      out.step_sizes.push_back(h);
      out.step_index.push_back(h == 0.0 ? 0 : out.accepted + 1);
      ++next;
    }
  }
};

double rms_norm(const VectorXd& e, const VectorXd& y0, const VectorXd& y1, const IntegratorOpts& o) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    double sc = o.abs_tol + o.rel_tol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    s += (e(i) / sc) * (e(i) / sc);
  }
  return e.size() ? std::sqrt(s / static_cast<double>(e.size())) : 0.0;
}

void check_drift(const StepHooks& hooks, const IntegratorOpts& o, double t, const VectorXd& y) {
  if (!hooks.drift) return;
  double d = hooks.drift(t, y);
  if (!(d <= o.drift_abort)) throw DriftAbort(t, d);
}

void check_finite(double t, const VectorXd& y) {
  if (!y.allFinite()) throw NumericalError("non-finite state at t = " + std::to_string(t));
}

OdeSolution run_rk4(const OdeRhs& f, double t0, const VectorXd& y0, double t_end, const IntegratorOpts& o,
                    const std::vector<double>& ts, const StepHooks& hooks) {
  OdeSolution out;
  Recorder rec{ts, out};
  rec.take(t0, 0.0, [&](double) { return y0; });
  VectorXd y = y0;
  VectorXd k1 = f(t0, y);
  ++out.rhs_evaluations;
  long steps = static_cast<long>(std::ceil((t_end - t0) / o.dt - 1e-9));
  if (steps > o.max_steps) throw MaxStepsExceeded("rk4 needs " + std::to_string(steps) + " steps");
  for (long i = 0; i < steps; ++i) {
    double t = t0 + static_cast<double>(i) * o.dt;
    double t1 = i + 1 == steps ? t_end : t0 + static_cast<double>(i + 1) * o.dt;
    double h = t1 - t;
    VectorXd k2 = f(t + h / 2, y + h / 2 * k1);
    VectorXd k3 = f(t + h / 2, y + h / 2 * k2);
    VectorXd k4 = f(t + h, y + h * k3);
    VectorXd y1 = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    check_finite(t1, y1);
    VectorXd f1 = f(t1, y1);
    out.rhs_evaluations += 4;
    auto hermite = [&](double s) -> VectorXd {
      if (s == t1) return y1;
      double th = (s - t) / h;
      double h00 = (1 + 2 * th) * (1 - th) * (1 - th), h10 = th * (1 - th) * (1 - th);
      double h01 = th * th * (3 - 2 * th), h11 = th * th * (th - 1);
      return h00 * y + h10 * h * k1 + h01 * y1 + h11 * h * f1;
    };
    if (hooks.post_step && hooks.post_step(t1, y1)) {
      f1 = f(t1, y1);
      ++out.rhs_evaluations;
    }
    rec.take(t1, h, hermite);
    ++out.accepted;
    if (hooks.on_accept) hooks.on_accept(t1);
    check_drift(hooks, o, t1, y1);
    y = std::move(y1);
    k1 = std::move(f1);
  }
  return out;
}

OdeSolution run_dp45(const OdeRhs& f, double t0, const VectorXd& y0, double t_end, const IntegratorOpts& o,
                     const std::vector<double>& ts, const StepHooks& hooks) {
  OdeSolution out;
  Recorder rec{ts, out};
  rec.take(t0, 0.0, [&](double) { return y0; });
  const double span = t_end - t0;
  VectorXd y = y0;
  double t = t0;
  VectorXd k1 = f(t, y);
  ++out.rhs_evaluations;

  // Initial step size.
  double h;
  {
    VectorXd sc = (o.abs_tol + o.rel_tol * y.array().abs()).matrix();
    auto norm = [&](const VectorXd& v) {
      return v.size() ? std::sqrt((v.array() / sc.array()).square().mean()) : 0.0;
    };
    double dy = norm(y), df = norm(k1);
    double h0 = (dy < 1e-5 || df < 1e-5) ? 1e-6 : 0.01 * dy / df;
    h0 = std::min(h0, span);
    VectorXd f1 = f(t + h0, y + h0 * k1);
    ++out.rhs_evaluations;
    double d2 = norm(f1 - k1) / h0;
    double dmax = std::max(df, d2);
    double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
    h = std::min({100 * h0, h1, span});
  }

  double err_old = 1e-4;
  bool last_rejected = false;
  long attempts = 0;
  std::exception_ptr trial_error;
  while (t < t_end) {
    if (++attempts > o.max_steps) {
      throw MaxStepsExceeded("dp45 exceeded " + std::to_string(o.max_steps) + " steps at t = " + std::to_string(t));
    }
    if (h < kMinStep && trial_error) std::rethrow_exception(trial_error);
    if (h < kMinStep) throw MaxStepsExceeded("dp45 step size fell below 1e-12 at t = " + std::to_string(t));
    bool last = t + h >= t_end || t_end - (t + h) < kMinStep;
    double hs = last ? t_end - t : h;
    double t1 = last ? t_end : t + hs;

    VectorXd k2, k3, k4, k5, k6, k7, y1;
    try {
      k2 = f(t + c2 * hs, y + hs * a21 * k1);
      k3 = f(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
      k4 = f(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = f(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = f(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      y1 = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      k7 = f(t1, y1);
      out.rhs_evaluations += 6;
    } catch (const NumericalError&) {
      // A trial point left the solvers' domain: retry with a smaller step.
      trial_error = std::current_exception();
      ++out.rejected;
      h = hs * 0.25;
      last_rejected = true;
      continue;
    }
    VectorXd e = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double err = rms_norm(e, y, y1, o);
    if (!std::isfinite(err)) err = 1e10;
    if (err > 1.0) {
      ++out.rejected;
      h = hs * std::max(0.2, 0.9 * std::pow(err, -0.2));
      last_rejected = true;
      continue;
    }
    check_finite(t1, y1);
    trial_error = nullptr;

    VectorXd ydiff = y1 - y;
    VectorXd bspl = hs * k1 - ydiff;
    VectorXd r4 = ydiff - hs * k7 - bspl;
    VectorXd r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
    auto dense = [&](double s) -> VectorXd {
      if (s == t1) return y1;
      double th = (s - t) / hs;
      double th1 = 1.0 - th;
      return y + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)));
    };
    if (hooks.post_step && hooks.post_step(t1, y1)) {
      k7 = f(t1, y1);
      ++out.rhs_evaluations;
    }
    rec.take(t1, hs, dense);
    ++out.accepted;
    if (hooks.on_accept) hooks.on_accept(t1);
    check_drift(hooks, o, t1, y1);

    double fac = 0.9 * std::pow(err == 0.0 ? 1e-10 : err, -0.7 / 5) * std::pow(err_old, 0.4 / 5);
    fac = std::clamp(fac, 0.2, 5.0);
    if (last_rejected) fac = std::min(fac, 1.0);
    err_old = std::max(err, 1e-4);
    last_rejected = false;
    h = hs * fac;
    t = t1;
    y = std::move(y1);
    k1 = std::move(k7);
  }
  return out;
}

}  // namespace

OdeSolution integrate(const OdeRhs& rhs, double t0, const VectorXd& y0, double t_end, const IntegratorOpts& opts,
                      const std::vector<double>& sample_times, const StepHooks& hooks) {
  validate(opts);
  if (!y0.allFinite()) throw Error("integrate: initial state is not finite");
  if (!(t_end > t0)) throw Error("integrate: t_end must exceed the initial time");
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    double s = sample_times[i];
    if (s < t0 || s > t_end || (i > 0 && !(s > sample_times[i - 1]))) {
      throw Error("integrate: sample times must be strictly increasing within [t0, t_end]");
    }
  }
  return opts.scheme == Scheme::rk4 ? run_rk4(rhs, t0, y0, t_end, opts, sample_times, hooks)
                                    : run_dp45(rhs, t0, y0, t_end, opts, sample_times, hooks);
}

}  // namespace cdyn
