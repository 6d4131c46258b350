#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <type_traits>
#include <vector>

// Adaptive embedded Dormand-Prince 5(4) with 4th-order dense output.
// State is a complex Eigen vector; the right-hand side is any callable
// rhs(t, y, dydt).  Samples inside each accepted step are produced from the
// dense-output polynomial, so trajectory grids do not constrain step size.
namespace purimode {

struct ode_options {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_init = 0.0;   // 0: choose automatically
  double h_max = 0.0;    // 0: t1 - t0
  long max_steps = 50000000;
};

namespace dp54 {
// Butcher tableau
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                        c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113,
                        a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
// embedded error weights
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695,
                        e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
// dense output weights
inline constexpr double d1 = -12715105075.0 / 11282082432.0,
                        d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0,
                        d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0,
                        d7 = 69997945.0 / 29380423.0;
}  // namespace dp54

// Integrate y' = rhs(t, y) from t0 to t1.  For every entry of `samples`
// (ascending, within [t0, t1]) calls sink(t_sample, y_sample).  After each
// accepted step calls step_cb(t, y, dydt_at_t); returning false stops the
// integration early.  Returns the state at t1 (or at the stopping time).
template <class RHS, class Sink, class StepCb>
  requires std::is_invocable_v<StepCb&, double, const Eigen::VectorXcd&,
                               const Eigen::VectorXcd&>
Eigen::VectorXcd integrate_dp54(RHS&& rhs, Eigen::VectorXcd y, double t0,
                                double t1, const std::vector<double>& samples,
                                Sink&& sink, StepCb&& step_cb,
                                const ode_options& opt = {}) {
  using Vec = Eigen::VectorXcd;
  const long n = y.size();
  if (t1 < t0) throw std::invalid_argument("integrate_dp54: t1 < t0");

  auto scaled_norm = [&](const Vec& e, const Vec& y0, const Vec& y1) {
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
      double sc =
          opt.atol + opt.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
      double q = std::abs(e[i]) / sc;
      acc += q * q;
    }
    return std::sqrt(acc / double(n));
  };

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n),
      err(n);
  rhs(t0, y, k1);

  const double h_max = opt.h_max > 0.0 ? opt.h_max : (t1 - t0);
  double h = opt.h_init;
  if (h <= 0.0) {
    // standard starting-step heuristic from the norm of y, f and a trial
    // Euler step
    double d0 = 0.0, d1n = 0.0;
    for (long i = 0; i < n; ++i) {
      double sc = opt.atol + opt.rtol * std::abs(y[i]);
      d0 += std::norm(y[i] / sc);
      d1n += std::norm(k1[i] / sc);
    }
    d0 = std::sqrt(d0 / double(n));
    d1n = std::sqrt(d1n / double(n));
    double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h0 = std::min(h0, h_max);
    ytmp = y + h0 * k1;
    rhs(t0 + h0, ytmp, k2);
    double d2 = 0.0;
    for (long i = 0; i < n; ++i) {
      double sc = opt.atol + opt.rtol * std::abs(y[i]);
      d2 += std::norm((k2[i] - k1[i]) / sc);
    }
    d2 = std::sqrt(d2 / double(n)) / h0;
    double dm = std::max(d1n, d2);
    double h1 = dm > 1e-15 ? std::pow(0.01 / dm, 0.2) : std::max(1e-6, h0 * 1e-3);
    h = std::min({100.0 * h0, h1, h_max});
  }

  double t = t0;
  size_t next_sample = 0;
  while (next_sample < samples.size() && samples[next_sample] < t0)
    throw std::invalid_argument("integrate_dp54: sample before t0");
  // sample exactly at t0 if requested
  while (next_sample < samples.size() && samples[next_sample] <= t0) {
    sink(samples[next_sample], y);
    ++next_sample;
  }

  bool rejected = false;
  long steps = 0;
  using namespace dp54;
  while (t < t1) {
    if (++steps > opt.max_steps)
      throw std::runtime_error("integrate_dp54: step budget exhausted at t=" +
                               std::to_string(t));
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "integrate_dp54: step size underflow at t=%.6g "
                    "(problem appears stiff at this tolerance)",
                    t);
      throw std::runtime_error(buf);
    }
    if (t + h > t1) h = t1 - t;

    ytmp = y + h * (a21 * k1);
    rhs(t + c2 * h, ytmp, k2);
    ytmp = y + h * (a31 * k1 + a32 * k2);
    rhs(t + c3 * h, ytmp, k3);
    ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(t + c4 * h, ytmp, k4);
    ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(t + c5 * h, ytmp, k5);
    ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(t + h, ytmp, k6);
    ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(t + h, ynew, k7);  // FSAL

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double en = scaled_norm(err, y, ynew);

    if (en <= 1.0) {
      // dense output over [t, t+h]
      if (next_sample < samples.size() && samples[next_sample] <= t + h) {
        Vec ydiff = ynew - y;
        Vec bspl = h * k1 - ydiff;
        Vec cont4 = ydiff - h * k7 - bspl;
        Vec cont5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 +
                         d7 * k7);
        while (next_sample < samples.size() &&
               samples[next_sample] <= t + h + 1e-14 * std::abs(t + h)) {
          double th = (samples[next_sample] - t) / h;
          double th1 = 1.0 - th;
          ytmp = y + th * (ydiff + th1 * (bspl + th * (cont4 + th1 * cont5)));
          sink(samples[next_sample], ytmp);
          ++next_sample;
        }
      }
      t += h;
      y.swap(ynew);
      k1.swap(k7);
      if (!step_cb(t, y, k1)) return y;
      double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.2);
      fac = std::min(rejected ? 1.0 : 5.0, std::max(0.2, fac));
      h = std::min(h * fac, h_max);
      rejected = false;
    } else {
      double fac = std::max(0.2, 0.9 * std::pow(en, -0.2));
      h *= fac;
      rejected = true;
    }
  }
  return y;
}

template <class RHS, class Sink>
Eigen::VectorXcd integrate_dp54(RHS&& rhs, Eigen::VectorXcd y, double t0,
                                double t1, const std::vector<double>& samples,
                                Sink&& sink, const ode_options& opt = {}) {
  return integrate_dp54(
      std::forward<RHS>(rhs), std::move(y), t0, t1, samples,
      std::forward<Sink>(sink),
      [](double, const Eigen::VectorXcd&, const Eigen::VectorXcd&) {
        return true;
      },
      opt);
}

template <class RHS>
Eigen::VectorXcd integrate_dp54(RHS&& rhs, Eigen::VectorXcd y, double t0,
                                double t1, const ode_options& opt = {}) {
  return integrate_dp54(
      std::forward<RHS>(rhs), std::move(y), t0, t1, {},
      [](double, const Eigen::VectorXcd&) {}, opt);
}

}  // namespace purimode
