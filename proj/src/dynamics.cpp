#include "purimode/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>

#include "purimode/heom.hpp"

namespace purimode {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("dynamics: " + msg);
}

void check_grid(const std::vector<double>& t) {
  require(!t.empty(), "empty time grid");
  require(t.front() >= 0.0, "time grid must start at t >= 0");
  for (size_t i = 1; i < t.size(); ++i)
    require(t[i] > t[i - 1], "time grid must be strictly increasing");
}

void normalize_initial(evolution& ev, cplx tr0) {
  require(std::abs(tr0) > 1e-300, "initial reduced state has zero trace");
  ev.norm_factor = tr0;
  ev.y0 /= tr0;
}

}  // namespace

evolution make_dense_evolution(const model_spec& m,
                               const std::vector<int>& truncations) {
  auto a = std::make_shared<assembled_op>(assemble_purified(m, truncations));
  auto mp = std::make_shared<const model_spec>(m);
  evolution ev;
  ev.dim = a->op.dimension;
  ev.d_s = a->layout.d_s;
  ev.rhs = [a](const Eigen::VectorXcd& y, Eigen::VectorXcd& d) {
    a->op.apply(y, d);
  };
  ev.reduced = [a](const Eigen::VectorXcd& y) {
    return extract_rho_s(a->layout, y);
  };
  ev.insert = [a, mp](const Eigen::VectorXcd& y, const field_insertion& ins) {
    return apply_insertion(a->layout, *mp, y, ins);
  };
  ev.y0 = initial_state(a->layout, *mp);
  normalize_initial(ev, extract_rho_s(a->layout, ev.y0).trace());
  ev.matrix = std::shared_ptr<const sparse_super_op>(a, &a->op);
  return ev;
}

evolution make_dense_evolution(const model_spec& m, int truncation) {
  return make_dense_evolution(
      m, std::vector<int>(m.modes.size(), truncation));
}

evolution make_doubled_evolution(assembled_op a,
                                 const Eigen::MatrixXcd& rho0) {
  auto ap = std::make_shared<const assembled_op>(std::move(a));
  require(ap->layout.doubled, "density-matrix assembly expected");
  evolution ev;
  ev.dim = ap->op.dimension;
  ev.d_s = ap->layout.d_s;
  ev.rhs = [ap](const Eigen::VectorXcd& y, Eigen::VectorXcd& d) {
    ap->op.apply(y, d);
  };
  ev.reduced = [ap](const Eigen::VectorXcd& y) {
    return extract_rho_s(ap->layout, y);
  };
  ev.y0 = embed_rho_s(ap->layout, rho0);
  normalize_initial(ev, rho0.trace());
  ev.matrix = std::shared_ptr<const sparse_super_op>(ap, &ap->op);
  return ev;
}

evolution make_tier_evolution(const model_spec& m, int tier_cap) {
  int n_right = 0, n_left = 0;
  for (const purified_mode& pm : m.modes)
    (pm.chi == chirality::right ? n_right : n_left) += 1;
  auto space = enumerate_ados(n_right, n_left, tier_cap);
  auto ctx = std::make_shared<const heom_context>(compile_heom(m, space));
  auto mp = std::make_shared<const model_spec>(m);
  heom_state s0 = heom_initial_state(m, space);

  evolution ev;
  ev.dim = s0.data.size();
  ev.d_s = s0.d_s;
  ev.rhs = [ctx](const Eigen::VectorXcd& y, Eigen::VectorXcd& d) {
    heom_rhs_into(*ctx, y, d);
  };
  const int ds = s0.d_s;
  ev.reduced = [ds](const Eigen::VectorXcd& y) {
    return Eigen::MatrixXcd(
        Eigen::Map<const Eigen::MatrixXcd>(y.data(), ds, ds));
  };
  ev.insert = [mp, space, ds](const Eigen::VectorXcd& y,
                              const field_insertion& ins) {
    heom_state st;
    st.space = space;
    st.d_s = ds;
    st.data = y;
    return heom_apply_insertion(*mp, st, ins).data;
  };
  ev.y0 = std::move(s0.data);
  normalize_initial(ev, heom_rho_s(heom_state{space, ds, ev.y0}).trace());
  return ev;
}

trajectory integrate(const evolution& ev, const std::vector<double>& t_grid,
                     const std::map<std::string, Eigen::MatrixXcd>& observables,
                     const std::map<std::string, state_observable>& functionals,
                     const ode_options& opt, int keep_every) {
  check_grid(t_grid);
  require(bool(ev.rhs) && bool(ev.reduced), "evolution hooks not set");
  for (const auto& [name, op] : observables)
    require(op.rows() == ev.d_s && op.cols() == ev.d_s,
            "observable '" + name + "' dimension mismatch");
  for (const auto& [name, fn] : functionals)
    require(bool(fn), "state functional '" + name + "' is empty");

  trajectory tr;
  tr.times = t_grid;
  long idx = 0;
  auto sink = [&](double t, const Eigen::VectorXcd& y) {
    const Eigen::MatrixXcd rho = ev.reduced(y);
    for (const auto& [name, op] : observables)
      tr.observables[name].push_back((op * rho).trace());
    for (const auto& [name, fn] : functionals)
      tr.observables[name].push_back(fn(y));
    if (keep_every > 0 && idx % keep_every == 0) {
      tr.state_times.push_back(t);
      tr.states.push_back(y);
    }
    ++idx;
  };
  integrate_dp54(
      [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& d) {
        ev.rhs(y, d);
      },
      ev.y0, 0.0, t_grid.back(), t_grid, sink, opt);
  return tr;
}

trajectory integrate(const evolution& ev, const std::vector<double>& t_grid,
                     const std::map<std::string, Eigen::MatrixXcd>& observables,
                     const ode_options& opt, int keep_every) {
  return integrate(ev, t_grid, observables, {}, opt, keep_every);
}

Eigen::VectorXcd steady_state(const evolution& ev, double t_max,
                              const ode_options& opt) {
  require(bool(ev.rhs) && bool(ev.reduced), "evolution hooks not set");
  require(t_max > 0.0, "t_max must be positive");
  const long n = ev.dim;
  Eigen::VectorXcd y;

  if (ev.matrix && n <= 4096) {
    // stack the generator on a trace-normalization row and least-squares
    // solve; the trace functional is recovered from the reduction hook
    Eigen::MatrixXcd m(n + 1, n);
    m.topRows(n) = ev.matrix->dense();
    Eigen::VectorXcd unit = Eigen::VectorXcd::Zero(n);
    for (long j = 0; j < n; ++j) {
      unit[j] = 1.0;
      m(n, j) = ev.reduced(unit).trace();
      unit[j] = 0.0;
    }
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n + 1);
    b[n] = 1.0;
    y = m.colPivHouseholderQr().solve(b);
    Eigen::VectorXcd res(n);
    ev.rhs(y, res);
    const double scale =
        std::max(1.0, m.topRows(n).cwiseAbs().maxCoeff()) * y.norm();
    if (!(res.norm() <= 1e-8 * scale)) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "steady_state: least-squares fixed point has residual "
                    "%.3e (no unique steady state?)",
                    res.norm() / std::max(scale, 1e-300));
      throw std::runtime_error(buf);
    }
  } else {
    double resid = std::numeric_limits<double>::infinity();
    bool done = false;
    auto step_cb = [&](double, const Eigen::VectorXcd& yc,
                       const Eigen::VectorXcd& k1) {
      resid = k1.norm() / std::max(yc.norm(), 1e-300);
      if (resid <= 1e-10) {
        done = true;
        return false;
      }
      return true;
    };
    y = integrate_dp54(
        [&](double, const Eigen::VectorXcd& yc, Eigen::VectorXcd& d) {
          ev.rhs(yc, d);
        },
        ev.y0, 0.0, t_max, {}, [](double, const Eigen::VectorXcd&) {},
        step_cb, opt);
    if (!done) {
      char buf[128];
      std::snprintf(buf, sizeof buf,
                    "steady_state: not converged by t=%.3g "
                    "(relative residual %.3e)",
                    t_max, resid);
      throw std::runtime_error(buf);
    }
  }

  const cplx tr = ev.reduced(y).trace();
  require(std::abs(tr) > 1e-300, "steady state has zero trace");
  return y / tr;
}

std::vector<cplx> two_time_correlation(const evolution& ev,
                                       const state_map& apply_a,
                                       const state_map& apply_b,
                                       const Eigen::VectorXcd& steady,
                                       const std::vector<double>& tau_grid,
                                       const ode_options& opt) {
  check_grid(tau_grid);
  require(bool(apply_a) && bool(apply_b), "insertion maps not set");
  std::vector<cplx> series;
  series.reserve(tau_grid.size());
  auto sink = [&](double, const Eigen::VectorXcd& y) {
    series.push_back(ev.reduced(apply_a(y)).trace());
  };
  integrate_dp54(
      [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& d) {
        ev.rhs(y, d);
      },
      apply_b(steady), 0.0, tau_grid.back(), tau_grid, sink, opt);
  return series;
}

void fft_radix2(std::vector<cplx>& x, bool inverse) {
  const size_t n = x.size();
  require(n > 0 && (n & (n - 1)) == 0, "fft size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * pi / double(len);
    const cplx wl = std::polar(1.0, ang);
    for (size_t i = 0; i < n; i += len) {
      cplx w = 1.0;
      for (size_t j = 0; j < len / 2; ++j) {
        const cplx u = x[i + j], v = x[i + j + len / 2] * w;
        x[i + j] = u + v;
        x[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (cplx& v : x) v /= double(n);
}

spectrum_result spectrum(const std::vector<cplx>& series,
                         const std::vector<double>& tau_grid, bool hann,
                         int zero_pad) {
  require(series.size() == tau_grid.size(), "series/grid size mismatch");
  require(series.size() >= 2, "need at least two samples");
  require(zero_pad >= 1, "zero_pad must be >= 1");
  check_grid(tau_grid);
  const size_t n = series.size();
  const double dt = (tau_grid.back() - tau_grid.front()) / double(n - 1);
  require(tau_grid.front() <= 1e-9 * dt, "tau grid must start at 0");
  for (size_t i = 1; i < n; ++i)
    require(std::abs((tau_grid[i] - tau_grid[i - 1]) - dt) <= 1e-6 * dt,
            "tau grid must be uniform");

  spectrum_result out;
  double peak = 0.0;
  for (const cplx& c : series) peak = std::max(peak, std::abs(c));
  out.decay_warning = peak > 0.0 && std::abs(series.back()) > 1e-3 * peak;

  size_t np = 1;
  while (np < n * size_t(zero_pad)) np <<= 1;
  std::vector<cplx> x(np, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double w = 1.0;
    if (hann) w = 0.5 * (1.0 + std::cos(pi * double(i) / double(n - 1)));
    x[i] = series[i] * w;
  }
  // trapezoid endpoints of the one-sided integral
  x[0] *= 0.5;
  x[n - 1] *= 0.5;
  fft_radix2(x, false);

  out.omega.reserve(np);
  out.s.reserve(np);
  const double dw = 2.0 * pi / (double(np) * dt);
  for (size_t k = np / 2 + 1; k < np; ++k) {
    out.omega.push_back(dw * (double(k) - double(np)));
    out.s.push_back(2.0 * dt * x[k].real());
  }
  for (size_t k = 0; k <= np / 2; ++k) {
    out.omega.push_back(dw * double(k));
    out.s.push_back(2.0 * dt * x[k].real());
  }
  return out;
}

}  // namespace purimode
