#include "purimode/waveguide.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "purimode/expfit.hpp"

namespace purimode {

namespace {

double kbar(const waveguide_params& p) {
  return 0.5 * (p.kappa(1) + p.kappa(2));
}

cplx hopping(const waveguide_params& p) {
  // waveguide-mediated cavity-cavity amplitude, phase of one traversal
  return 0.5 * std::sqrt(p.kappa(1) * p.kappa(2)) *
         std::exp(iu * p.phase());
}

void register_labels(correlation_set& set) {
  set.set_adjoint(lbl_c1, lbl_c1dag);
  set.set_adjoint(lbl_c2, lbl_c2dag);
}

// entry (n,m) carries intrinsic loss from both source cavities
double broadening(const waveguide_params& p, int n, int m) {
  return 0.25 * (p.kappa_i(n) + p.kappa_i(m));
}

void add_lab_frame_terms(correlation_set& set, const corr_key& key,
                         const std::vector<cplx>& roots,
                         const std::vector<cplx>& weights, double omega0,
                         double extra_gamma, double kappa_scale) {
  for (size_t k = 0; k < roots.size(); ++k) {
    double gamma = -roots[k].real();
    if (gamma < 0.0) {
      if (gamma < -1e-9 * kappa_scale)
        throw std::runtime_error("waveguide: pole with growing amplitude at Re s=" +
                                 std::to_string(roots[k].real()));
      gamma = 0.0;
    }
    set.add_term(key, {weights[k], omega0 - roots[k].imag(),
                       gamma + extra_gamma});
  }
}

}  // namespace

cplx transcendental_F(const waveguide_params& p, cplx s) {
  const double td = p.t_delay();
  return (s + p.z(1)) * (s + p.z(2)) -
         0.25 * p.kappa(1) * p.kappa(2) *
             std::exp(2.0 * iu * p.phase()) * std::exp(-2.0 * s * td);
}

cplx transcendental_F_prime(const waveguide_params& p, cplx s) {
  const double td = p.t_delay();
  return (s + p.z(1)) + (s + p.z(2)) +
         2.0 * td * 0.25 * p.kappa(1) * p.kappa(2) *
             std::exp(2.0 * iu * p.phase()) * std::exp(-2.0 * s * td);
}

std::pair<cplx, cplx> case1_poles(const waveguide_params& p) {
  const cplx z1 = p.z(1), z2 = p.z(2);
  const cplx disc = (z1 - z2) * (z1 - z2) +
                    p.kappa(1) * p.kappa(2) * std::exp(2.0 * iu * p.phase());
  const cplx root = std::sqrt(disc);
  cplx s1 = -0.5 * (z1 + z2) + 0.5 * root;
  cplx s2 = -0.5 * (z1 + z2) - 0.5 * root;
  if (std::abs(s1 - s2) < 1e-12 * kbar(p))
    throw std::runtime_error(
        "case1_poles: degenerate pole pair; the two-term residue form "
        "breaks down");
  return {s1, s2};
}

correlation_set case1_correlations(const waveguide_params& p) {
  auto [s1, s2] = case1_poles(p);
  const std::vector<cplx> roots{s1, s2};
  const cplx det = s1 - s2;
  const cplx g = hopping(p);

  const std::vector<cplx> w11{(s1 + p.z(2)) / det, (s2 + p.z(2)) / (-det)};
  const std::vector<cplx> w22{(s1 + p.z(1)) / det, (s2 + p.z(1)) / (-det)};
  const std::vector<cplx> wx{-g / det, -g / (-det)};

  correlation_set set;
  register_labels(set);
  const double w0 = p.omega0();
  add_lab_frame_terms(set, {lbl_c1, lbl_c1dag, time_sign::plus}, roots, w11,
                      w0, broadening(p, 1, 1), kbar(p));
  add_lab_frame_terms(set, {lbl_c2, lbl_c2dag, time_sign::plus}, roots, w22,
                      w0, broadening(p, 2, 2), kbar(p));
  add_lab_frame_terms(set, {lbl_c1, lbl_c2dag, time_sign::plus}, roots, wx,
                      w0, broadening(p, 1, 2), kbar(p));
  add_lab_frame_terms(set, {lbl_c2, lbl_c1dag, time_sign::plus}, roots, wx,
                      w0, broadening(p, 2, 1), kbar(p));
  set.time_reverse_close();
  set.metadata["method"] = "case1";
  set.metadata["broadening_exact"] =
      p.kappa_i(1) == p.kappa_i(2) ? "true" : "false";
  return set;
}

pole_window default_pole_window(const waveguide_params& p) {
  const double u = 0.5 * kbar(p);
  return {-0.45 * u, 0.45 * u, -3.0 * u, 3.0 * u, 400, 400};
}

pole_window case2_window(const waveguide_params& p, int n_poles) {
  const double td = p.t_delay();
  if (td <= 0.0)
    throw std::invalid_argument("case2_window: zero delay has no pole ladder");
  const double im = (0.5 * n_poles + 2.0) * pi / td;
  return {-1.05 * std::max(p.kappa(1), p.kappa(2)), 0.02 * kbar(p), -im, im,
          400, 400};
}

pole_set find_poles(const waveguide_params& p, const pole_window& w,
                    double newton_tol, double merge_radius) {
  const double scale_k = kbar(p);
  auto fscale = [](cplx s) { return std::max(1.0, std::norm(s)); };

  const int nx = w.nx, ny = w.ny;
  const double dx = (w.re_max - w.re_min) / nx;
  const double dy = (w.im_max - w.im_min) / ny;
  std::vector<double> absf((nx + 1) * (ny + 1));
  auto at = [&](int i, int j) -> double& { return absf[i * (ny + 1) + j]; };
  for (int i = 0; i <= nx; ++i)
    for (int j = 0; j <= ny; ++j)
      at(i, j) = std::abs(
          transcendental_F(p, cplx(w.re_min + i * dx, w.im_min + j * dy)));

  std::vector<cplx> seeds;
  for (int i = 1; i < nx; ++i)
    for (int j = 1; j < ny; ++j) {
      const double v = at(i, j);
      bool is_min = true;
      for (int di = -1; di <= 1 && is_min; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          if (di == 0 && dj == 0) continue;
          if (at(i + di, j + dj) < v) {
            is_min = false;
            break;
          }
        }
      if (is_min) seeds.emplace_back(w.re_min + i * dx, w.im_min + j * dy);
    }

  std::vector<cplx> roots;
  const double margin_x = dx, margin_y = dy;
  for (cplx s : seeds) {
    bool converged = false;
    for (int it = 0; it < 80; ++it) {
      const cplx f = transcendental_F(p, s);
      if (std::abs(f) <= newton_tol * fscale(s)) {
        converged = true;
        break;
      }
      const cplx fp = transcendental_F_prime(p, s);
      if (std::abs(fp) < 1e-300) break;
      s -= f / fp;
    }
    if (!converged) continue;  // shallow grid minimum, not a root
    const double fp_scale = scale_k * std::max(scale_k, std::abs(s));
    if (std::abs(transcendental_F_prime(p, s)) < 1e-6 * fp_scale) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "find_poles: near-degenerate root at s=(%.12g, %.12g); "
                    "simple-pole residues are unreliable here",
                    s.real(), s.imag());
      throw std::runtime_error(buf);
    }
    if (s.real() < w.re_min - margin_x || s.real() > w.re_max + margin_x ||
        s.imag() < w.im_min - margin_y || s.imag() > w.im_max + margin_y)
      continue;
    if (s.real() > 1e-9 * std::max(1.0, scale_k)) continue;  // nonphysical
    bool dup = false;
    for (const cplx& r : roots)
      if (std::abs(r - s) <= merge_radius) {
        dup = true;
        break;
      }
    if (!dup) roots.push_back(s);
  }

  auto canonical = [](const cplx& a, const cplx& b) {
    if (a.imag() != b.imag()) return a.imag() < b.imag();
    return a.real() < b.real();
  };
  std::sort(roots.begin(), roots.end(), canonical);
  pole_set ps;
  ps.s = std::move(roots);
  ps.window = w;
  return ps;
}

pole_set keep_poles(pole_set ps, int n) {
  if (int(ps.s.size()) < n) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "keep_poles: requested %d poles but only %zu found; widen "
                  "the search window",
                  n, ps.s.size());
    throw std::runtime_error(buf);
  }
  std::stable_sort(ps.s.begin(), ps.s.end(), [](const cplx& a, const cplx& b) {
    return std::abs(a.imag()) < std::abs(b.imag());
  });
  ps.s.resize(size_t(n));
  std::sort(ps.s.begin(), ps.s.end(), [](const cplx& a, const cplx& b) {
    if (a.imag() != b.imag()) return a.imag() < b.imag();
    return a.real() < b.real();
  });
  ps.residue_weights.clear();  // selections invalidate previous weights
  return ps;
}

void add_residues(const waveguide_params& p, pole_set& ps, int init_cavity) {
  if (init_cavity != 1 && init_cavity != 2)
    throw std::invalid_argument("add_residues: init_cavity must be 1 or 2");
  const double td = p.t_delay();
  std::vector<cplx> w1, w2;
  w1.reserve(ps.s.size());
  w2.reserve(ps.s.size());
  for (cplx s : ps.s) {
    const cplx fp = transcendental_F_prime(p, s);
    const cplx cross = -hopping(p) * std::exp(-s * td);
    const cplx n1 = (init_cavity == 1) ? (s + p.z(2)) : cross;
    const cplx n2 = (init_cavity == 2) ? (s + p.z(1)) : cross;
    w1.push_back(n1 / fp);
    w2.push_back(n2 / fp);
  }
  ps.residue_weights[{1, init_cavity}] = std::move(w1);
  ps.residue_weights[{2, init_cavity}] = std::move(w2);
}

delay_ode_result delay_ode_amplitudes(const waveguide_params& p,
                                      int init_cavity,
                                      const std::vector<double>& t,
                                      bool lab_frame) {
  if (init_cavity != 1 && init_cavity != 2)
    throw std::invalid_argument("delay_ode_amplitudes: init_cavity must be 1 or 2");
  for (double tk : t)
    if (tk < 0.0)
      throw std::domain_error("delay_ode_amplitudes: t must be >= 0");

  const double td = p.t_delay();
  const cplx z1 = p.z(1), z2 = p.z(2), g = hopping(p);
  const double rate =
      std::max({std::abs(z1), std::abs(z2), std::abs(g), 0.1});
  const double h_want = 0.002 / rate;
  double t_end = t.empty() ? 0.0 : *std::max_element(t.begin(), t.end());

  double h;
  long delay_halves = 0;  // delay expressed in half-steps
  if (td > 0.0) {
    long m = std::max<long>(50, long(std::ceil(td / h_want)));
    h = td / double(m);
    delay_halves = 2 * m;
  } else {
    h = h_want;
  }
  const long n_steps = std::max<long>(1, long(std::ceil(t_end / h)) + 1);

  using state = std::array<cplx, 2>;
  auto rhs = [&](const state& y, const state& delayed) -> state {
    return {-z1 * y[0] - g * delayed[1], -z2 * y[1] - g * delayed[0]};
  };

  // history on a half-step grid so delayed arguments land on stored samples
  std::vector<state> half(2 * size_t(n_steps) + 2, state{0.0, 0.0});
  auto delayed_at = [&](long half_idx) -> state {
    const long j = half_idx - delay_halves;
    if (td <= 0.0) return half[size_t(half_idx)];
    return j < 0 ? state{0.0, 0.0} : half[size_t(j)];
  };

  std::vector<state> full(size_t(n_steps) + 1), deriv(size_t(n_steps) + 1);
  state y{0.0, 0.0};
  y[size_t(init_cavity - 1)] = 1.0;
  half[0] = y;
  full[0] = y;
  deriv[0] = rhs(y, delayed_at(0));

  for (long k = 0; k < n_steps; ++k) {
    const long hb = 2 * k;  // half-index of the step start
    // for zero delay the "delayed" value is the current state: use the
    // classical RK4 stage states themselves
    state d0 = delayed_at(hb), dm = delayed_at(hb + 1), d1 = delayed_at(hb + 2);
    auto stage = [&](const state& yy, const state& dd) { return rhs(yy, dd); };
    state k1, k2, k3, k4, ym;
    if (td > 0.0) {
      k1 = stage(y, d0);
      ym = {y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]};
      k2 = stage(ym, dm);
      ym = {y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]};
      k3 = stage(ym, dm);
      ym = {y[0] + h * k3[0], y[1] + h * k3[1]};
      k4 = stage(ym, d1);
    } else {
      k1 = stage(y, y);
      ym = {y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]};
      k2 = stage(ym, ym);
      ym = {y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]};
      k3 = stage(ym, ym);
      ym = {y[0] + h * k3[0], y[1] + h * k3[1]};
      k4 = stage(ym, ym);
    }
    state ynew{y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
               y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])};
    // cubic-Hermite midpoint for the half-step history slot
    state fnew = rhs(ynew, d1);
    state mid{0.5 * (y[0] + ynew[0]) + 0.125 * h * (k1[0] - fnew[0]),
              0.5 * (y[1] + ynew[1]) + 0.125 * h * (k1[1] - fnew[1])};
    half[size_t(hb + 1)] = mid;
    half[size_t(hb + 2)] = ynew;
    y = ynew;
    full[size_t(k + 1)] = ynew;
    deriv[size_t(k + 1)] = fnew;
  }

  delay_ode_result out;
  out.eps1.reserve(t.size());
  out.eps2.reserve(t.size());
  const double w0 = p.omega0();
  for (double tk : t) {
    long k = std::min<long>(n_steps - 1, long(tk / h));
    double th = (tk - k * h) / h;
    const state &y0 = full[size_t(k)], &y1 = full[size_t(k + 1)];
    const state &f0 = deriv[size_t(k)], &f1 = deriv[size_t(k + 1)];
    const double h00 = (1 + 2 * th) * (1 - th) * (1 - th),
                 h10 = th * (1 - th) * (1 - th),
                 h01 = th * th * (3 - 2 * th), h11 = th * th * (th - 1);
    state v{h00 * y0[0] + h * h10 * f0[0] + h01 * y1[0] + h * h11 * f1[0],
            h00 * y0[1] + h * h10 * f0[1] + h01 * y1[1] + h * h11 * f1[1]};
    const cplx carrier = lab_frame ? std::exp(-iu * w0 * tk) : cplx(1.0);
    out.eps1.push_back(carrier * v[0]);
    out.eps2.push_back(carrier * v[1]);
  }
  return out;
}

correlation_set case2_correlations(const waveguide_params& p,
                                   const pole_set& ps, int n_self_terms) {
  correlation_set set;
  register_labels(set);
  const double w0 = p.omega0();

  // cross correlations from the pole residues; the numerators coincide for
  // the two directions, so one residue pass serves both entries
  pole_set work = ps;
  add_residues(p, work, 1);
  const auto& w2_from1 = work.residue_weights.at({2, 1});
  add_lab_frame_terms(set, {lbl_c2, lbl_c1dag, time_sign::plus}, work.s,
                      w2_from1, w0, broadening(p, 2, 1), kbar(p));
  add_lab_frame_terms(set, {lbl_c1, lbl_c2dag, time_sign::plus}, work.s,
                      w2_from1, w0, broadening(p, 1, 2), kbar(p));

  // self correlations: fit rotating-frame delay-ODE data, then move the
  // carrier back into the stored frequencies
  for (int n = 1; n <= 2; ++n) {
    // probe the decay to choose the fit window
    const double t_cap = 200.0;
    const int n_probe = 400;
    std::vector<double> probe(n_probe);
    for (int k = 0; k < n_probe; ++k)
      probe[size_t(k)] = t_cap * double(k + 1) / n_probe;
    auto pr = delay_ode_amplitudes(p, n, probe, /*lab_frame=*/false);
    const auto& pamp = (n == 1) ? pr.eps1 : pr.eps2;
    double t_end = t_cap;
    for (int k = n_probe - 1; k >= 0; --k) {
      if (std::abs(pamp[size_t(k)]) > 1e-4) {
        t_end = std::min(t_cap, probe[size_t(std::min(k + 1, n_probe - 1))]);
        break;
      }
      t_end = probe[size_t(k)];
    }

    const int n_samp = 2048;
    std::vector<double> tg(n_samp);
    for (int k = 0; k < n_samp; ++k)
      tg[size_t(k)] = t_end * double(k) / (n_samp - 1);
    auto tr = delay_ode_amplitudes(p, n, tg, /*lab_frame=*/false);
    const auto& amp = (n == 1) ? tr.eps1 : tr.eps2;

    fit_options fo;
    fo.n_terms = n_self_terms;
    fit_result fit = fit_exponentials(tg, amp, fo);
    if (fit.terms.empty())
      throw std::runtime_error("case2_correlations: self-correlation fit for "
                               "cavity " + std::to_string(n) +
                               " produced no terms: " + fit.note);

    const corr_key key{n == 1 ? lbl_c1 : lbl_c2,
                       n == 1 ? lbl_c1dag : lbl_c2dag, time_sign::plus};
    for (const auto& term : fit.terms)
      set.add_term(key, {term.w, term.omega + w0,
                         term.gamma + broadening(p, n, n)});
    const std::string tag = "self_fit_" + std::to_string(n);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", fit.rel_residual);
    set.metadata[tag + "_residual"] = buf;
    if (!fit.note.empty()) set.metadata[tag + "_note"] = fit.note;
    std::snprintf(buf, sizeof buf, "%.6g", t_end);
    set.metadata[tag + "_window"] = buf;
  }

  set.time_reverse_close();
  set.metadata["method"] = "case2";
  set.metadata["n_poles"] = std::to_string(ps.s.size());
  set.metadata["broadening_exact"] =
      p.kappa_i(1) == p.kappa_i(2) ? "true" : "false";
  return set;
}

}  // namespace purimode
