#include "purimode/oracle.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <vector>

#include "purimode/corr.hpp"
#include "purimode/liouville.hpp"
#include "purimode/ode.hpp"

namespace purimode {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument("oracle: " + msg);
}

void check_grid(const std::vector<double>& t) {
  require(!t.empty(), "empty time grid");
  require(t.front() >= 0.0, "time grid must start at t >= 0");
  for (size_t i = 1; i < t.size(); ++i)
    require(t[i] > t[i - 1], "time grid must be strictly increasing");
}

// Waveguide continuum replaced by k_modes discrete modes, half per
// propagation direction sigma = +/-1, detunings uniform over
// [-bandwidth, bandwidth] (midpoint grid, spacing 2W / (k/2)).  Each
// direction contributes half the cavity decay, so with density of states
// 2/spacing the coupling magnitude is g_n = sqrt(kappa_n spacing / (4 pi)).
// Magnitudes are evaluated on resonance; propagation phases
// e^{i sigma omega x_n / v_g} keep the full mode frequency, producing both
// the static phase omega_0 t_d and the delay itself.
struct discrete_bath {
  int per_dir = 0;
  double spacing = 0.0;
  double bandwidth = 0.0;
  std::vector<double> detuning;  // size 2 * per_dir
  std::vector<cplx> g1, g2;      // <c_n| H |mode>
  double recurrence() const { return 2.0 * pi / spacing; }
};

discrete_bath make_discrete_bath(const waveguide_params& p, int k_modes,
                                 double bandwidth) {
  require(k_modes >= 64, "need at least 64 bath modes");
  require(k_modes % 2 == 0, "bath mode count must be even (split over the "
                            "two propagation directions)");
  const double w = bandwidth > 0.0
                       ? bandwidth
                       : 40.0 * std::max(p.kappa(1), p.kappa(2));
  require(w > 0.0, "bath bandwidth must be positive");

  discrete_bath b;
  b.per_dir = k_modes / 2;
  b.bandwidth = w;
  b.spacing = 2.0 * w / b.per_dir;
  const int nb = 2 * b.per_dir;
  b.detuning.resize(nb);
  b.g1.resize(nb);
  b.g2.resize(nb);
  const double gm1 = std::sqrt(p.kappa(1) * b.spacing / (4.0 * pi));
  const double gm2 = std::sqrt(p.kappa(2) * b.spacing / (4.0 * pi));
  const double td = p.t_delay();  // x_2 / v_g, with x_1 = 0
  const double w0 = p.omega0();
  for (int dir = 0; dir < 2; ++dir) {
    const double sigma = dir == 0 ? 1.0 : -1.0;
    for (int j = 0; j < b.per_dir; ++j) {
      const int idx = dir * b.per_dir + j;
      const double det = -w + (j + 0.5) * b.spacing;
      b.detuning[idx] = det;
      b.g1[idx] = gm1;
      b.g2[idx] = gm2 * std::exp(iu * (sigma * (w0 + det) * td));
    }
  }
  return b;
}

std::string recurrence_note(double t_last, double t_rec) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "window extends to t=%.4g but the discrete bath revives near "
                "t=%.4g; increase the mode count or shrink the window",
                t_last, t_rec);
  return buf;
}

cplx sinc_c(cplx z) {
  // sin(z)/z, stable at the origin
  if (std::abs(z) < 1e-8) return 1.0 - z * z / 6.0;
  return std::sin(z) / z;
}

}  // namespace

discrete_bath_result single_excitation_schrodinger(
    const waveguide_params& p, int k_modes, int init_cavity,
    const std::vector<double>& t_grid, double bandwidth, bool lab_frame) {
  require(init_cavity == 1 || init_cavity == 2, "init_cavity must be 1 or 2");
  check_grid(t_grid);
  const discrete_bath b = make_discrete_bath(p, k_modes, bandwidth);
  const int nb = 2 * b.per_dir;

  discrete_bath_result out;
  out.recurrence_time = b.recurrence();
  if (t_grid.back() > 0.8 * out.recurrence_time) {
    out.recurrence_warning = true;
    out.note = recurrence_note(t_grid.back(), out.recurrence_time);
  }

  Eigen::VectorXcd ga1(nb), ga2(nb);
  Eigen::VectorXd det(nb);
  for (int i = 0; i < nb; ++i) {
    ga1[i] = b.g1[i];
    ga2[i] = b.g2[i];
    det[i] = b.detuning[i];
  }
  const cplx h11 = cplx(p.delta_c(1), -0.5 * p.kappa_i(1));
  const cplx h22 = cplx(p.delta_c(2), -0.5 * p.kappa_i(2));

  auto rhs = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dydt) {
    const auto beta = y.segment(2, nb);
    dydt[0] = -iu * (h11 * y[0] + (ga1.transpose() * beta)(0, 0));
    dydt[1] = -iu * (h22 * y[1] + (ga2.transpose() * beta)(0, 0));
    dydt.segment(2, nb) =
        -iu * (det.array() * beta.array() + ga1.conjugate().array() * y[0] +
               ga2.conjugate().array() * y[1])
             .matrix();
  };

  Eigen::VectorXcd y0 = Eigen::VectorXcd::Zero(2 + nb);
  y0[init_cavity - 1] = 1.0;

  const double w0 = p.omega0();
  const bool lossless = p.kappa_i(1) == 0.0 && p.kappa_i(2) == 0.0;
  auto sink = [&](double t, const Eigen::VectorXcd& y) {
    const cplx ph = lab_frame ? std::exp(-iu * (w0 * t)) : cplx(1.0);
    out.eps1.push_back(ph * y[0]);
    out.eps2.push_back(ph * y[1]);
    if (lossless)
      out.norm_drift = std::max(out.norm_drift, std::abs(y.norm() - 1.0));
  };

  ode_options opt;
  opt.rtol = 1e-9;
  opt.atol = 1e-12;
  integrate_dp54(rhs, y0, 0.0, t_grid.back(), t_grid, sink, opt);
  return out;
}

correlation_series delay_ode_correlations(const waveguide_params& p,
                                          const std::vector<double>& t_grid,
                                          bool lab_frame) {
  check_grid(t_grid);
  const double td = p.t_delay();
  if (td > 0.0) {
    // the retarded terms switch on at multiples of t_d; demand sampling fine
    // enough that nothing is stepped over
    for (size_t i = 1; i < t_grid.size(); ++i)
      require(t_grid[i] - t_grid[i - 1] <= td / 50.0 * (1.0 + 1e-9),
              "time grid step must not exceed t_d / 50");
  }
  delay_ode_result r1 = delay_ode_amplitudes(p, 1, t_grid, lab_frame);
  delay_ode_result r2 = delay_ode_amplitudes(p, 2, t_grid, lab_frame);
  correlation_series out;
  out.c11 = std::move(r1.eps1);
  out.c21 = std::move(r1.eps2);
  out.c12 = std::move(r2.eps1);
  out.c22 = std::move(r2.eps2);
  return out;
}

two_excitation_result two_excitation_unitary(const waveguide_params& p,
                                             int k_modes,
                                             const std::vector<double>& t_grid,
                                             double bandwidth) {
  check_grid(t_grid);
  require(k_modes <= 400, "two-excitation sector limited to 400 bath modes");
  const discrete_bath b = make_discrete_bath(p, k_modes, bandwidth);
  const int nb = 2 * b.per_dir;
  const int n = 4 + nb;  // e1 e2 c1 c2, then the bath modes
  require(double(n) * double(n) * 16.0 < 512.0 * 1024.0 * 1024.0,
          "two-excitation amplitude matrix would exceed 512 MB");

  // single-particle Hamiltonian; the two-excitation state is a symmetric
  // amplitude matrix psi with d psi/dt = -i (h psi + (h psi)^T) and the
  // emitter double-occupancy amplitudes projected out (hard-core levels)
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(4 * nb + 8);
  trip.emplace_back(0, 0, cplx(p.delta_e(1)));
  trip.emplace_back(1, 1, cplx(p.delta_e(2)));
  trip.emplace_back(2, 2, cplx(p.delta_c(1), -0.5 * p.kappa_i(1)));
  trip.emplace_back(3, 3, cplx(p.delta_c(2), -0.5 * p.kappa_i(2)));
  trip.emplace_back(0, 2, cplx(p.coupling_v(1)));
  trip.emplace_back(2, 0, cplx(p.coupling_v(1)));
  trip.emplace_back(1, 3, cplx(p.coupling_v(2)));
  trip.emplace_back(3, 1, cplx(p.coupling_v(2)));
  for (int m = 0; m < nb; ++m) {
    trip.emplace_back(4 + m, 4 + m, cplx(b.detuning[m]));
    trip.emplace_back(2, 4 + m, b.g1[m]);
    trip.emplace_back(4 + m, 2, std::conj(b.g1[m]));
    trip.emplace_back(3, 4 + m, b.g2[m]);
    trip.emplace_back(4 + m, 3, std::conj(b.g2[m]));
  }
  Eigen::SparseMatrix<cplx> h(n, n);
  h.setFromTriplets(trip.begin(), trip.end());

  two_excitation_result out;
  out.recurrence_time = b.recurrence();
  if (t_grid.back() > 0.8 * out.recurrence_time) {
    out.recurrence_warning = true;
  }

  Eigen::MatrixXcd hpsi(n, n);
  auto rhs = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dydt) {
    Eigen::Map<const Eigen::MatrixXcd> psi(y.data(), n, n);
    Eigen::Map<Eigen::MatrixXcd> dpsi(dydt.data(), n, n);
    hpsi.noalias() = h * psi;
    dpsi = -iu * (hpsi + hpsi.transpose());
    dpsi(0, 0) = 0.0;
    dpsi(1, 1) = 0.0;
  };

  Eigen::VectorXcd y0 = Eigen::VectorXcd::Zero(long(n) * n);
  {
    Eigen::Map<Eigen::MatrixXcd> psi(y0.data(), n, n);
    psi(0, 1) = psi(1, 0) = 1.0 / std::sqrt(2.0);
  }

  const bool lossless = p.kappa_i(1) == 0.0 && p.kappa_i(2) == 0.0;
  auto sink = [&](double, const Eigen::VectorXcd& y) {
    Eigen::Map<const Eigen::MatrixXcd> psi(y.data(), n, n);
    out.pop_e1.push_back(2.0 * psi.row(0).squaredNorm());
    out.pop_e2.push_back(2.0 * psi.row(1).squaredNorm());
    if (lossless)
      out.norm_drift = std::max(out.norm_drift, std::abs(y.norm() - 1.0));
  };

  ode_options opt;
  opt.rtol = 1e-8;
  opt.atol = 1e-10;
  integrate_dp54(rhs, y0, 0.0, t_grid.back(), t_grid, sink, opt);
  return out;
}

finite_a_report finite_a_sweep(const system_spec& sys,
                               const Eigen::MatrixXcd& rho0, double omega,
                               double gamma, cplx lambda,
                               const Eigen::MatrixXcd& s,
                               const std::vector<double>& a_list,
                               const std::vector<double>& t_grid, int n_max) {
  check_grid(t_grid);
  require(!a_list.empty(), "empty shift list");
  require(n_max >= 1, "n_max must be at least 1");
  const size_t nt = t_grid.size();

  // purified reference for the Hermitian single-exponential bath
  // B = lambda (d + d^+):  <B(t) B(0)> = lambda^2 e^{-i omega t - gamma t}
  correlation_set corr;
  corr.set_adjoint("b", "b");
  corr.add_entry({"b", "b", time_sign::plus},
                 {exp_term{lambda * lambda, omega, gamma}});
  corr.time_reverse_close();
  system_spec sys_b = sys;
  sys_b.couplings = {coupling_spec{"b", s, "b"}};
  model_spec m = build_system_model(sys_b, corr);
  m.rho0 = rho0;

  auto run = [&](const assembled_op& a_op,
                 const Eigen::VectorXcd& y0) {
    std::vector<Eigen::MatrixXcd> traj;
    traj.reserve(nt);
    integrate_dp54(
        [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& d) {
          a_op.op.apply(y, d);
        },
        y0, 0.0, t_grid.back(), t_grid,
        [&](double, const Eigen::VectorXcd& y) {
          traj.push_back(extract_rho_s(a_op.layout, y));
        });
    return traj;
  };

  assembled_op ref = assemble_purified(m, n_max);
  std::vector<Eigen::MatrixXcd> rho_ref = run(ref, initial_state(ref.layout, m));

  finite_a_report rep;
  rep.a_values = a_list;
  rep.equal_time_excess = std::abs(lambda * lambda);
  size_t probe = nt >= 2 ? std::max<size_t>(nt / 4, 1) : 0;
  rep.probe_time = t_grid[probe];

  for (double a : a_list) {
    require(a >= 0.0, "shift values must be non-negative");
    assembled_op fa = assemble_finite_a(sys, omega, gamma, lambda, s, a, n_max);
    std::vector<Eigen::MatrixXcd> rho_a =
        run(fa, embed_rho_s(fa.layout, rho0));
    double dev = 0.0;
    for (size_t i = 0; i < nt; ++i)
      dev = std::max(dev, (rho_a[i] - rho_ref[i]).cwiseAbs().maxCoeff());
    rep.deviation.push_back(dev);
    rep.deviation_at_probe.push_back(
        (rho_a[probe] - rho_ref[probe]).cwiseAbs().maxCoeff());
  }

  rep.monotone = true;
  for (size_t i = 1; i < rep.deviation.size(); ++i)
    if (rep.deviation[i] >= rep.deviation[i - 1]) rep.monotone = false;

  // the shifted-pair error decays like e^{-a t}; demand at least a halving
  // of the probe deviation per step, unless it already sits on the
  // integration-accuracy floor
  rep.geometric_ok = true;
  for (size_t i = 1; i < rep.deviation_at_probe.size(); ++i) {
    if (a_list[i - 1] <= 0.0) continue;  // the unshifted point is off-model
    const double prev = rep.deviation_at_probe[i - 1];
    const double cur = rep.deviation_at_probe[i];
    if (cur > 0.5 * prev && cur > 1e-6) rep.geometric_ok = false;
  }
  return rep;
}

std::vector<Eigen::MatrixXcd> analytic_single_mode(
    double omega, double gamma, cplx lambda, double detuning,
    const std::vector<double>& t_grid) {
  check_grid(t_grid);
  require(gamma >= 0.0, "gamma must be >= 0");
  // single-excitation amplitudes (qubit excited + vacuum, ground + one
  // photon) evolve with the non-Hermitian 2x2 matrix
  //   M = [[wq/2, lambda], [conj(lambda), omega - wq/2 - i gamma]],
  // wq = omega + detuning.  Splitting off the trace, the excited amplitude
  // is e^{-i c0 t} (cos(mu t) - i dz sinc(mu t) t) with
  // c0 = (omega - i gamma)/2, dz = (detuning + i gamma)/2,
  // mu = sqrt(dz^2 + |lambda|^2).
  const cplx c0 = 0.5 * cplx(omega, -gamma);
  const cplx dz = 0.5 * cplx(detuning, gamma);
  const cplx mu = std::sqrt(dz * dz + std::norm(lambda));
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    const cplx amp = std::exp(-iu * (c0 * t)) *
                     (std::cos(mu * t) - iu * dz * t * sinc_c(mu * t));
    const double pe = std::min(1.0, std::norm(amp));
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(2, 2);
    rho(0, 0) = pe;
    rho(1, 1) = 1.0 - pe;
    out.push_back(std::move(rho));
  }
  return out;
}

}  // namespace purimode
