#pragma once

// Independent brute-force references for cross-checking the pseudomode
// pipeline: a discretized-waveguide Schrodinger oracle (single- and
// two-excitation sectors), direct delay-ODE correlation series, a
// frequency-shift convergence sweep against the purified model, and a
// closed-form single-mode solution.
//
// Discretization convention: the waveguide continuum is replaced by k_modes
// total modes, half per propagation direction, uniformly spaced over
// [omega_0 - W, omega_0 + W]; coupling magnitudes are evaluated at omega_0
// (flat-coupling replacement) while propagation phases keep their full
// frequency dependence, which is what generates the inter-cavity delay.
// The discrete bath revives after t_rec = 2 pi / (mode spacing); results
// are only trusted up to 0.8 t_rec.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "purimode/constants.hpp"
#include "purimode/model.hpp"
#include "purimode/waveguide.hpp"

namespace purimode {

struct discrete_bath_result {
  std::vector<cplx> eps1, eps2;  // cavity amplitudes on the sample grid
  double recurrence_time = 0.0;
  bool recurrence_warning = false;  // window extends past 0.8 * t_rec
  std::string note;
  double norm_drift = 0.0;  // max | ||psi|| - 1 | (meaningful for kappa_i = 0)
};

// single excitation shared between the two cavities and the discretized
// waveguide, starting in cavity `init_cavity`; the returned amplitudes are
// the vacuum correlations <c_n(t) c_m^+(0)> for m = init_cavity.
// bandwidth < 0 selects the default W = 40 * max(kappa).
discrete_bath_result single_excitation_schrodinger(
    const waveguide_params& p, int k_modes, int init_cavity,
    const std::vector<double>& t_grid, double bandwidth = -1.0,
    bool lab_frame = true);

struct correlation_series {
  // c_nm(t) = <c_n(t) c_m^+(0)>
  std::vector<cplx> c11, c21, c12, c22;
};

// all four correlation entries by direct method-of-steps integration of the
// delayed cavity equations (zero history before t = 0)
correlation_series delay_ode_correlations(const waveguide_params& p,
                                          const std::vector<double>& t_grid,
                                          bool lab_frame = true);

struct two_excitation_result {
  std::vector<double> pop_e1, pop_e2;  // emitter excited-state populations
  double recurrence_time = 0.0;
  bool recurrence_warning = false;
  double norm_drift = 0.0;
};

// Schrodinger evolution of emitters + cavities + discretized waveguide in
// the two-excitation sector, both emitters initially excited.  The sector
// is represented as a symmetric two-particle amplitude matrix with the
// emitter double-occupancy amplitudes projected out.
two_excitation_result two_excitation_unitary(const waveguide_params& p,
                                             int k_modes,
                                             const std::vector<double>& t_grid,
                                             double bandwidth = -1.0);

struct finite_a_report {
  std::vector<double> a_values;
  std::vector<double> deviation;           // sup norm over grid and entries
  std::vector<double> deviation_at_probe;  // at the fixed probe time
  double probe_time = 0.0;
  // the shifted-pair bath always carries twice the target equal-time
  // correlation, so this stays |lambda|^2 for every shift
  double equal_time_excess = 0.0;
  bool monotone = false;      // deviations decrease along a_values
  bool geometric_ok = false;  // probe deviation at least halves per step,
                              // once above the numerical floor of 1e-6
};

// trajectory deviation between the shifted-pair equation at each a and the
// purified model of the same single-exponential bath (coupling operator s,
// weight lambda^2, frequency omega, width gamma), both truncated at n_max
finite_a_report finite_a_sweep(const system_spec& sys,
                               const Eigen::MatrixXcd& rho0, double omega,
                               double gamma, cplx lambda,
                               const Eigen::MatrixXcd& s,
                               const std::vector<double>& a_list,
                               const std::vector<double>& t_grid, int n_max);

// closed-form single-excitation solution of a two-level system (splitting
// omega + detuning) exchanging one excitation with a damped mode at
// frequency omega, amplitude decay gamma, coupling lambda; returns rho_S on
// the grid for the initially excited qubit, basis {excited, ground}
std::vector<Eigen::MatrixXcd> analytic_single_mode(
    double omega, double gamma, cplx lambda, double detuning,
    const std::vector<double>& t_grid);

}  // namespace purimode
