#pragma once

// Correlation functions of a 1D waveguide section side-coupled to two
// cavities at separation x_d.  The field seen by the emitters is filtered by
// the cavities, so the relevant bath operators are the cavity amplitudes
// c_1, c_2.  In a frame rotating at the reference frequency omega_0 the
// vacuum correlations <c_n(t) c_m^dag(0)> follow from a Laplace-domain
// solution whose denominator is
//
//   F(s) = [s + z_1][s + z_2] - (kappa_1 kappa_2 / 4) e^{2 i omega_0 t_d}
//          e^{-2 s t_d},      z_n = i dw_{c,n} + kappa_n / 2,
//
// with t_d = x_d / v_g the inter-cavity propagation delay and dw_{c,n} the
// cavity detuning from omega_0.  For t_d -> 0 ("case 1") F is a quadratic
// with two closed-form roots; for large delay ("case 2") F is transcendental
// and the poles form a ladder with spacing ~ pi/t_d that must be located
// numerically.  Correlations are recovered as residue sums over the poles;
// long-delay self-correlations converge slowly in the pole count, so they
// are instead fit from direct integration of the delayed equations of
// motion.  Intrinsic (non-waveguide) cavity losses kappa_{i,n} are not part
// of F; they broaden every emitted term by (kappa_{i,n} + kappa_{i,m})/4,
// which is exact when the two rates coincide.

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "purimode/constants.hpp"
#include "purimode/corr.hpp"

namespace purimode {

inline const std::string lbl_c1 = "c1";
inline const std::string lbl_c2 = "c2";
inline const std::string lbl_c1dag = "c1dag";
inline const std::string lbl_c2dag = "c2dag";

struct waveguide_params {
  double lambda_c_nm[2] = {945.0, 945.0};  // cavity resonance wavelengths
  double lambda_e_nm[2] = {945.0, 945.0};  // emitter wavelengths
  double quality[2] = {1e3, 1e3};          // cavity quality factors
  double intrinsic_fraction = 0.05;        // kappa_i as fraction of kappa
  double v_fraction[2] = {0.1, 0.2};       // V_n as fraction of kappa_n
  double xd_wavelengths = 4.0;             // cavity separation in lambda0
  double lambda0_nm = 945.0;               // reference wavelength
  double v_g = speed_of_light_nm_per_ps;   // group velocity

  // direct rate overrides (negative = use the derived default above);
  // needed for decoupled limits such as kappa_2 = 0 or V_2 = 0
  double kappa_override[2] = {-1.0, -1.0};
  double kappa_i_override[2] = {-1.0, -1.0};
  double v_override[2] = {-1.0, -1.0};

  double omega0() const { return omega_from_wavelength_nm(lambda0_nm); }
  double omega_c(int n) const {
    return omega_from_wavelength_nm(lambda_c_nm[n - 1]);
  }
  double omega_e(int n) const {
    return omega_from_wavelength_nm(lambda_e_nm[n - 1]);
  }
  double kappa(int n) const {
    return kappa_override[n - 1] >= 0.0 ? kappa_override[n - 1]
                                        : omega_c(n) / quality[n - 1];
  }
  double kappa_i(int n) const {
    return kappa_i_override[n - 1] >= 0.0 ? kappa_i_override[n - 1]
                                          : intrinsic_fraction * kappa(n);
  }
  double coupling_v(int n) const {
    return v_override[n - 1] >= 0.0 ? v_override[n - 1]
                                    : v_fraction[n - 1] * kappa(n);
  }
  double delta_c(int n) const { return omega_c(n) - omega0(); }
  double delta_e(int n) const { return omega_e(n) - omega0(); }
  double t_delay() const { return xd_wavelengths * lambda0_nm / v_g; }
  double phase() const { return omega0() * t_delay(); }
  cplx z(int n) const { return cplx(0.5 * kappa(n), delta_c(n)); }
};

cplx transcendental_F(const waveguide_params& p, cplx s);
cplx transcendental_F_prime(const waveguide_params& p, cplx s);

// closed-form roots of the t_d -> 0 quadratic (rotating frame); throws on a
// degenerate pair, where the two-term residue form breaks down
std::pair<cplx, cplx> case1_poles(const waveguide_params& p);

// all four <c_n(t) c_m^dag(0)> entries as two-term decompositions in the lab
// frame, time-reversal closed, with intrinsic-loss broadening applied
correlation_set case1_correlations(const waveguide_params& p);

struct pole_window {
  double re_min, re_max, im_min, im_max;
  int nx = 400, ny = 400;
};

// the standard scan window scaled by the actual linewidths
pole_window default_pole_window(const waveguide_params& p);

// window wide enough to hold n_poles of the delay ladder (spacing pi/t_d)
pole_window case2_window(const waveguide_params& p, int n_poles);

struct pole_set {
  std::vector<cplx> s;  // roots, sorted by (Im s, Re s)
  pole_window window;
  // residue weights keyed by (observed cavity n, initially excited cavity m)
  std::map<std::pair<int, int>, std::vector<cplx>> residue_weights;
};

// grid scan of log|F| minima + Newton refinement + de-duplication; every
// returned root satisfies |F(s)| <= newton_tol * max(1, |s|^2); roots with
// |F'| below a near-degeneracy threshold raise an error naming the root
pole_set find_poles(const waveguide_params& p, const pole_window& w,
                    double newton_tol = 1e-12, double merge_radius = 1e-6);

// keep the n roots nearest the real axis (smallest |Im s|), canonical order
pole_set keep_poles(pole_set ps, int n);

// residue weights w_k = N(s_k)/F'(s_k) of the Laplace-domain amplitudes for
// the given initial single-photon cavity; fills residue_weights entries
// (1, init_cavity) and (2, init_cavity)
void add_residues(const waveguide_params& p, pole_set& ps, int init_cavity);

struct delay_ode_result {
  std::vector<cplx> eps1, eps2;
};

// direct method-of-steps integration of the delayed amplitude equations with
// zero history before t = 0; the cross amplitude is exactly zero for
// t < t_d, and t_d = 0 falls back to a plain ODE; requested times are
// interpolated from the fixed integration grid
delay_ode_result delay_ode_amplitudes(const waveguide_params& p,
                                      int init_cavity,
                                      const std::vector<double>& t,
                                      bool lab_frame = true);

// cross-correlations from pole residues, self-correlations from an
// exponential fit of delay-ODE data, closure and broadening applied
correlation_set case2_correlations(const waveguide_params& p,
                                   const pole_set& ps, int n_self_terms);

}  // namespace purimode
