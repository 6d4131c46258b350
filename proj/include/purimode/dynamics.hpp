#pragma once

// Backend-agnostic propagation: a small hook bundle (`evolution`) wraps
// either the dense purified assembly, a doubled density-matrix assembly, or
// the tiered sparse representation, and the operations below (trajectories,
// steady states, two-time correlations by quantum regression, spectra) work
// against the hooks only.

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "purimode/constants.hpp"
#include "purimode/liouville.hpp"
#include "purimode/model.hpp"
#include "purimode/ode.hpp"

namespace purimode {

struct trajectory {
  std::vector<double> times;  // strictly increasing sample times (ps)
  // named complex series aligned with `times`
  std::map<std::string, std::vector<cplx>> observables;
  // optional thinned state snapshots (every keep_every-th sample)
  std::vector<double> state_times;
  std::vector<Eigen::VectorXcd> states;
};

using state_map = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

struct evolution {
  long dim = 0;
  int d_s = 0;
  // dydt = generator applied to y
  std::function<void(const Eigen::VectorXcd&, Eigen::VectorXcd&)> rhs;
  // physical reduced density matrix (d_s x d_s) of a state vector
  std::function<Eigen::MatrixXcd(const Eigen::VectorXcd&)> reduced;
  // apply an attached field insertion; empty when the backend has none
  std::function<Eigen::VectorXcd(const Eigen::VectorXcd&, const field_insertion&)>
      insert;
  Eigen::VectorXcd y0;  // initial state, already trace-normalized
  // trace of the raw initial reduced state before normalization (the
  // prepared-field weight); 1 for plain initial states
  cplx norm_factor = 1.0;
  // explicit sparse generator when one exists (enables the direct
  // steady-state solve)
  std::shared_ptr<const sparse_super_op> matrix;
};

// dense purified assembly of a constructed model (per-factor or uniform
// truncation); insertions supported
evolution make_dense_evolution(const model_spec& m,
                               const std::vector<int>& truncations);
evolution make_dense_evolution(const model_spec& m, int truncation);

// doubled density-matrix assembly (conventional or Lindblad reference)
// starting from rho0; insertions unsupported
evolution make_doubled_evolution(assembled_op a, const Eigen::MatrixXcd& rho0);

// tiered sparse representation of a constructed model with total tier cap
evolution make_tier_evolution(const model_spec& m, int tier_cap);

// arbitrary functional of the full propagated vector (e.g. occupation
// recipes built from field insertions)
using state_observable = std::function<cplx(const Eigen::VectorXcd&)>;

// propagate and record Tr(O rho_S) for every named operator plus every named
// state functional; keep_every > 0 additionally snapshots every
// keep_every-th sampled state
trajectory integrate(const evolution& ev, const std::vector<double>& t_grid,
                     const std::map<std::string, Eigen::MatrixXcd>& observables,
                     const std::map<std::string, state_observable>& functionals,
                     const ode_options& opt = {}, int keep_every = 0);
trajectory integrate(const evolution& ev, const std::vector<double>& t_grid,
                     const std::map<std::string, Eigen::MatrixXcd>& observables,
                     const ode_options& opt = {}, int keep_every = 0);

// fixed point of the generator, trace-normalized.  Dimensions <= 4096 with
// an explicit matrix use the null-space solve (errors when the kernel is
// not one-dimensional); otherwise integrates from ev.y0 until
// ||rhs|| <= 1e-10 ||y||, erroring with the residual if t_max is reached.
Eigen::VectorXcd steady_state(const evolution& ev, double t_max = 1e6,
                              const ode_options& opt = {});

// quantum regression: y(0) = apply_b(steady), propagated over tau_grid;
// value(tau) = Tr[ reduced( apply_a(y(tau)) ) ]
std::vector<cplx> two_time_correlation(const evolution& ev,
                                       const state_map& apply_a,
                                       const state_map& apply_b,
                                       const Eigen::VectorXcd& steady,
                                       const std::vector<double>& tau_grid,
                                       const ode_options& opt = {});

struct spectrum_result {
  std::vector<double> omega;  // rad/ps, ascending, two-sided
  std::vector<double> s;      // one-sided transform 2 Re integral
  // set when the series has not decayed below 1e-3 of its peak by the end
  // of the window (spectral leakage expected)
  bool decay_warning = false;
};

// S(w) = 2 Re  sum_tau C(tau) e^{-i w tau} dtau  over the uniform tau grid,
// endpoint-corrected, zero-padded by zero_pad, optional half-Hann taper
spectrum_result spectrum(const std::vector<cplx>& series,
                         const std::vector<double>& tau_grid,
                         bool hann = false, int zero_pad = 4);

// in-place radix-2 transform, x.size() a power of two; forward kernel
// e^{-2 pi i j k / n} (inverse scales by 1/n)
void fft_radix2(std::vector<cplx>& x, bool inverse);

}  // namespace purimode
