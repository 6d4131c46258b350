#pragma once

// Assembly of vectorized superoperators for models with few enough modes
// that an explicit (sparse) matrix is practical.
//
// Factor order of the vectorized state: (system-ket, system-bra, mode
// factors ...), last factor fastest.  A purified layout gives each mode ONE
// factor: chiral modes act on a single side of rho, so their local dimension
// stays n_max+1 instead of (n_max+1)^2 -- the whole point of the purified
// construction.  The reference assemblies (conventional pseudomode,
// finite-shift pseudomode pair, cavity Lindblad equation) evolve a genuine
// density matrix over system x modes and therefore use a doubled layout
// whose mode factors come in (ket, bra) pairs.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "purimode/model.hpp"
#include "purimode/waveguide.hpp"

namespace purimode {

struct space_layout {
  int d_s = 0;
  std::vector<int> n_max;  // occupation cutoff per mode factor
  bool doubled = false;    // mode factors arranged in (ket, bra) pairs

  std::int64_t dim() const;
  // strides in factor order: [0] system-ket, [1] system-bra, [2+k] mode k
  std::vector<std::int64_t> strides() const;
  std::int64_t index(int s_ket, int s_bra, const std::vector<int>& occ) const;
};

// coordinate-format sparse matrix on the vectorized space; duplicate
// coordinates are allowed and accumulate
struct sparse_super_op {
  std::int64_t dimension = 0;
  std::vector<std::int64_t> row, col;
  std::vector<cplx> val;

  void add(std::int64_t r, std::int64_t c, cplx v);
  std::size_t nnz() const { return val.size(); }
  void apply(const Eigen::VectorXcd& y, Eigen::VectorXcd& out) const;
  Eigen::VectorXcd operator*(const Eigen::VectorXcd& y) const;
  Eigen::MatrixXcd dense() const;
};

struct assembled_op {
  space_layout layout;
  sparse_super_op op;
};

// Full equation of motion of the purified model: the bath-induced generator
// plus -i[H_S, .] plus the declared dissipators.  System operators of left
// factors act on the system-ket factor, of right factors on the system-bra
// factor (transposed); right-chirality mode ladders may appear only in left
// factors and left-chirality only in right factors, each acting on the
// mode's single factor.
assembled_op assemble_purified(const model_spec& model,
                               const std::vector<int>& truncations);
assembled_op assemble_purified(const model_spec& model, int truncation);

// one damped harmonic level of the conventional pseudomode equation
//   d rho/dt = -i[H_S + omega d^+d + lambda S (d + d^+), rho]
//              + gamma (2 d rho d^+ - d^+d rho - rho d^+d)
// complex `omega` and `lambda` arise from analytic continuation and enter
// both sides of the commutator unconjugated
struct pm_level {
  cplx omega;
  double gamma = 0.0;
  cplx lambda;
};

assembled_op assemble_conventional_pm(const system_spec& sys,
                                      const std::vector<pm_level>& levels,
                                      const Eigen::MatrixXcd& s, int n_max);
assembled_op assemble_conventional_pm(const system_spec& sys, double omega,
                                      double gamma, cplx lambda,
                                      const Eigen::MatrixXcd& s, int n_max);

// pseudomode pair at shifted frequencies omega +/- i a and rates gamma + a,
// both coupled with the same lambda S (d + d^+); converges to the purified
// model as a grows (the equal-time correlation stays 2 lambda^2 instead of
// lambda^2, so convergence is pointwise for t > 0)
assembled_op assemble_finite_a(const system_spec& sys, double omega,
                               double gamma, cplx lambda,
                               const Eigen::MatrixXcd& s, double a, int n_max);

// emitters + two cavities in the frame rotating at omega_0: cavity
// detunings, the declared emitter-cavity couplings, local kappa_n +
// kappa_{i,n} losses, and the delay-phase cross terms
//   sum_{n != m} (sqrt(kappa_1 kappa_2)/2) [ e^{-i omega_0 t_d} (c_m rho
//   c_n^+ - rho c_n^+ c_m) + e^{ i omega_0 t_d} (c_n rho c_m^+ - c_m^+ c_n
//   rho) ]
// valid in the short-delay regime where retardation inside the correlation
// is negligible
assembled_op assemble_case1_lindblad(const waveguide_params& p,
                                     const system_spec& sys, int n_max = 1);

// purified layout: the all-modes-vacuum block; doubled layout: partial
// trace over the mode factors
Eigen::MatrixXcd extract_rho_s(const space_layout& lay,
                               const Eigen::VectorXcd& y);

// rho placed in the all-modes-vacuum block (purified) or tensored with the
// mode vacuum projector (doubled)
Eigen::VectorXcd embed_rho_s(const space_layout& lay,
                             const Eigen::MatrixXcd& rho);

// apply the field insertion Phi = sum of its terms as an operator on the
// state (no -i: insertions are operator applications, not generator
// pieces); the model that produced the insertion resolves its mode ids
Eigen::VectorXcd apply_insertion(const space_layout& lay,
                                 const model_spec& model,
                                 const Eigen::VectorXcd& y,
                                 const field_insertion& ins);

// rho0 x vacuum with every attached input insertion expanded over vacuum
// contractions; the caller decides whether to renormalize the result
Eigen::VectorXcd initial_state(const space_layout& lay, const model_spec& m);

// doubled layouts only: sparse one-sided multiplication rho -> op rho
// (left) or rho -> rho op (right), with op acting on the system factor
// (hilbert_factor = 0) or the k-th mode pair (hilbert_factor = 1 + k);
// used for quantum-regression insertions on density-matrix assemblies
sparse_super_op doubled_one_sided(const space_layout& lay, int hilbert_factor,
                                  const Eigen::MatrixXcd& op, bool left);

}  // namespace purimode
