#pragma once

// Tiered propagation of the purified model for large mode counts.  The
// state is a hierarchy of auxiliary d_S x d_S matrices rho_{m,n} indexed by
// the occupations m of the right-chirality modes and n of the left-chirality
// modes, truncated at a total-occupation cap L.  Because every mode acts on
// one side of rho only, single-ladder generator terms connect neighboring
// occupations with harmonic-oscillator square-root factors and the
// occupation-diagonal terms damp each auxiliary matrix independently; no
// per-mode Hilbert factor is ever stored.
//
// Storage is one flat array ordered by the graded-lexicographic key
// enumeration, addressed by a combinatorial ranking formula (a perfect
// hash), which keeps the right-hand-side sweep contiguous in memory.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "purimode/model.hpp"

namespace purimode {

// all occupation keys with total <= tier_cap over n_right + n_left slots
// (right-chirality modes first, both groups in mode-id order), stored
// sparsely in graded-lexicographic order: tiers ascending, plain
// lexicographic within a tier, so rank 0 is the all-zero key
struct ado_space {
  int n_right = 0;
  int n_left = 0;
  int tier_cap = 0;

  // CSR over keys: key k owns (slot, occupation) pairs
  // nz[offset[k] .. offset[k+1])
  std::vector<std::int64_t> offset;
  std::vector<std::pair<int, int>> nz;

  std::vector<std::uint64_t> tier_base;  // number of keys with tier < t
  std::vector<std::uint64_t> binom;      // C(n, k) table, k <= tier_cap

  int n_slots() const { return n_right + n_left; }
  std::int64_t count() const { return std::int64_t(offset.size()) - 1; }
  int tier(std::int64_t k) const;
  std::vector<int> occupations(std::int64_t k) const;  // dense key

  std::uint64_t choose(int n, int k) const;
  // rank of a key given as (slot, occupation) pairs sorted by slot,
  // occupations > 0; the inverse of the enumeration order
  std::int64_t rank(const std::pair<int, int>* occ, int n_occ) const;
};

std::shared_ptr<const ado_space> enumerate_ados(int n_right, int n_left,
                                                int tier_cap);

struct heom_state {
  std::shared_ptr<const ado_space> space;
  int d_s = 0;
  Eigen::VectorXcd data;  // count * d_s^2, column-major d_S x d_S blocks

  Eigen::Map<Eigen::MatrixXcd> block(std::int64_t k);
  Eigen::Map<const Eigen::MatrixXcd> block(std::int64_t k) const;
};

// one compiled generator/insertion term acting on the hierarchy
struct heom_term {
  cplx coeff;
  Eigen::MatrixXcd a, b;  // system ket/bra factors; 0-size = identity
  int slot = -1;
  int delta = 0;  // source key = destination key + delta * e_slot
};

// generator compiled against a slot assignment: occupation-diagonal
// coefficients, ladder edges bucketed by slot, and ladder-free terms
struct heom_context {
  std::shared_ptr<const ado_space> space;
  int d_s = 0;
  std::vector<heom_term> plain;
  std::vector<cplx> diag_coeff;            // per slot
  std::vector<std::vector<heom_term>> up;  // delta = +1 edges per slot
  std::vector<std::vector<heom_term>> down;
  int n_threads = 1;
};

// classify the model generator; terms whose ladder content is not a single
// raise/lower or a same-mode raise*lower pair raise an unsupported-term
// error
heom_context compile_heom(const model_spec& model,
                          std::shared_ptr<const ado_space> space);

// dydt = generator action on y, both flat over ctx.space; data-parallel
// over destination keys (PURIMODE_THREADS overrides the thread count)
void heom_rhs_into(const heom_context& ctx, const Eigen::VectorXcd& y,
                   Eigen::VectorXcd& dydt);

heom_state heom_rhs(const model_spec& model, const heom_state& state);

heom_state heom_apply_insertion(const model_spec& model,
                                const heom_state& state,
                                const field_insertion& ins);

// rho0 in the all-zero key with every attached input insertion expanded
// over vacuum contractions (not renormalized)
heom_state heom_initial_state(const model_spec& model,
                              std::shared_ptr<const ado_space> space);

// the physical reduced-density-matrix candidate rho_{0,0} (raw; normalize
// at readout when input insertions rescaled the state)
Eigen::MatrixXcd heom_rho_s(const heom_state& state);

// max over keys of || rho_{m,n} - rho_{n,m}^+ ||_max; requires the mode set
// to be closed under conjugation
double conjugation_defect(const model_spec& model, const heom_state& state);

struct tier_report {
  std::vector<int> tiers;
  std::vector<std::vector<double>> observable;  // per tier, aligned with t
  std::vector<double> deviation;  // max |obs_i - obs_{i+1}| per consecutive pair
  bool converged = false;         // last deviation <= tol (false if undefined)
};

// propagate the model at each tier cap and compare the observable of the
// extracted reduced state across consecutive caps
tier_report tier_convergence(
    const model_spec& model,
    const std::function<double(const Eigen::MatrixXcd&)>& observable,
    const std::vector<double>& t_grid, const std::vector<int>& l_list,
    double tol = 1e-8);

}  // namespace purimode
