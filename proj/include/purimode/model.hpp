#pragma once

// Mechanical construction of the purified-pseudomode model from a closed
// correlation set and a system specification.
//
// Every exponential term of every correlation entry becomes one harmonic
// mode with complex frequency z = omega - i gamma.  Entries whose first
// label is at the LATER time (sign = plus) produce right-chirality modes
// that act on the ket side of rho only; entries with the first label at the
// EARLIER time (sign = minus) produce left-chirality modes acting on the
// bra side only.  Each mode carries two slot amplitudes lambda_a (first
// label) and lambda_b (second label) with lambda_a * lambda_b = w.  A slot
// whose label matches a system-bath coupling contributes generator vertices;
// a slot matching a declared field contributes a field-insertion term
// instead.  The later slot always carries the commutator-type vertex (or
// the observation-time insertion), the earlier slot the one-sided vertex
// (or the t=0 preparation insertion).

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "purimode/constants.hpp"
#include "purimode/corr.hpp"

namespace purimode {

struct coupling_spec {
  std::string label;          // bath operator this system operator multiplies
  Eigen::MatrixXcd s;         // system-side operator, coupling strength folded in
  std::string adjoint_label;  // label of the adjoint bath operator
};

struct field_spec {
  std::string label;
  // when set, the field operator equals factor * (bath operator x_label);
  // output fields then reuse existing modes instead of creating new ones
  bool proportional = false;
  std::string x_label;
  cplx factor = 1.0;
};

struct lindblad_spec {
  Eigen::MatrixXcd op;  // collapse operator L
  double rate = 0.0;    // d rho/dt += rate * (L rho L^+ - {L^+ L, rho}/2)
};

struct system_spec {
  int dim = 0;
  Eigen::MatrixXcd h_s;
  std::vector<coupling_spec> couplings;
  std::vector<field_spec> fields;
  std::vector<lindblad_spec> lindblads;  // local losses, incoherent pumps

  const coupling_spec* find_coupling(const std::string& label) const;
  const field_spec* find_field(const std::string& label) const;
  // hermiticity of h_s, unique labels, resolvable adjoints, square matrices
  void validate() const;
};

enum class chirality { right, left };
enum class mode_role { system_dynamics, output_field, input_field };

struct purified_mode {
  int id = -1;
  chirality chi = chirality::right;
  cplx z;  // omega - i gamma of the source term, gamma >= 0
  mode_role role = mode_role::system_dynamics;
  corr_key source;     // correlation entry this mode represents
  int term_index = 0;  // exponential term within that entry
  cplx lambda_a;       // amplitude of the first-label slot
  cplx lambda_b;       // amplitude of the second-label slot
};

struct op_factor {
  bool is_mode = false;
  std::string sys_label;  // coupling label resolving to its matrix
  int mode_id = -1;
  bool raise_op = false;  // ladder type when is_mode

  static op_factor sys(std::string label) {
    op_factor f;
    f.sys_label = std::move(label);
    return f;
  }
  static op_factor mode(int id, bool raise) {
    op_factor f;
    f.is_mode = true;
    f.mode_id = id;
    f.raise_op = raise;
    return f;
  }
};

// rho -> coeff * (product of left factors) rho (product of right factors);
// factor lists are written in operator product order
struct super_term {
  cplx coeff;
  std::vector<op_factor> left;
  std::vector<op_factor> right;
};

enum class insertion_timing { output, input };

struct field_insertion {
  std::string label;           // field operator represented
  std::string resolved_label;  // label used for correlation lookups
  cplx factor = 1.0;           // proportionality/amplitude prefactor
  bool left_side = true;       // side of rho the field operator acts on
  insertion_timing timing = insertion_timing::output;
  std::vector<super_term> terms;
};

struct model_spec {
  system_spec system;
  std::vector<purified_mode> modes;
  // bath-induced part of the generator, stored as i * (d rho/dt); the
  // assemblers multiply by -i and add -i[H_S, .] plus the dissipators
  std::vector<super_term> generator;
  std::vector<field_insertion> insertions;  // in attach order
  Eigen::MatrixXcd rho0;                    // initial system density matrix
  correlation_set corr;                     // kept for insertion bookkeeping

  const purified_mode& mode(int id) const;
  // the output insertion registered for a field label
  const field_insertion& output(const std::string& label) const;
  bool has_output(const std::string& label) const;
  // input insertions in application order
  std::vector<const field_insertion*> input_sequence() const;
};

struct mode_counts {
  int right_system = 0, left_system = 0;
  int right_output = 0, left_output = 0;
  int right_input = 0, left_input = 0;
  int reuse_records = 0;  // proportional output parts riding existing modes
  int total_modes() const {
    return right_system + left_system + right_output + left_output +
           right_input + left_input;
  }
};

// one mode per exponential term of every coupling-coupling entry; entries
// involving declared field labels are left to the attach operations; labels
// that are neither couplings nor declared fields raise a configuration error
model_spec build_system_model(const system_spec& sys,
                              const correlation_set& corr);

// observation-time field: left side inserts phi * rho, right side rho * phi.
// Proportional fields reuse existing modes (all roles, so photon preparations
// remain visible to observables); otherwise new single-vertex modes are
// created from the (phi, X) correlation entries.
void attach_output_field(model_spec& model, const std::string& field_label,
                         bool left_side);

// t=0 preparation field; always creates new modes whose excitation feeds the
// system through the later-slot commutator vertex; `amplitude` scales the
// inserted operator
void attach_input_field(model_spec& model, const std::string& field_label,
                        bool left_side, cplx amplitude = 1.0);

mode_counts count_modes(const model_spec& model);

// Wick expansion of the ordered t=0 input-insertion product over a Gaussian
// vacuum: the initial state is
//   y0 = sum over subsets S of inputs:  W(complement of S) *
//        (insertions in S, in application order) applied to rho0 (x) vacuum
// where W is the pairing sum over equal-time contractions, evaluated in the
// operator order "right-side insertions in application order, then left-side
// insertions in reverse application order".  Returns (bitmask over the input
// sequence, scalar W) pairs; masks with W = 0 are omitted except the full
// mask, which is always present with W contribution 1 for the empty
// complement.
std::vector<std::pair<std::uint32_t, cplx>> input_expansion(
    const model_spec& m);

// lossless structured-document round trip
std::string model_to_json(const model_spec& m);
model_spec model_from_json(const std::string& text);

}  // namespace purimode
