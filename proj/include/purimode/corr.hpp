#pragma once

#include <compare>
#include <map>
#include <string>
#include <vector>

#include "purimode/constants.hpp"

// Exponential decompositions of two-time bath correlation functions.
//
// An entry is keyed by the two operator labels in the order they appear in
// the correlation bracket, plus a time sign:
//
//   sign = plus : the first operator sits at the later time,
//                 C(tau) = <first(tau) second(0)>      tau >= 0
//                        = sum_s w_s exp[-(i omega_s + gamma_s) tau]
//
//   sign = minus: the first operator sits at the earlier time,
//                 C(tau) = <first(0) second(tau)>      tau >= 0
//                        = sum_s w_s exp[+(i omega_s - gamma_s) tau]
//
// With this storage, the time-reversal identity that a vacuum-referenced
// bath obeys, <A(t)B(0)>* = <B^dag(0) A^dag(t)>, turns a plus entry (A,B)
// into a minus entry (B^dag, A^dag) holding the conjugated weights with the
// same omega and gamma.
namespace purimode {

struct exp_term {
  cplx w;        // weight
  double omega;  // oscillation frequency, rad/ps
  double gamma;  // decay rate, >= 0
};

enum class time_sign { plus, minus };

struct corr_key {
  std::string first;
  std::string second;
  time_sign sign;
  auto operator<=>(const corr_key&) const = default;
};

std::string to_string(const corr_key& k);

struct corr_entry {
  corr_key key;
  std::vector<exp_term> terms;
  // set when this minus entry was generated by time_reverse_close(); the
  // generating plus entry then shares term indices one-to-one
  bool from_closure = false;
};

class correlation_set {
 public:
  // register a mutually adjoint pair of operator labels (idempotent)
  void set_adjoint(const std::string& a, const std::string& a_dag);
  const std::string& adjoint(const std::string& label) const;
  bool has_adjoint(const std::string& label) const;
  const std::map<std::string, std::string>& adjoints() const {
    return adjoint_;
  }

  void add_term(const corr_key& key, const exp_term& term);
  void add_entry(const corr_key& key, std::vector<exp_term> terms,
                 bool from_closure = false);

  bool has(const corr_key& key) const;
  const corr_entry& at(const corr_key& key) const;
  const std::map<corr_key, corr_entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  // value of the stored entry at separation tau >= 0 (domain error otherwise)
  cplx eval(const corr_key& key, double tau) const;

  // <first(t) second(0)> for t >= 0 through the (first, second, plus) entry;
  // t < 0 is a domain error -- query the time-reversed entry instead
  cplx eval_decomposition(const std::string& first, const std::string& second,
                          double t) const;

  // For every plus entry (A,B) create the minus entry (B^dag, A^dag) with
  // conjugated weights, unless it already exists.  Idempotent.  Requires
  // adjoints for all labels appearing in plus entries.
  void time_reverse_close();

  // move every entry to a frame rotating at omega0 (omega -> omega - omega0);
  // valid when each entry pairs one annihilation-like with one creation-like
  // operator, as is the case for all decompositions produced here
  void shift_frame(double omega0);

  std::map<std::string, std::string> metadata;

 private:
  std::map<corr_key, corr_entry> entries_;
  std::map<std::string, std::string> adjoint_;
};

// sum_s w_s exp(-(i omega_s + gamma_s) t) for t >= 0 (domain error otherwise)
cplx eval_terms(const std::vector<exp_term>& terms, double t);

/// principal square root: the slot amplitudes lambda_a = lambda_b of a weight
cplx split_weight(cplx w);

// sup-norm deviation of the stored decomposition from reference samples,
// relative to the largest reference magnitude (absolute if that is zero)
double reconstruction_error(const correlation_set& set, const corr_key& key,
                            const std::vector<double>& tau,
                            const std::vector<cplx>& reference);

}  // namespace purimode
