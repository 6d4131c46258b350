#include "purimode/corr.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace purimode {

std::string to_string(const corr_key& k) {
  return "(" + k.first + ", " + k.second +
         (k.sign == time_sign::plus ? ", +)" : ", -)");
}

void correlation_set::set_adjoint(const std::string& a,
                                  const std::string& a_dag) {
  adjoint_[a] = a_dag;
  adjoint_[a_dag] = a;
}

const std::string& correlation_set::adjoint(const std::string& label) const {
  auto it = adjoint_.find(label);
  if (it == adjoint_.end())
    throw std::out_of_range("correlation_set: no adjoint registered for '" +
                            label + "'");
  return it->second;
}

bool correlation_set::has_adjoint(const std::string& label) const {
  return adjoint_.count(label) > 0;
}

void correlation_set::add_term(const corr_key& key, const exp_term& term) {
  if (term.gamma < 0.0)
    throw std::invalid_argument("correlation_set: negative decay rate in " +
                                to_string(key));
  auto& e = entries_[key];
  e.key = key;
  e.terms.push_back(term);
}

void correlation_set::add_entry(const corr_key& key,
                                std::vector<exp_term> terms,
                                bool from_closure) {
  if (entries_.count(key))
    throw std::invalid_argument("correlation_set: entry " + to_string(key) +
                                " already present");
  for (const auto& t : terms)
    if (t.gamma < 0.0)
      throw std::invalid_argument("correlation_set: negative decay rate in " +
                                  to_string(key));
  corr_entry e;
  e.key = key;
  e.terms = std::move(terms);
  e.from_closure = from_closure;
  entries_[key] = std::move(e);
}

bool correlation_set::has(const corr_key& key) const {
  return entries_.count(key) > 0;
}

const corr_entry& correlation_set::at(const corr_key& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw std::out_of_range("correlation_set: no entry " + to_string(key));
  return it->second;
}

cplx eval_terms(const std::vector<exp_term>& terms, double t) {
  if (t < 0.0)
    throw std::domain_error("eval_terms: t must be >= 0");
  cplx acc = 0.0;
  for (const auto& s : terms)
    acc += s.w * std::exp(-(iu * s.omega + s.gamma) * t);
  return acc;
}

cplx correlation_set::eval(const corr_key& key, double tau) const {
  if (tau < 0.0)
    throw std::domain_error(
        "correlation_set::eval: separation must be >= 0 (got tau < 0 for " +
        to_string(key) + ")");
  const corr_entry& e = at(key);
  if (key.sign == time_sign::plus) return eval_terms(e.terms, tau);
  cplx acc = 0.0;
  for (const auto& t : e.terms)
    acc += t.w * std::exp((iu * t.omega - t.gamma) * tau);
  return acc;
}

cplx correlation_set::eval_decomposition(const std::string& first,
                                         const std::string& second,
                                         double t) const {
  if (t < 0.0)
    throw std::domain_error(
        "correlation_set::eval_decomposition: t < 0; evaluate the "
        "time-reversed entry at -t instead");
  return eval(corr_key{first, second, time_sign::plus}, t);
}

void correlation_set::time_reverse_close() {
  std::vector<const corr_entry*> plus_entries;
  for (const auto& [key, e] : entries_)
    if (key.sign == time_sign::plus) plus_entries.push_back(&e);

  for (const corr_entry* e : plus_entries) {
    corr_key rev{adjoint(e->key.second), adjoint(e->key.first),
                 time_sign::minus};
    if (has(rev)) continue;
    std::vector<exp_term> terms;
    terms.reserve(e->terms.size());
    for (const auto& t : e->terms)
      terms.push_back({std::conj(t.w), t.omega, t.gamma});
    add_entry(rev, std::move(terms), /*from_closure=*/true);
  }
}

void correlation_set::shift_frame(double omega0) {
  for (auto& [key, e] : entries_)
    for (auto& t : e.terms) t.omega -= omega0;
}

cplx split_weight(cplx w) { return std::sqrt(w); }

double reconstruction_error(const correlation_set& set, const corr_key& key,
                            const std::vector<double>& tau,
                            const std::vector<cplx>& reference) {
  if (tau.size() != reference.size())
    throw std::invalid_argument(
        "reconstruction_error: grid and reference size mismatch");
  double ref_max = 0.0;
  for (const auto& r : reference) ref_max = std::max(ref_max, std::abs(r));
  double dev = 0.0;
  for (size_t k = 0; k < tau.size(); ++k)
    dev = std::max(dev, std::abs(set.eval(key, tau[k]) - reference[k]));
  return ref_max > 0.0 ? dev / ref_max : dev;
}

}  // namespace purimode
