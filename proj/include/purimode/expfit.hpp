#pragma once

#include <string>
#include <vector>

#include "purimode/corr.hpp"

// Fit uniformly sampled complex data with a sum of damped exponentials
//
//   f(t) ~ sum_i w_i exp[-(i omega_i + gamma_i) t],   gamma_i >= 0.
//
// Pole estimates come from a matrix-pencil (ESPRIT) subspace step on the
// Hankel matrix of the data; weights from a Vandermonde least-squares solve;
// both are then polished by variable projection (Levenberg steps on the
// poles with the weights eliminated).  Poles that insist on negative decay
// rates are first reflected to the damped half-plane and refit; if a
// reflected pole still wants to grow it is dropped and the fit is rerun with
// one term fewer.
namespace purimode {

struct fit_options {
  int n_terms = 4;
  double max_rel_residual = 1e-3;  // acceptance threshold for ok flag
  int varpro_max_iter = 60;
};

struct fit_result {
  std::vector<exp_term> terms;  // all gamma >= 0
  double rel_residual = 0.0;    // sup |fit - data| / max |data|
  bool ok = false;
  std::string note;  // reflect/drop events or failure reason
};

// t must be an ascending uniform grid (domain error otherwise)
fit_result fit_exponentials(const std::vector<double>& t,
                            const std::vector<cplx>& f,
                            const fit_options& opt);

}  // namespace purimode
