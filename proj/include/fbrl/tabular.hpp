#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fbrl/nn.hpp"
#include "fbrl/rng.hpp"

namespace fbrl {

// Exact finite-MDP machinery validating the successor-measure mathematics.
// Everything here is 64-bit dense linear algebra on small state spaces.
struct FiniteMDP {
  int n = 0;  // states
  int k = 0;  // actions
  Matd transitions;  // ((n*k) x n), row s*k + a, each row sums to 1
  double gamma = 0.9;
  Vecd rho;  // strictly positive data distribution over states

  void validate() const;  // throws ConfigError on invariant violations
};

struct TabularPolicy {
  Matd pi;  // (n x k), rows sum to 1
};

FiniteMDP random_mdp(int n, int k, double gamma, Rng& rng);
TabularPolicy random_policy(int n, int k, Rng& rng);

// M = P (I - gamma P_pi)^{-1} over next states: M[(s,a), s'] accumulates
// sum_t gamma^t P(s_{t+1} = s' | s, a, pi). Rows sum to 1/(1-gamma).
Matd exact_successor_measure(const FiniteMDP& mdp, const TabularPolicy& pi);

// Q = M r for a state-indexed reward.
Vecd exact_q(const Matd& successor, const Vecd& reward);

// Independent route: Q(s,a) = sum_s' P(s'|s,a) (r(s') + gamma V(s')) with
// V solved from the policy-evaluation linear system.
Vecd direct_policy_eval_q(const FiniteMDP& mdp, const TabularPolicy& pi,
                          const Vecd& reward);

// Exact (non-sampled) value of the contrastive TD loss on the finite MDP:
// z drawn uniformly from the finite z set, (s, a) ~ rho x uniform actions,
// s' ~ P, a' ~ pi_z(s'), s+ ~ rho. F[z] is ((n*k) x d), B is (n x d).
// Target tables default to the online tables; the perturbation oracle holds
// them at the base point while the online table moves.
double expected_fb_loss(const FiniteMDP& mdp,
                        const std::vector<TabularPolicy>& pi_per_z,
                        const std::vector<Matd>& f_per_z, const Matd& b,
                        const std::vector<Matd>* f_target_per_z = nullptr,
                        const Matd* b_target = nullptr);

// Rank-d factorization of M/rho in the rho-weighted norm with
// E_rho[B B^T] = I_d, so z_r = sum_s rho(s) B(s) r(s) makes F^T z_r the
// best rank-d approximation of Q.
struct FbFactorization {
  Matd f;  // ((n*k) x d)
  Matd b;  // (n x d)
};
FbFactorization exact_factorization(const FiniteMDP& mdp, const Matd& successor,
                                    int d);

struct QIdentityReport {
  int d = 0;
  int trials = 0;
  double max_abs_err = 0.0;
  bool exact = false;  // max_abs_err below 1e-8
};

// Checks Q_r(s,a) == F(s,a)^T z_r for random rewards at the rank-d
// factorization. Exact when d == n; a strictly positive error is expected
// for d < n.
QIdentityReport verify_q_identity(const FiniteMDP& mdp,
                                  const TabularPolicy& pi, int d, int trials,
                                  Rng& rng);

struct OracleSuiteResult {
  bool pass = false;
  std::string report;
};

// Runs every tabular invariant: row mass 1/(1-gamma), Q-recovery against
// direct policy evaluation, factorization optimality under random F
// perturbations with fixed targets, and the full-rank / rank-1 identity
// checks. `inject_fault` perturbs the successor measure before checking
// (negative-control hook).
OracleSuiteResult run_oracle_suite(int max_states, int trials,
                                   std::uint64_t seed, bool inject_fault);

}  // namespace fbrl
