#include "fbrl/tabular.hpp"

#include <cmath>
#include <sstream>

#include "fbrl/errors.hpp"

namespace fbrl {

void FiniteMDP::validate() const {
  if (n < 1 || k < 1) throw ConfigError("FiniteMDP: empty state/action space");
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("FiniteMDP: gamma must be in (0, 1)");
  }
  if (transitions.rows() != n * k || transitions.cols() != n) {
    throw ConfigError("FiniteMDP: transition shape mismatch");
  }
  for (Eigen::Index r = 0; r < transitions.rows(); ++r) {
    if (std::abs(transitions.row(r).sum() - 1.0) > 1e-9 ||
        transitions.row(r).minCoeff() < 0.0) {
      throw ConfigError("FiniteMDP: row " + std::to_string(r) +
                        " is not a distribution");
    }
  }
  if (rho.size() != n || rho.minCoeff() <= 0.0 ||
      std::abs(rho.sum() - 1.0) > 1e-9) {
    throw ConfigError("FiniteMDP: rho must be strictly positive and sum to 1");
  }
}

FiniteMDP random_mdp(int n, int k, double gamma, Rng& rng) {
  FiniteMDP mdp;
  mdp.n = n;
  mdp.k = k;
  mdp.gamma = gamma;
  mdp.transitions.resize(n * k, n);
  for (Eigen::Index r = 0; r < mdp.transitions.rows(); ++r) {
    for (int c = 0; c < n; ++c) {
      mdp.transitions(r, c) = rng.uniform() + 0.05;
    }
    mdp.transitions.row(r) /= mdp.transitions.row(r).sum();
  }
  mdp.rho.resize(n);
  for (int s = 0; s < n; ++s) mdp.rho[s] = rng.uniform() + 0.1;
  mdp.rho /= mdp.rho.sum();
  return mdp;
}

TabularPolicy random_policy(int n, int k, Rng& rng) {
  TabularPolicy pi;
  pi.pi.resize(n, k);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < k; ++a) pi.pi(s, a) = rng.uniform() + 0.05;
    pi.pi.row(s) /= pi.pi.row(s).sum();
  }
  return pi;
}

namespace {
Matd policy_kernel(const FiniteMDP& mdp, const TabularPolicy& pi) {
  Matd p_pi = Matd::Zero(mdp.n, mdp.n);
  for (int s = 0; s < mdp.n; ++s) {
    for (int a = 0; a < mdp.k; ++a) {
      p_pi.row(s) += pi.pi(s, a) * mdp.transitions.row(s * mdp.k + a);
    }
  }
  return p_pi;
}
}  // namespace

Matd exact_successor_measure(const FiniteMDP& mdp, const TabularPolicy& pi) {
  const Matd p_pi = policy_kernel(mdp, pi);
  const Matd resolvent =
      (Matd::Identity(mdp.n, mdp.n) - mdp.gamma * p_pi).partialPivLu().solve(
          Matd::Identity(mdp.n, mdp.n));
  return mdp.transitions * resolvent;
}

Vecd exact_q(const Matd& successor, const Vecd& reward) {
  return successor * reward;
}

Vecd direct_policy_eval_q(const FiniteMDP& mdp, const TabularPolicy& pi,
                          const Vecd& reward) {
  const Matd p_pi = policy_kernel(mdp, pi);
  // V = P_pi (r + gamma V)  =>  (I - gamma P_pi) V = P_pi r.
  const Vecd v = (Matd::Identity(mdp.n, mdp.n) - mdp.gamma * p_pi)
                     .partialPivLu()
                     .solve(p_pi * reward);
  return mdp.transitions * (reward + mdp.gamma * v);
}

double expected_fb_loss(const FiniteMDP& mdp,
                        const std::vector<TabularPolicy>& pi_per_z,
                        const std::vector<Matd>& f_per_z, const Matd& b,
                        const std::vector<Matd>* f_target_per_z,
                        const Matd* b_target) {
  const std::size_t num_z = f_per_z.size();
  if (pi_per_z.size() != num_z || num_z == 0) {
    throw ConfigError("expected_fb_loss: need one policy per z");
  }
  const double action_w = 1.0 / mdp.k;  // uniform dataset action distribution
  double total = 0.0;
  for (std::size_t zi = 0; zi < num_z; ++zi) {
    const Matd& f = f_per_z[zi];
    const Matd& ft =
        (f_target_per_z != nullptr) ? (*f_target_per_z)[zi] : f;
    const Matd& bt = (b_target != nullptr) ? *b_target : b;
    const Matd m_online = f * b.transpose();   // ((n*k) x n) model values
    const Matd m_target = ft * bt.transpose();
    const Matd& pi = pi_per_z[zi].pi;
    double sq = 0.0, cross = 0.0;
    for (int s = 0; s < mdp.n; ++s) {
      for (int a = 0; a < mdp.k; ++a) {
        const double w = mdp.rho[s] * action_w;
        const int row = s * mdp.k + a;
        for (int sp = 0; sp < mdp.n; ++sp) {
          const double p_sp = mdp.transitions(row, sp);
          cross += w * p_sp * m_online(row, sp);
          for (int ap = 0; ap < mdp.k; ++ap) {
            const double pw = w * p_sp * pi(sp, ap);
            if (pw == 0.0) continue;
            const int rowp = sp * mdp.k + ap;
            for (int plus = 0; plus < mdp.n; ++plus) {
              const double diff =
                  m_online(row, plus) - mdp.gamma * m_target(rowp, plus);
              sq += pw * mdp.rho[plus] * diff * diff;
            }
          }
        }
      }
    }
    total += sq - 2.0 * cross;
  }
  return total / static_cast<double>(num_z);
}

FbFactorization exact_factorization(const FiniteMDP& mdp,
                                    const Matd& successor, int d) {
  // Densities with respect to rho, then a rho-weighted SVD truncation.
  Matd m_tilde = successor;
  for (int sp = 0; sp < mdp.n; ++sp) m_tilde.col(sp) /= mdp.rho[sp];
  const Vecd half = mdp.rho.cwiseSqrt();
  Matd weighted = m_tilde;
  for (int sp = 0; sp < mdp.n; ++sp) weighted.col(sp) *= half[sp];
  Eigen::JacobiSVD<Matd> svd(weighted,
                             Eigen::ComputeThinU | Eigen::ComputeThinV);
  const int rank = std::min<int>(d, static_cast<int>(svd.singularValues()
                                                          .size()));
  FbFactorization out;
  out.f = Matd::Zero(mdp.n * mdp.k, d);
  out.b = Matd::Zero(mdp.n, d);
  out.f.leftCols(rank) =
      svd.matrixU().leftCols(rank) *
      svd.singularValues().head(rank).asDiagonal();
  Matd v = svd.matrixV().leftCols(rank);
  for (int sp = 0; sp < mdp.n; ++sp) {
    out.b.row(sp).head(rank) = v.row(sp) / half[sp];
  }
  return out;
}

QIdentityReport verify_q_identity(const FiniteMDP& mdp,
                                  const TabularPolicy& pi, int d, int trials,
                                  Rng& rng) {
  const Matd m = exact_successor_measure(mdp, pi);
  const FbFactorization fac = exact_factorization(mdp, m, d);
  QIdentityReport report;
  report.d = d;
  report.trials = trials;
  for (int t = 0; t < trials; ++t) {
    Vecd r(mdp.n);
    for (int s = 0; s < mdp.n; ++s) r[s] = rng.gaussian();
    const Vecd q_exact = exact_q(m, r);
    // z_r = sum_s rho(s) B(s) r(s)
    Vecd z = Vecd::Zero(d);
    for (int s = 0; s < mdp.n; ++s) z += mdp.rho[s] * r[s] * fac.b.row(s)
                                             .transpose();
    const Vecd q_fb = fac.f * z;
    report.max_abs_err =
        std::max(report.max_abs_err, (q_exact - q_fb).cwiseAbs().maxCoeff());
  }
  report.exact = report.max_abs_err < 1e-8;
  return report;
}

OracleSuiteResult run_oracle_suite(int max_states, int trials,
                                   std::uint64_t seed, bool inject_fault) {
  Rng rng(seed);
  std::ostringstream out;
  bool pass = true;
  auto check = [&](const std::string& name, bool ok, double value) {
    out << (ok ? "  ok   " : "  FAIL ") << name << " (" << value << ")\n";
    pass = pass && ok;
  };

  // Row mass and Q-recovery across random MDPs.
  double worst_mass = 0.0, worst_q = 0.0;
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + static_cast<int>(rng.bounded(
                          static_cast<std::uint64_t>(max_states - 1)));
    const int k = 1 + static_cast<int>(rng.bounded(3));
    const double gamma = 0.3 + 0.6 * rng.uniform();
    FiniteMDP mdp = random_mdp(n, k, gamma, rng);
    TabularPolicy pi = random_policy(n, k, rng);
    Matd m = exact_successor_measure(mdp, pi);
    if (inject_fault) m.array() += 1e-6;
    const double expected_mass = 1.0 / (1.0 - gamma);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      worst_mass =
          std::max(worst_mass, std::abs(m.row(r).sum() - expected_mass));
    }
    Vecd reward(n);
    for (int s = 0; s < n; ++s) reward[s] = rng.gaussian();
    const Vecd q1 = exact_q(m, reward);
    const Vecd q2 = direct_policy_eval_q(mdp, pi, reward);
    worst_q = std::max(worst_q, (q1 - q2).cwiseAbs().maxCoeff());
  }
  check("row mass equals 1/(1-gamma) within 1e-12", worst_mass < 1e-12,
        worst_mass);
  check("Q-recovery matches direct policy evaluation within 1e-10",
        worst_q < 1e-10, worst_q);

  // Factorization optimality: exact factorization beats random F
  // perturbations with targets pinned at the base point.
  {
    FiniteMDP mdp = random_mdp(3, 2, 0.9, rng);
    TabularPolicy pi = random_policy(3, 2, rng);
    const Matd m = exact_successor_measure(mdp, pi);
    const FbFactorization fac = exact_factorization(mdp, m, 3);
    std::vector<TabularPolicy> pis{pi};
    std::vector<Matd> f_base{fac.f};
    const double base =
        expected_fb_loss(mdp, pis, f_base, fac.b, &f_base, &fac.b);
    int worse = 0;
    const int perturbations = 100;
    for (int t = 0; t < perturbations; ++t) {
      Matd fp = fac.f;
      for (Eigen::Index i = 0; i < fp.size(); ++i) {
        fp.data()[i] += 0.1 * rng.gaussian();
      }
      std::vector<Matd> f_pert{fp};
      const double lp =
          expected_fb_loss(mdp, pis, f_pert, fac.b, &f_base, &fac.b);
      if (lp > base) ++worse;
    }
    check("exact factorization below all 100 F-perturbations",
          worse == perturbations, static_cast<double>(worse));
  }

  // Q identity at full rank and the rank-1 negative control.
  {
    FiniteMDP mdp = random_mdp(3, 2, 0.9, rng);
    TabularPolicy pi = random_policy(3, 2, rng);
    const QIdentityReport full = verify_q_identity(mdp, pi, 3, 20, rng);
    check("full-rank Q identity within 1e-10", full.max_abs_err < 1e-10,
          full.max_abs_err);
    const QIdentityReport low = verify_q_identity(mdp, pi, 1, 20, rng);
    check("rank-1 factorization shows approximation error", !low.exact,
          low.max_abs_err);
  }

  OracleSuiteResult result;
  result.pass = pass;
  std::ostringstream head;
  head << "tabular oracle suite (max_states=" << max_states
       << ", trials=" << trials << ", seed=" << seed << ")\n"
       << out.str() << (pass ? "PASS" : "FAIL") << "\n";
  result.report = head.str();
  return result;
}

}  // namespace fbrl
