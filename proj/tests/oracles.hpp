#pragma once

// Brute-force reference computations written directly from the definitions,
// sharing no code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "sdlab/env.hpp"
#include "sdlab/policy.hpp"

namespace oracle {

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += static_cast<long double>(p[i]) * std::log(static_cast<long double>(p[i]) / q[i]);
  return static_cast<double>(s);
}

inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

inline std::vector<double> softmax(const std::vector<double>& z) {
  const double hi = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - hi);
  for (double& x : e) x /= s;
  return e;
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, double floor = 0.0) {
  std::exponential_distribution<double> ex(1.0);
  std::vector<double> p(n);
  for (double& x : p) x = ex(rng) + floor;
  const double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= s;
  return p;
}

// Logits written out from the feature definition: context, one-hot position,
// one-hot previous token.
inline std::vector<double> logits(const sdlab::Matrix& W, const sdlab::Question& q, std::size_t t,
                                  const std::vector<sdlab::Token>& prefix, std::size_t L,
                                  std::size_t V) {
  const std::size_t d = q.context.size();
  std::vector<double> z(V, 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t i = 0; i < d; ++i) z[v] += W(v, i) * q.context[i];
    z[v] += W(v, d + t);
    if (t > 0) z[v] += W(v, d + L + prefix[t - 1]);
  }
  z[q.answer[t]] += q.difficulty_bias;
  return z;
}

// Student top-k (ties to the lower id) plus tail, and the teacher on the same
// outcomes.
inline void truncate_pair(const std::vector<double>& s, const std::vector<double>& te,
                          std::size_t k, std::vector<double>& s_out, std::vector<double>& t_out) {
  std::vector<std::size_t> ids(s.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
  s_out.clear();
  t_out.clear();
  double s_tail = 0.0, t_tail = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < k) {
      s_out.push_back(s[ids[i]]);
      t_out.push_back(te[ids[i]]);
    } else {
      s_tail += s[ids[i]];
      t_tail += te[ids[i]];
    }
  }
  s_out.push_back(s_tail);
  t_out.push_back(t_tail);
}

// Global mean over (question, rollout, position) cells of w_j * D.
inline double distillation_loss(const std::vector<sdlab::RolloutGroup>& groups,
                                const sdlab::Task& task, const sdlab::PolicyParams& p,
                                sdlab::Divergence div, std::size_t top_k,
                                const std::vector<double>& weights) {
  const std::size_t V = task.vocab(), L = task.length();
  const std::size_t k = std::min(top_k, V);
  double total = 0.0;
  std::size_t cells = 0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    const sdlab::Question& q = task.question(groups[j].question_id);
    for (const auto& r : groups[j].rollouts) {
      for (std::size_t t = 0; t < L; ++t) {
        ++cells;
        const auto s = softmax(logits(p.W, q, t, r.tokens, L, V));
        auto u = logits(p.ema_W, q, t, r.tokens, L, V);
        u[q.answer[t]] += p.feedback_gain;
        const auto te = softmax(u);
        std::vector<double> so, to;
        truncate_pair(s, te, k, so, to);
        const double d = div == sdlab::Divergence::Kl ? kl(so, to) : jsd(so, to);
        total += weights[j] * d;
      }
    }
  }
  return total / static_cast<double>(cells);
}

}  // namespace oracle
