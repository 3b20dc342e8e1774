// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/cli/checks.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>

#include "nfrl/algos/critic.hpp"
#include "nfrl/algos/updates.hpp"
#include "nfrl/cli/toy.hpp"
#include "nfrl/errors.hpp"
#include "nfrl/flow/flow.hpp"
#include "nfrl/objectives/objectives.hpp"

namespace nfrl {
namespace {

constexpr double kStep = 1e-5;

FlowModel perturbed_flow(FlowSpec spec, std::uint64_t seed, double scale) {
  spec.seed = seed;
  FlowModel m(spec);
  Rng rng(seed * 31 + 7);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : m.params().values()) v += n(rng);
  return m;
}

FlowSpec small_spec(int dim, int cond_dim) {
  FlowSpec s;
  s.dim = dim;
  s.cond_dim = cond_dim;
  s.rep_dim = 4;
  s.blocks = 3;
  s.channels = 8;
  s.coupling_layers = 1;
  s.encoder_layers = 1;
  s.encoder_width = 8;
  return s;
}

CondBatch random_ctx(const FlowModel& m, Eigen::Index rows, Rng& rng) {
  return m.conditional() ? CondBatch::from(randn(rows, m.cond_dim(), rng)) : CondBatch::none(rows);
}

Mat forward_value(const FlowModel& m, const Mat& x, const CondBatch& ctx, Vec* log_det) {
  Tape t;
  t.freeze(m.params());
  Var ld;
  Var z = m.forward(t, t.constant(x), m.encode(t, ctx), &ld);
  if (log_det) *log_det = t.value(ld).col(0);
  return t.value(z);
}

Mat inverse_value(const FlowModel& m, const Mat& z, const CondBatch& ctx) {
  Tape t;
  t.freeze(m.params());
  return t.value(m.inverse(t, t.constant(z), m.encode(t, ctx), nullptr));
}

CheckResult upper(const std::string& suite, const std::string& name, double measured, double thr) {
  return {suite, name, measured, thr, true, measured < thr};
}

std::vector<CheckResult> check_jacobian(bool quick) {
  const int models = quick ? 20 : 200;
  double worst = 0.0;
  for (int i = 0; i < models; ++i) {
    const int d = 2 + i % 5;
    const FlowModel m = perturbed_flow(small_spec(d, i % 2 ? 3 : 0), 100 + i, 0.3);
    Rng rng(500 + i);
    const Mat x = randn(1, d, rng);
    const CondBatch ctx = random_ctx(m, 1, rng);
    Vec ld;
    forward_value(m, x, ctx, &ld);
    Mat jac(d, d);
    for (int c = 0; c < d; ++c) {
      Mat up = x, down = x;
      up(0, c) += kStep;
      down(0, c) -= kStep;
      jac.col(c) = (forward_value(m, up, ctx, nullptr) - forward_value(m, down, ctx, nullptr))
                       .row(0)
                       .transpose() /
                   (2.0 * kStep);
    }
    const double fd = std::log(std::abs(jac.determinant()));
    worst = std::max(worst, std::abs(fd - ld(0)));
  }
  return {upper("jacobian", "log-det vs finite-difference det, d=2..6", worst, 1e-5)};
}

std::vector<CheckResult> check_invertibility(bool quick) {
  const int models = quick ? 100 : 1000;
  double worst_x = 0.0, worst_z = 0.0;
  for (int i = 0; i < models; ++i) {
    const int d = 2 + i % 5;
    const FlowModel m = perturbed_flow(small_spec(d, i % 2 ? 3 : 0), 2000 + i, 0.3);
    Rng rng(7000 + i);
    const Mat x = randn(8, d, rng);
    const CondBatch ctx = random_ctx(m, 8, rng);
    const Mat z = forward_value(m, x, ctx, nullptr);
    worst_x = std::max(worst_x, (inverse_value(m, z, ctx) - x).cwiseAbs().maxCoeff());
    const Mat z2 = randn(8, d, rng);
    worst_z = std::max(worst_z, (forward_value(m, inverse_value(m, z2, ctx), ctx, nullptr) - z2).cwiseAbs().maxCoeff());
  }
  return {upper("invertibility", "max |f^-1(f(x)) - x|", worst_x, 1e-9),
          upper("invertibility", "max |f(f^-1(z)) - z|", worst_z, 1e-9)};
}

template <typename F>
double grad_error(ParamStore& store, F&& loss) {
  Tape t;
  t.backward(loss(t));
  const std::vector<double> g = t.param_grad(store);
  double worst = 0.0;
  auto& v = store.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double keep = v[i];
    v[i] = keep + kStep;
    Tape tu;
    tu.freeze(store);
    const double up = tu.scalar_value(loss(tu));
    v[i] = keep - kStep;
    Tape td;
    td.freeze(store);
    const double down = td.scalar_value(loss(td));
    v[i] = keep;
    const double fd = (up - down) / (2.0 * kStep);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
  }
  return worst;
}

std::vector<CheckResult> check_gradients(bool) {
  std::vector<CheckResult> out;
  const double tol = 1e-4;
  FlowSpec tiny = small_spec(2, 0);
  tiny.blocks = 2;
  tiny.channels = 4;
  FlowSpec tiny_c = tiny;
  tiny_c.cond_dim = 2;
  Rng data(42);
  {
    FlowModel m = perturbed_flow(tiny, 1, 0.3);
    const MleBatch b{randn(6, 2, data), CondBatch::none(6), 0.1};
    const Rng start(1);
    out.push_back(upper("gradients", "maximum likelihood loss", grad_error(m.params(), [&](Tape& t) {
                          Rng r = start;
                          return mle_loss(m, b, t, r);
                        }), tol));
  }
  {
    FlowModel m = perturbed_flow(tiny, 2, 0.3);
    const ViTarget target = toy_vi_target("ring");
    const Rng start(2);
    out.push_back(upper("gradients", "reverse-KL loss", grad_error(m.params(), [&](Tape& t) {
                          Rng r = start;
                          return vi_loss(m, target, 6, t, r);
                        }), tol));
  }
  CriticConfig cc;
  cc.state_dim = 2;
  cc.action_dim = 2;
  cc.hidden = {4};
  {
    Critic q(cc, 3);
    for (auto& v : q.online().values()) v += 0.2 * randn(1, 1, data)(0, 0);
    TdBatch b{randn(6, 2, data), randn(6, 2, data), randn(6, 1, data), randn(6, 2, data), Mat::Zero(6, 1)};
    b.done(1, 0) = 1.0;
    const Mat a2 = randn(6, 2, data);
    out.push_back(upper("gradients", "twin TD loss", grad_error(q.online(), [&](Tape& t) {
                          return critic_loss(q, b, a2, 0.9, t);
                        }), tol));
  }
  {
    FlowModel pi = perturbed_flow(tiny_c, 4, 0.3);
    Critic q(cc, 5);
    const Mat s = randn(5, 2, data), a = randn(5, 2, data);
    const Rng start(5);
    out.push_back(upper("gradients", "actor loss, Q and likelihood terms", grad_error(pi.params(), [&](Tape& t) {
                          Rng r = start;
                          return actor_loss(pi, critic_q(q), s, a, {0.3, 0.7, 0.1}, t, r).loss;
                        }), tol));
  }
  {
    FlowSpec js = tiny;
    js.cond_dim = 3;
    UgsState ugs{perturbed_flow(js, 6, 0.3), UgsConfig{}};
    ugs.cfg.mask_prob = 0.5;
    const Mat s = randn(6, 2, data), a = randn(6, 1, data), g = randn(6, 2, data);
    const Rng start(6);
    out.push_back(upper("gradients", "occupancy likelihood with masking", grad_error(ugs.joint.params(), [&](Tape& t) {
                          Rng r = start;
                          return gcrl_q_loss(ugs, s, a, g, t, r);
                        }), tol));
  }
  {
    FlowSpec as = tiny;
    as.cond_dim = 4;
    FlowModel pi = perturbed_flow(as, 7, 0.3);
    FlowSpec js = tiny;
    js.cond_dim = 4;
    const FlowModel joint = perturbed_flow(js, 8, 0.3);
    const Mat s = randn(5, 2, data), g = randn(5, 2, data);
    const Rng start(8);
    out.push_back(upper("gradients", "goal-reaching actor loss", grad_error(pi.params(), [&](Tape& t) {
                          Rng r = start;
                          return gcrl_actor_loss(pi, joint, s, g, t, r);
                        }), tol));
  }
  return out;
}

std::vector<CheckResult> check_quadrature(bool quick) {
  const int n = 400;
  const double half = 6.0, h = 2.0 * half / n;
  std::vector<CheckResult> out;
  const int models = quick ? 2 : 6;
  for (int i = 0; i < models; ++i) {
    FlowSpec spec = small_spec(2, i % 2 ? 2 : 0);
    spec.blocks = 4;
    spec.channels = 16;
    const FlowModel m = perturbed_flow(spec, 300 + i, 0.1);
    Rng rng(900 + i);
    const Vec c = randn(2, 1, rng).col(0);
    Mat pts(n, 2);
    double mass = 0.0;
    for (int r = 0; r < n; ++r) {
      for (int k = 0; k < n; ++k) {
        pts(k, 0) = -half + (r + 0.5) * h;
        pts(k, 1) = -half + (k + 0.5) * h;
      }
      const CondBatch ctx = m.conditional() ? CondBatch::repeat({c, false}, n) : CondBatch::none(n);
      mass += m.log_prob(pts, ctx).array().exp().sum() * h * h;
    }
    CheckResult res{"quadrature", "grid mass of model " + std::to_string(i), mass, 0.02, true,
                    std::abs(mass - 1.0) < 0.02};
    res.measured = std::abs(mass - 1.0);
    out.push_back(res);
  }
  return out;
}

// Five-state chain: action 1 moves right, 0 moves left, reward 1 on entering
// the last state.
struct Chain {
  int n = 5;
  double p_right = 1.0;

  int next(int s, int a) const { return a == 1 ? std::min(s + 1, n - 1) : std::max(s - 1, 0); }
  double reward(int s, int a) const { return next(s, a) == n - 1 ? 1.0 : 0.0; }
  Mat states(const std::vector<int>& s) const {
    Mat m = Mat::Zero(static_cast<Eigen::Index>(s.size()), n);
    for (std::size_t i = 0; i < s.size(); ++i) m(static_cast<Eigen::Index>(i), s[i]) = 1.0;
    return m;
  }
  static Mat actions(const std::vector<int>& a) {
    Mat m = Mat::Zero(static_cast<Eigen::Index>(a.size()), 2);
    for (std::size_t i = 0; i < a.size(); ++i) m(static_cast<Eigen::Index>(i), a[i]) = 1.0;
    return m;
  }
  Mat transition() const {
    Mat p = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      p(i, next(i, 1)) += p_right;
      p(i, next(i, 0)) += 1.0 - p_right;
    }
    return p;
  }
};

std::vector<CheckResult> check_tabular(bool) {
  Chain chain;
  const double gamma = 0.8;
  std::vector<int> ss, aa, nn;
  std::vector<double> rr;
  for (int s = 0; s < chain.n; ++s) {
    for (int a = 0; a < 2; ++a) {
      ss.push_back(s);
      aa.push_back(a);
      nn.push_back(chain.next(s, a));
      rr.push_back(chain.reward(s, a));
    }
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(ss.size());
  const TdBatch b{chain.states(ss), Chain::actions(aa), Eigen::Map<Vec>(rr.data(), rows),
                  chain.states(nn), Mat::Zero(rows, 1)};
  // Bellman system for the always-right policy: V = r_right + gamma P V.
  Vec r_right(chain.n);
  for (int s = 0; s < chain.n; ++s) r_right(s) = chain.reward(s, 1);
  const Mat i_gp = Mat::Identity(chain.n, chain.n) - gamma * chain.transition();
  const Vec v = i_gp.fullPivLu().solve(r_right);
  CriticConfig cc;
  cc.state_dim = chain.n;
  cc.action_dim = 2;
  cc.hidden = {64, 64};
  cc.tau = 0.05;
  Critic q(cc, 9);
  Adam opt(q.online().size(), AdamConfig{1e-3});
  Rng rng(10);
  const ActionSampler right = [](const Mat& s, Rng&) {
    Mat a = Mat::Zero(s.rows(), 2);
    a.col(1).setOnes();
    return a;
  };
  for (int i = 0; i < 4000; ++i) {
    if (i == 2500) opt.config().lr = 2e-4;
    critic_update(q, opt, b, right, gamma, rng);
  }
  const Vec got = q.values(b.s, b.a, false);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double want = rr[static_cast<std::size_t>(i)] + gamma * v(nn[static_cast<std::size_t>(i)]);
    worst = std::max(worst, std::abs(got(i) - want));
  }
  return {upper("tabular", "critic vs Bellman solution, 5-state chain", worst, 0.01)};
}

std::vector<CheckResult> check_occupancy(bool quick) {
  Chain chain;
  chain.p_right = 0.7;
  const double gamma = 0.9;
  const double spacing = 0.5;
  FlowSpec spec;
  spec.dim = 2;
  spec.cond_dim = chain.n + 2;
  spec.rep_dim = 16;
  spec.blocks = 4;
  spec.channels = 64;
  spec.encoder_layers = 2;
  spec.encoder_width = 64;
  spec.seed = 11;
  UgsState ugs{FlowModel(spec), UgsConfig{}};
  ugs.cfg.mask_prob = 0.0;
  ugs.cfg.goal_noise_std = 0.08;
  Adam opt(ugs.joint.params().size(), AdamConfig{1e-3});
  Rng rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> pick_s(0, chain.n - 1);
  const int steps = quick ? 5000 : 8000;
  const int batch = 256;
  const Mat p = chain.transition();
  for (int it = 0; it < steps; ++it) {
    if (it == steps * 4 / 5) opt.config().lr = 2e-4;
    std::vector<int> ss(batch), aa(batch);
    Mat g(batch, 2);
    for (int i = 0; i < batch; ++i) {
      ss[i] = pick_s(rng);
      aa[i] = u(rng) < chain.p_right ? 1 : 0;
      int s = chain.next(ss[i], aa[i]);
      while (u(rng) >= 1.0 - gamma) s = u(rng) < chain.p_right ? chain.next(s, 1) : chain.next(s, 0);
      g(i, 0) = spacing * s;
      g(i, 1) = 0.0;
    }
    gcrl_q_update(ugs, opt, chain.states(ss), Chain::actions(aa), g, rng);
  }
  const int nx = 150, ny = 60;
  const double x0 = -spacing / 2, x1 = spacing * (chain.n - 0.5), y0 = -0.4, y1 = 0.4;
  const double hx = (x1 - x0) / nx, hy = (y1 - y0) / ny;
  Mat pts(nx * ny, 2);
  for (int i = 0; i < nx; ++i) {
    for (int k = 0; k < ny; ++k) {
      pts(i * ny + k, 0) = x0 + (i + 0.5) * hx;
      pts(i * ny + k, 1) = y0 + (k + 0.5) * hy;
    }
  }
  double worst = 0.0;
  for (int s = 0; s < chain.n; ++s) {
    for (int a = 0; a < 2; ++a) {
      ConditionContext c;
      c.raw = Vec::Zero(chain.n + 2);
      c.raw(s) = 1.0;
      c.raw(chain.n + a) = 1.0;
      const Vec dens = ugs.joint.log_prob(pts, CondBatch::repeat(c, pts.rows())).array().exp();
      Vec mass = Vec::Zero(chain.n);
      for (Eigen::Index r = 0; r < pts.rows(); ++r) {
        const int bin = std::clamp(static_cast<int>((pts(r, 0) - x0) / spacing), 0, chain.n - 1);
        mass(bin) += dens(r) * hx * hy;
      }
      mass /= mass.sum();
      RowVec start = RowVec::Zero(chain.n);
      start(chain.next(s, a)) = 1.0;
      const Mat m = Mat::Identity(chain.n, chain.n) - gamma * p;
      const Vec exact = (1.0 - gamma) * m.transpose().fullPivLu().solve(start.transpose());
      worst = std::max(worst, 0.5 * (mass - exact).cwiseAbs().sum());
    }
  }
  return {upper("occupancy", "flow occupancy vs exact, max TV over (s, a)", worst, 0.05)};
}

using SuiteFn = std::vector<CheckResult> (*)(bool);

SuiteFn suite_fn(const std::string& name) {
  if (name == "jacobian") return check_jacobian;
  if (name == "invertibility") return check_invertibility;
  if (name == "gradients") return check_gradients;
  if (name == "quadrature") return check_quadrature;
  if (name == "tabular") return check_tabular;
  if (name == "occupancy") return check_occupancy;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& check_suites() {
  static const std::vector<std::string> names{"jacobian", "invertibility", "gradients",
                                              "quadrature", "tabular", "occupancy"};
  return names;
}

std::vector<CheckResult> run_checks(const std::string& suite, bool quick, std::ostream* progress) {
  std::vector<std::string> names;
  if (suite == "all") {
    names = check_suites();
  } else if (suite_fn(suite)) {
    names = {suite};
  } else {
    throw ConfigError("unknown check suite '" + suite + "'");
  }
  std::vector<CheckResult> out;
  for (const auto& n : names) {
    if (progress) *progress << "running " << n << "...\n" << std::flush;
    for (auto& r : suite_fn(n)(quick)) out.push_back(std::move(r));
  }
  return out;
}

void print_check_table(std::ostream& os, const std::vector<CheckResult>& results) {
  for (const auto& r : results) {
    os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(14) << r.suite << std::setw(48)
       << r.name << " measured=" << std::setprecision(4) << std::scientific << r.measured
       << (r.upper ? " < " : " >= ") << r.threshold << std::defaultfloat << '\n';
  }
}

}  // namespace nfrl
