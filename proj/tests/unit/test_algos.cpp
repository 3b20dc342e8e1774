// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nfrl/algos/policy.hpp"
#include "nfrl/algos/updates.hpp"
#include "nfrl/errors.hpp"
#include "support/chain.hpp"
#include "support/flow_helpers.hpp"
#include "support/oracles.hpp"

using namespace nfrl;
using namespace nfrl::testing;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

FlowSpec flow_spec(int d, int cond_dim, int blocks = 2, int channels = 4, int rep = 2,
                   int enc_width = 3) {
  FlowSpec s;
  s.dim = d;
  s.cond_dim = cond_dim;
  s.rep_dim = rep;
  s.blocks = blocks;
  s.channels = channels;
  s.coupling_layers = 1;
  s.encoder_layers = 1;
  s.encoder_width = enc_width;
  return s;
}

FlowSpec train_spec(int d, int cond_dim) {
  FlowSpec s;
  s.dim = d;
  s.cond_dim = cond_dim;
  s.rep_dim = 16;
  s.blocks = 4;
  s.channels = 32;
  s.coupling_layers = 2;
  s.encoder_layers = 2;
  s.encoder_width = 32;
  return s;
}

CriticConfig tiny_critic(int sdim, int adim) {
  CriticConfig c;
  c.state_dim = sdim;
  c.action_dim = adim;
  c.hidden = {4};
  c.tau = 0.25;
  return c;
}

// Sets every head's output layer to zero so Q is identically 0.
void zero_critic_output(Critic& c) {
  for (int h = 0; h < c.heads(); ++h) {
    const std::string pre = "q" + std::to_string(h + 1);
    const int last = static_cast<int>(c.config().hidden.size());
    for (const char* part : {".w", ".b"}) {
      auto v = c.online().view(pre + ".l" + std::to_string(last) + part);
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
  c.sync_target();
}

Trajectory points_traj(const std::vector<Vec2>& pts) {
  Trajectory t;
  const auto n = static_cast<Eigen::Index>(pts.size());
  t.states = Mat::Zero(n, kStateDim);
  for (Eigen::Index i = 0; i < n; ++i) t.states.row(i).head<2>() = pts[static_cast<std::size_t>(i)].transpose();
  t.actions = Mat::Zero(n - 1, kActionDim);
  t.rewards = Vec::Zero(n - 1);
  return t;
}

double mean_abs(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------- BC / GCBC

TEST_CASE("bc update before any step reports the prior NLL") {
  FlowModel pi(flow_spec(2, 3));
  Adam opt(pi.params().size(), {});
  Rng data(1);
  const Mat s = randn(16, 3, data), a = randn(16, 2, data);
  Rng r1(5), r2(5);
  const double nll = bc_update(pi, opt, s, a, 0.1, r1);
  const Mat noisy = a + 0.1 * randn(16, 2, r2);
  const double expect = kLog2Pi + 0.5 * noisy.rowwise().squaredNorm().mean();
  CHECK(nll == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bc recovers a deterministic linear expert") {
  Mat k(2, 2);
  k << 0.8, -0.3, 0.2, 0.5;
  FlowModel pi(train_spec(2, 2));
  Adam opt(pi.params().size(), AdamConfig{3e-3});
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto draw_states = [&](int n) {
    Mat s(n, 2);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = u(rng);
    return s;
  };
  for (int i = 0; i < 1500; ++i) {
    const Mat s = draw_states(128);
    bc_update(pi, opt, s, s * k.transpose(), 0.1, rng);
  }
  const Mat held = draw_states(40);
  double err = 0.0;
  for (Eigen::Index i = 0; i < held.rows(); ++i) {
    const CondBatch ctx = CondBatch::repeat(ConditionContext{held.row(i).transpose(), false}, 400);
    const RowVec mean = pi.sample(ctx, rng).colwise().mean();
    err += (mean - held.row(i) * k.transpose()).norm();
  }
  CHECK(err / held.rows() < 0.05);
}

TEST_CASE("gcbc ignores goals that carry no information about the action") {
  // States and actions are drawn independently, so future states say nothing
  // about the current action.
  Rng rng(3);
  ReplayBuffer buf(200);
  std::normal_distribution<double> act(0.3, 0.4);
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  for (int e = 0; e < 200; ++e) {
    Trajectory t;
    t.states = Mat::Zero(31, kStateDim);
    for (Eigen::Index i = 0; i < t.states.rows(); ++i) t.states.row(i).head<2>() << pos(rng), pos(rng);
    t.actions.resize(30, kActionDim);
    for (Eigen::Index i = 0; i < t.actions.size(); ++i) t.actions.data()[i] = act(rng);
    t.rewards = Vec::Zero(30);
    buf.add(std::move(t));
  }
  FlowModel cond(train_spec(2, kStateDim + kGoalDim)), plain(train_spec(2, kStateDim));
  Adam oc(cond.params().size(), AdamConfig{3e-3}), op(plain.params().size(), AdamConfig{3e-3});
  for (int i = 0; i < 600; ++i) {
    gcbc_update(cond, oc, buf, 128, 0.97, 0.1, rng);
    bc_update(plain, op, buf, 128, 0.1, rng);
  }
  const TransitionBatch held = buf.sample_batch(4000, rng, 0.97);
  const double nll_c = -cond.log_prob(held.a, CondBatch::from(hcat(held.s, held.g))).mean();
  const double nll_p = -plain.log_prob(held.a, CondBatch::from(held.s)).mean();
  CHECK(std::abs(nll_c - nll_p) < 0.05);
  CHECK_THROWS_AS(gcbc_update(cond, oc, buf, 8, 1.0, 0.1, rng), ConfigError);
}

TEST_CASE("gcbc on two-door data separates the route families by goal") {
  ExpertDataConfig dc;
  dc.n_traj = 200;
  dc.mode_mix = {0.5, 0.5};
  const Dataset ds = generate_expert_dataset(EnvConfig::for_maze(MazeId::two_rooms), dc, 4);
  ReplayBuffer buf(ds.trajectories.size());
  for (const auto& t : ds.trajectories) buf.add(t);
  FlowModel pi(train_spec(2, kStateDim + kGoalDim));
  Adam opt(pi.params().size(), AdamConfig{3e-3});
  Rng rng(5);
  for (int i = 0; i < 1500; ++i) gcbc_update(pi, opt, buf, 128, 0.97, 0.1, rng);

  // Conditioned on a goal inside the lower door, first actions point down.
  const Vec2 lower_goal(0.5, 0.2);
  int down = 0;
  for (int i = 0; i < 1000; ++i) {
    Vec4 s;
    s << maze_info(MazeId::two_rooms).start, 0.0, 0.0;
    const Vec2 a = flow_policy(pi, rng, lower_goal)(s, 0);
    down += a(1) < 0.0;
  }
  CHECK(down >= 900);
}

// ---------------------------------------------------------------- critic

TEST_CASE("critic on a bandit with gamma 0 learns Q = 1") {
  CriticConfig cc;
  cc.state_dim = 3;
  cc.action_dim = 2;
  cc.hidden = {32, 32};
  Critic q(cc, 7);
  Adam opt(q.online().size(), AdamConfig{1e-3});
  Rng rng(8);
  ActionSampler any = [](const Mat& s, Rng& r) { return randn(s.rows(), 2, r); };
  // A fixed pool of sampled (s, a) pairs; Q is checked on every one of them.
  const Mat pool_s = randn(256, 3, rng), pool_a = randn(256, 2, rng);
  opt.config().lr = 3e-3;
  for (int i = 0; i < 3000; ++i) {
    if (i == 2500) opt.config().lr = 1e-3;
    critic_update(q, opt, TdBatch{pool_s, pool_a, Mat::Ones(256, 1), randn(256, 3, rng), Mat::Zero(256, 1)},
                  any, 0.0, rng);
  }
  const Vec v = q.values(pool_s, pool_a, false);
  CHECK((v.array() - 1.0).abs().maxCoeff() < 0.01);
}

TEST_CASE("critic on a deterministic 3-state chain matches dynamic programming") {
  Chain chain;
  chain.n = 3;
  chain.p_right = 1.0;
  const double gamma = 0.8;
  CriticConfig cc;
  cc.state_dim = 3;
  cc.action_dim = 2;
  cc.hidden = {64, 64};
  cc.tau = 0.05;
  Critic q(cc, 9);
  Adam opt(q.online().size(), AdamConfig{1e-3});
  Rng rng(10);
  ActionSampler right = [](const Mat& s, Rng&) { return Chain::onehot_actions(std::vector<int>(static_cast<std::size_t>(s.rows()), 1)); };
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
  TdBatch b{chain.onehot_states(ss), Chain::onehot_actions(aa),
            Eigen::Map<Vec>(rr.data(), static_cast<Eigen::Index>(rr.size())),
            chain.onehot_states(nn), Mat::Zero(static_cast<Eigen::Index>(ss.size()), 1)};
  for (int i = 0; i < 3000; ++i) {
    if (i == 2000) opt.config().lr = 2e-4;
    critic_update(q, opt, b, right, gamma, rng);
  }
  const Mat dp = chain.q_dp(gamma);
  const Vec got = q.values(b.s, b.a, false);
  double worst = 0.0;
  for (std::size_t i = 0; i < ss.size(); ++i) {
    worst = std::max(worst, std::abs(got(static_cast<Eigen::Index>(i)) - dp(ss[i], aa[i])));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("target network follows the polyak identity") {
  Critic q(tiny_critic(2, 2), 11);
  Adam opt(q.online().size(), AdamConfig{1e-2});
  Rng rng(12);
  const auto old_target = q.target().values();
  TdBatch b{randn(8, 2, rng), randn(8, 2, rng), randn(8, 1, rng), randn(8, 2, rng), Mat::Zero(8, 1)};
  critic_update(q, opt, b, [](const Mat& s, Rng& r) { return randn(s.rows(), 2, r); }, 0.9, rng);
  const auto& online = q.online().values();
  const auto& target = q.target().values();
  for (std::size_t i = 0; i < target.size(); ++i) {
    REQUIRE(target[i] == 0.75 * old_target[i] + 0.25 * online[i]);
  }
}

TEST_CASE("swapping the twin heads leaves the backup unchanged") {
  Critic q(tiny_critic(2, 2), 13);
  Rng rng(14);
  for (auto& v : q.target().values()) v += 0.3 * randn(1, 1, rng)(0, 0);
  const Mat s = randn(20, 2, rng), a = randn(20, 2, rng);
  const Vec before = q.values(s, a, true);
  auto q1 = q.target().view("q1.l0.w");
  auto q2 = q.target().view("q2.l0.w");
  std::swap_ranges(q1.begin(), q1.end(), q2.begin());
  for (const char* name : {"l0.b", "ln0.g", "ln0.b", "l1.w", "l1.b"}) {
    auto x = q.target().view(std::string("q1.") + name);
    auto y = q.target().view(std::string("q2.") + name);
    std::swap_ranges(x.begin(), x.end(), y.begin());
  }
  CHECK(q.values(s, a, true) == before);
}

TEST_CASE("critic loss gradient matches finite differences") {
  Critic q(tiny_critic(2, 2), 15);
  Rng rng(16);
  for (auto& v : q.online().values()) v += 0.2 * randn(1, 1, rng)(0, 0);
  CHECK(q.online().size() <= 200);
  TdBatch b{randn(6, 2, rng), randn(6, 2, rng), randn(6, 1, rng), randn(6, 2, rng), Mat::Zero(6, 1)};
  b.done(2, 0) = 1.0;
  const Mat a2 = randn(6, 2, rng);
  Tape t;
  t.backward(critic_loss(q, b, a2, 0.9, t));
  const auto g = t.param_grad(q.online());
  const auto fd = fd_param_grad(q.online(), [&] {
    Tape tf;
    tf.freeze(q.online());
    return tf.scalar_value(critic_loss(q, b, a2, 0.9, tf));
  });
  CHECK(max_rel_err(g, fd) < 1e-4);
  CHECK_THROWS_AS(critic_loss(q, TdBatch{}, a2, 0.9, t), ContractError);
}

// ---------------------------------------------------------------- actor

TEST_CASE("actor loss terms isolate exactly") {
  FlowModel pi = random_flow(flow_spec(2, 3), 17);
  Critic q(tiny_critic(3, 2), 18);
  Rng data(19);
  const Mat s = randn(10, 3, data), a = randn(10, 2, data);

  SUBCASE("alpha = 0 leaves -mean Q of the policy samples") {
    Rng r1(20), r2(20);
    Tape t;
    const ActorTerms terms = actor_loss(pi, critic_q(q), s, a, {0.0, 0.0, 0.1}, t, r1);
    const Mat a_pi = pi.sample_from_prior_draws(randn(10, 2, r2), CondBatch::from(s));
    const double expect = -q.values(s, a_pi, false).mean();
    CHECK(std::abs(t.scalar_value(terms.loss) - expect) < 1e-10);
  }
  SUBCASE("Q = 0 leaves -alpha mean log pi of the data") {
    zero_critic_output(q);
    Rng r1(21), r2(21);
    Tape t;
    const ActorTerms terms = actor_loss(pi, critic_q(q), s, a, {0.0, 2.5, 0.1}, t, r1);
    randn(10, 2, r2);  // the prior draws come first
    const Mat noisy = a + 0.1 * randn(10, 2, r2);
    const double expect = -2.5 * pi.log_prob(noisy, CondBatch::from(s)).mean();
    CHECK(std::abs(t.scalar_value(terms.loss) - expect) < 1e-10);
  }
}

TEST_CASE("actor loss gradient matches finite differences with every term active") {
  FlowModel pi = random_flow(flow_spec(2, 2), 22);
  Critic q(tiny_critic(2, 2), 23);
  CHECK(pi.params().size() <= 200);
  Rng data(24);
  const Mat s = randn(5, 2, data), a = randn(5, 2, data);
  const ActorLossWeights w{0.3, 0.7, 0.1};
  const Rng start(25);
  Rng r = start;
  Tape t;
  t.backward(actor_loss(pi, critic_q(q), s, a, w, t, r).loss);
  const auto g = t.param_grad(pi.params());
  const auto fd = fd_param_grad(pi.params(), [&] {
    Rng rr = start;
    Tape tf;
    tf.freeze(pi.params());
    return tf.scalar_value(actor_loss(pi, critic_q(q), s, a, w, tf, rr).loss);
  });
  CHECK(max_rel_err(g, fd) < 1e-4);
}

TEST_CASE("actor climbs a quadratic critic to its maximiser") {
  const Vec2 target(0.6, -0.4);
  QFn quad = [target](Tape& t, Var, Var a) {
    Var d = t.add_row(a, t.constant(-target.transpose()));
    return t.neg(t.sum_cols(t.square(d)));
  };
  FlowModel pi(train_spec(2, 2));
  Adam opt(pi.params().size(), AdamConfig{3e-3});
  Rng rng(26);
  for (int i = 0; i < 400; ++i) {
    const Mat s = randn(64, 2, rng);
    actor_update(pi, opt, quad, s, Mat::Zero(64, 2), {0.0, 0.0, 0.0}, rng);
  }
  const Mat x = pi.sample(CondBatch::from(randn(4000, 2, rng)), rng);
  CHECK((x.colwise().mean().transpose() - target).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("a huge alpha with a flat critic reproduces behaviour cloning") {
  Mat k(2, 2);
  k << 0.5, 0.1, -0.2, 0.4;
  FlowModel a1(train_spec(2, 2)), a2(train_spec(2, 2));
  Adam o1(a1.params().size(), AdamConfig{3e-3}), o2(a2.params().size(), AdamConfig{3e-3});
  CriticConfig cc = tiny_critic(2, 2);
  Critic q(cc, 27);
  zero_critic_output(q);
  Rng rng(28), r1(29), r2(29);
  for (int i = 0; i < 1500; ++i) {
    if (i == 1200) {
      o1.config().lr = 3e-4;
      o2.config().lr = 3e-4;
    }
    const Mat s = randn(64, 2, rng);
    const Mat a = s * k.transpose();
    actor_update(a1, o1, critic_q(q), s, a, {0.0, 1e6, 0.1}, r1);
    bc_update(a2, o2, s, a, 0.1, r2);
  }
  const Mat s = randn(4000, 2, rng);
  const Mat a = s * k.transpose() + 0.1 * randn(4000, 2, rng);
  const double nll1 = -a1.log_prob(a, CondBatch::from(s)).mean();
  const double nll2 = -a2.log_prob(a, CondBatch::from(s)).mean();
  CHECK(std::abs(nll1 - nll2) < 0.05);
}

// ---------------------------------------------------------------- GCRL / UGS

TEST_CASE("masked rows ignore the state-action context") {
  UgsState ugs{random_flow(flow_spec(2, 4), 30), {}};
  ugs.cfg.mask_prob = 1.0;
  Rng data(31);
  const Mat s = randn(8, 2, data), a = randn(8, 2, data), g = randn(8, 2, data);
  Mat sp = s, ap = a;
  for (int i = 0; i < 8; ++i) {
    sp.row(i) = s.row((i + 3) % 8);
    ap.row(i) = a.row((i + 5) % 8);
  }
  Rng r1(32), r2(32);
  Tape t1, t2;
  CHECK(t1.scalar_value(gcrl_q_loss(ugs, s, a, g, t1, r1)) ==
        t2.scalar_value(gcrl_q_loss(ugs, sp, ap, g, t2, r2)));
}

TEST_CASE("gcrl q loss gradient matches finite differences") {
  UgsState ugs{random_flow(flow_spec(2, 4), 33), {}};
  ugs.cfg.mask_prob = 0.5;
  CHECK(ugs.joint.params().size() <= 200);
  Rng data(34);
  const Mat s = randn(6, 2, data), a = randn(6, 2, data), g = randn(6, 2, data);
  const Rng start(35);
  Rng r = start;
  Tape t;
  t.backward(gcrl_q_loss(ugs, s, a, g, t, r));
  const auto grad = t.param_grad(ugs.joint.params());
  const auto fd = fd_param_grad(ugs.joint.params(), [&] {
    Rng rr = start;
    Tape tf;
    tf.freeze(ugs.joint.params());
    return tf.scalar_value(gcrl_q_loss(ugs, s, a, g, tf, rr));
  });
  CHECK(max_rel_err(grad, fd) < 1e-4);
}

TEST_CASE("the marginal goal density integrates to one") {
  UgsState ugs{FlowModel(train_spec(2, 4)), {}};
  Adam opt(ugs.joint.params().size(), AdamConfig{3e-3});
  Rng rng(36);
  for (int i = 0; i < 300; ++i) {
    const Mat s = randn(128, 2, rng), a = randn(128, 2, rng);
    Mat g = 0.5 * s + 0.3 * a;
    gcrl_q_update(ugs, opt, s, a, g, rng);
  }
  const int n = 200;
  const double half = 6.0, h = 2.0 * half / n;
  double mass = 0.0;
  Mat pts(n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) pts.row(j) << -half + (i + 0.5) * h, -half + (j + 0.5) * h;
    mass += marginal_log_density(ugs.joint, pts).array().exp().sum() * h * h;
  }
  CHECK(std::abs(mass - 1.0) < 0.02);
}

TEST_CASE("argmin is first-index and invariant to monotone transforms") {
  Vec v(6);
  v << 0.3, -1.0, 2.0, -1.0, 5.0, -0.5;
  CHECK(argmin_first(v) == 1);
  CHECK(argmin_first(Vec((3.0 * v.array()).exp() + 7.0)) == 1);
  CHECK(argmin_first(Vec(v.array().tanh())) == 1);
  CHECK_THROWS_AS(argmin_first(Vec()), ContractError);
}

TEST_CASE("goal selection is uniform under a flat density") {
  // Four buffer goals with bit-identical density under the identity flow.
  const std::vector<Vec2> corners{{1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  ReplayBuffer buf(10);
  for (int e = 0; e < 4; ++e) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 400; ++i) pts.push_back(corners[static_cast<std::size_t>((i + e) % 4)]);
    buf.add(points_traj(pts));
  }
  UgsState ugs{FlowModel(flow_spec(2, 6)), {}};
  Rng rng(37);
  std::vector<double> counts(4, 0.0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const GoalPick p = select_ugs_goal(ugs, buf, rng);
    for (std::size_t c = 0; c < 4; ++c) counts[c] += (p.goal - corners[c]).norm() == 0.0;
  }
  for (double c : counts) CHECK(std::abs(c - n / 4.0) <= 5.0 * std::sqrt(n * 0.25 * 0.75));
}

TEST_CASE("goal selection prefers regions the density model has not seen") {
  UgsState ugs{FlowModel(train_spec(2, 6)), {}};
  ugs.cfg.mask_prob = 1.0;
  Adam opt(ugs.joint.params().size(), AdamConfig{3e-3});
  Rng rng(38);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 600; ++i) {
    Mat g(128, 2);
    for (int r = 0; r < 128; ++r) g.row(r) << 0.5 * u(rng), u(rng);
    gcrl_q_update(ugs, opt, Mat::Zero(128, 4), Mat::Zero(128, 2), g, rng);
  }
  ReplayBuffer buf(20);
  for (int e = 0; e < 20; ++e) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 200; ++i) pts.emplace_back(u(rng), u(rng));
    buf.add(points_traj(pts));
  }
  int right = 0;
  for (int i = 0; i < 100; ++i) right += select_ugs_goal(ugs, buf, rng).goal(0) > 0.5;
  CHECK(right >= 95);
}

TEST_CASE("one candidate, and the small-buffer fallback") {
  ReplayBuffer buf(4);
  std::vector<Vec2> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(0.01 * i, 0.02 * i);
  buf.add(points_traj(pts));
  UgsState ugs{FlowModel(flow_spec(2, 6)), {}};
  ugs.cfg.candidates = 1;
  Rng r1(39), r2(39);
  const GoalPick p = select_ugs_goal(ugs, buf, r1);
  CHECK(p.goal == Vec2(buf.random_goals(1, r2).row(0).transpose()));
  CHECK_FALSE(p.fallback);

  ugs.cfg.candidates = 1024;
  std::string warning;
  const GoalPick f = select_ugs_goal(ugs, buf, r1, [&](const std::string& m) { warning = m; });
  CHECK(f.fallback);
  CHECK(warning.find("fewer than 1024") != std::string::npos);
}

TEST_CASE("gcrl actor gradient vanishes when the goal model ignores the action") {
  FlowModel joint(flow_spec(2, 4));  // identity flow: p(g | s, a) does not depend on a
  FlowModel actor = random_flow(flow_spec(2, 4), 40);
  Rng data(41), r(42);
  const Mat s = randn(16, 2, data), g = randn(16, 2, data);
  Tape t;
  t.backward(gcrl_actor_loss(actor, joint, s, g, t, r));
  const auto grad = t.param_grad(actor.params());
  double norm = 0.0;
  for (double x : grad) norm += x * x;
  CHECK(std::sqrt(norm) < 1e-3);
}

TEST_CASE("gcrl actor loss gradient matches finite differences") {
  FlowModel joint = random_flow(flow_spec(2, 4), 43);
  FlowModel actor = random_flow(flow_spec(2, 4), 44);
  CHECK(actor.params().size() <= 200);
  Rng data(45);
  const Mat s = randn(5, 2, data), g = randn(5, 2, data);
  const Rng start(46);
  Rng r = start;
  Tape t;
  t.backward(gcrl_actor_loss(actor, joint, s, g, t, r));
  const auto grad = t.param_grad(actor.params());
  const auto fd = fd_param_grad(actor.params(), [&] {
    Rng rr = start;
    Tape tf;
    tf.freeze(actor.params());
    return tf.scalar_value(gcrl_actor_loss(actor, joint, s, g, tf, rr));
  });
  CHECK(max_rel_err(grad, fd) < 1e-4);
}

namespace {

// Goal model for a one-step problem: g = (clip(a_0, -1, 1), 0) + noise.
FlowModel bandit_joint(Rng& rng) {
  FlowModel joint(train_spec(2, 4));
  UgsState ugs{joint, {}};
  ugs.cfg.mask_prob = 0.0;
  Adam opt(ugs.joint.params().size(), AdamConfig{3e-3});
  for (int i = 0; i < 800; ++i) {
    const Mat s = Mat::Zero(128, 2);
    const Mat a = 1.5 * randn(128, 2, rng);
    Mat g = Mat::Zero(128, 2);
    g.col(0) = a.col(0).cwiseMax(-1.0).cwiseMin(1.0);
    gcrl_q_update(ugs, opt, s, a, g, rng);
  }
  return ugs.joint;
}

}  // namespace

TEST_CASE("gcrl actor moves its mass onto the action that reaches the goal") {
  Rng rng(47);
  const FlowModel joint = bandit_joint(rng);
  const Mat s = Mat::Zero(128, 2);
  Mat g = Mat::Zero(128, 2);
  g.col(0).setConstant(1.0);

  SUBCASE("bandit oracle") {
    FlowModel actor(train_spec(2, 4));
    Adam opt(actor.params().size(), AdamConfig{3e-3});
    for (int i = 0; i < 300; ++i) gcrl_actor_update(actor, opt, joint, s, g, rng);
    const Mat a = actor.sample(CondBatch::from(hcat(Mat::Zero(2000, 2), g.row(0).replicate(2000, 1))), rng);
    CHECK((a.col(0).array() > 0.0).cast<double>().mean() >= 0.9);
  }
  SUBCASE("objective rises over the first 100 steps") {
    std::vector<double> gains;
    for (int seed = 0; seed < 20; ++seed) {
      FlowSpec spec = train_spec(2, 4);
      spec.seed = static_cast<std::uint64_t>(seed);
      FlowModel actor(spec);
      Adam opt(actor.params().size(), AdamConfig{1e-3});
      auto objective = [&] {
        Rng fixed(1000 + seed);
        Tape t;
        t.freeze(actor.params());
        return -t.scalar_value(gcrl_actor_loss(actor, joint, s, g, t, fixed));
      };
      const double before = objective();
      Rng train(2000 + seed);
      for (int i = 0; i < 100; ++i) gcrl_actor_update(actor, opt, joint, s, g, train);
      gains.push_back(objective() - before);
    }
    std::nth_element(gains.begin(), gains.begin() + 10, gains.end());
    CHECK(gains[10] > 0.0);
  }
}

// ---------------------------------------------------------------- evaluation

TEST_CASE("evaluation of scripted and untrained policies") {
  const EnvConfig env = EnvConfig::for_maze(MazeId::u_maze);
  Rng rng(48);
  const EvalStats expert = evaluate_policy(env, expert_policy(maze_info(MazeId::u_maze).routes[0]), 50, rng);
  CHECK(expert.episodes == 50);
  CHECK(expert.success_rate >= 0.95);
  CHECK(expert.mean_return < 0.0);

  FlowModel untrained = random_flow(train_spec(2, kStateDim), 49, 0.1);
  const EvalStats rnd = evaluate_policy(env, flow_policy(untrained, rng), 50, rng);
  CHECK(rnd.success_rate <= 0.1);
  CHECK(rnd.mean_length == doctest::Approx(env.horizon));
}

TEST_CASE("denoising changes only the sampling path") {
  FlowModel pi = random_flow(train_spec(2, kStateDim), 50, 0.2);
  Rng r1(51), r2(51), r3(51);
  const Vec4 s(0.3, 0.4, 0.1, -0.1);
  const Policy raw = flow_policy(pi, r1);
  const Policy den = flow_policy(pi, r2, std::nullopt, true, 0.1);
  const Policy den0 = flow_policy(pi, r3, std::nullopt, true, 0.0);
  for (int t = 0; t < 5; ++t) {
    const Vec2 a = raw(s, t), b = den(s, t), c = den0(s, t);
    CHECK(a == c);
    CHECK((a - b).norm() > 0.0);
  }
  CHECK(r1() == r2());
}

TEST_CASE("gaussian baseline density matches the closed form") {
  GaussianPolicy g(3, 2, {8}, 52);
  Rng rng(53);
  const Mat ctx = randn(4, 3, rng), a = randn(4, 2, rng);
  Tape t;
  t.freeze(g.params());
  const Mat lp = t.value(g.log_prob(t, t.constant(a), t.constant(ctx)));
  Tape t2;
  t2.freeze(g.params());
  const Mat mu = g.mean(ctx);
  // Recover log_std from two samples sharing the noise stream.
  Rng s1(54), s2(54);
  const Mat x = g.sample(ctx, s1);
  const Mat eps = randn(4, 2, s2);
  const Mat sd = ((x - mu).array() / eps.array()).matrix();
  for (int i = 0; i < 4; ++i) {
    double expect = -kLog2Pi;
    for (int j = 0; j < 2; ++j) {
      const double zz = (a(i, j) - mu(i, j)) / sd(i, j);
      expect += -0.5 * zz * zz - std::log(sd(i, j));
    }
    CHECK(lp(i, 0) == doctest::Approx(expect).epsilon(1e-9));
  }
}
