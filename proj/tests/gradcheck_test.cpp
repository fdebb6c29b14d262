// Central finite differences in double against the analytic backward passes.

#include "activebc/nn/conv2d.hpp"
#include "activebc/nn/linear.hpp"
#include "activebc/nn/loss.hpp"
#include "activebc/nn/lstm.hpp"
#include "activebc/policy.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <functional>
#include <random>

using namespace activebc;
using namespace activebc::nn;

namespace {

constexpr double kEps = 1e-3;

std::vector<double> random_vec(std::size_t n, std::mt19937_64& gen, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(gen);
  return v;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), 1e-6); }

// Max relative error between `analytic` and the numerical gradient of f
// w.r.t. every entry of `x`.
double check(std::vector<double>& x, const std::vector<double>& analytic,
             const std::function<double()>& f, double eps = kEps) {
  EXPECT_EQ(x.size(), analytic.size());
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f();
    x[i] = keep - eps;
    const double down = f();
    x[i] = keep;
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2 * eps)));
  }
  return worst;
}

double weighted_sum(const std::vector<double>& y, const std::vector<double>& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

TEST(GradCheck, Conv2d) {
  std::mt19937_64 gen(1);
  for (int stride : {1, 2}) {
    const Conv2dGeom g{2, 3, 5, 6, stride};
    const std::size_t batch = 2;
    auto in = random_vec(g.in_ch * batch * g.in_plane(), gen);
    auto w = random_vec(g.weight_count(), gen);
    auto b = random_vec(g.out_ch, gen);
    const auto r = random_vec(g.out_ch * batch * g.out_plane(), gen);
    std::vector<double> out(r.size()), col, dcol;
    auto loss = [&] {
      conv2d_forward_batch(g, batch, in.data(), w.data(), b.data(), out.data(), col);
      return weighted_sum(out, r);
    };
    loss();
    std::vector<double> dw(w.size()), db(b.size()), din(in.size());
    conv2d_backward_batch(g, batch, col, w.data(), r.data(), dw.data(), db.data(), din.data(), dcol);
    EXPECT_LT(check(w, dw, loss), 1e-3);
    EXPECT_LT(check(b, db, loss), 1e-3);
    EXPECT_LT(check(in, din, loss), 1e-3);
  }
}

TEST(GradCheck, Linear) {
  std::mt19937_64 gen(2);
  const std::size_t batch = 3, in = 4, out = 5;
  auto x = random_vec(batch * in, gen);
  auto w = random_vec(in * out, gen);
  auto b = random_vec(out, gen);
  const auto r = random_vec(batch * out, gen);
  std::vector<double> y(batch * out);
  auto loss = [&] {
    linear_forward(batch, in, out, x.data(), w.data(), b.data(), y.data());
    return weighted_sum(y, r);
  };
  std::vector<double> dw(w.size()), db(b.size()), dx(x.size());
  linear_backward(batch, in, out, x.data(), w.data(), r.data(), dw.data(), db.data(), dx.data());
  EXPECT_LT(check(w, dw, loss), 1e-3);
  EXPECT_LT(check(b, db, loss), 1e-3);
  EXPECT_LT(check(x, dx, loss), 1e-3);
}

TEST(GradCheck, Relu) {
  std::mt19937_64 gen(3);
  auto x = random_vec(40, gen);
  for (auto& v : x)
    if (std::abs(v) < 0.01) v = 0.5;  // keep away from the kink
  const auto r = random_vec(40, gen);
  auto loss = [&] {
    auto y = x;
    relu_inplace(y.data(), y.size());
    return weighted_sum(y, r);
  };
  auto y = x;
  relu_inplace(y.data(), y.size());
  auto dx = r;
  relu_backward_inplace(y.data(), dx.data(), dx.size());
  EXPECT_LT(check(x, dx, loss), 1e-3);
}

TEST(GradCheck, LstmThroughTime) {
  std::mt19937_64 gen(4);
  const std::size_t batch = 2, din = 3, dh = 4, steps = 3, g4 = 4 * dh;
  auto wx = random_vec(din * g4, gen, -0.6, 0.6);
  auto wh = random_vec(dh * g4, gen, -0.6, 0.6);
  auto b = random_vec(g4, gen, -0.5, 0.5);
  std::vector<std::vector<double>> xs;
  for (std::size_t k = 0; k < steps; ++k) xs.push_back(random_vec(batch * din, gen));
  auto h0 = random_vec(batch * dh, gen, -0.5, 0.5);
  auto c0 = random_vec(batch * dh, gen, -0.5, 0.5);
  const auto rh = random_vec(batch * dh, gen);
  const auto rc = random_vec(batch * dh, gen);
  std::vector<LstmStepCache<double>> caches(steps);
  auto loss = [&] {
    for (std::size_t k = 0; k < steps; ++k) {
      const double* hp = k == 0 ? h0.data() : caches[k - 1].hidden.data();
      const double* cp = k == 0 ? c0.data() : caches[k - 1].cell.data();
      lstm_forward_step(batch, din, dh, xs[k].data(), hp, cp, wx.data(), wh.data(), b.data(),
                        caches[k]);
    }
    return weighted_sum(caches.back().hidden, rh) + weighted_sum(caches.back().cell, rc);
  };
  loss();
  std::vector<double> dwx(wx.size()), dwh(wh.size()), db(b.size()), dh_prev(batch * dh), dz;
  std::vector<std::vector<double>> dxs(steps, std::vector<double>(batch * din));
  std::vector<double> dhid = rh, dcell = rc;
  for (std::size_t k = steps; k-- > 0;) {
    const double* hp = k == 0 ? h0.data() : caches[k - 1].hidden.data();
    const double* cp = k == 0 ? c0.data() : caches[k - 1].cell.data();
    lstm_backward_step(batch, din, dh, xs[k].data(), hp, cp, wx.data(), wh.data(), caches[k],
                       dhid.data(), dcell.data(), dwx.data(), dwh.data(), db.data(),
                       dxs[k].data(), dh_prev.data(), dz);
    dhid = dh_prev;
  }
  EXPECT_LT(check(wx, dwx, loss), 1e-3);
  EXPECT_LT(check(wh, dwh, loss), 1e-3);
  EXPECT_LT(check(b, db, loss), 1e-3);
  for (std::size_t k = 0; k < steps; ++k) EXPECT_LT(check(xs[k], dxs[k], loss), 1e-3) << k;
  EXPECT_LT(check(h0, dhid, loss), 1e-3);
  EXPECT_LT(check(c0, dcell, loss), 1e-3);
}

TEST(GradCheck, Mse) {
  std::mt19937_64 gen(5);
  Tensor<double> p({7}, random_vec(7, gen)), t({7}, random_vec(7, gen));
  const auto analytic = mse_loss(p, t).grad.data;
  EXPECT_LT(check(p.data, analytic, [&] { return mse_loss(p, t).value; }), 1e-3);
}

PolicyArch small_arch() {
  PolicyArch a;
  a.image_size = 8;
  a.channels = {2, 3, 3, 4};
  a.feature_dim = 5;
  a.hidden_dim = 4;
  return a;
}

PolicyBatch<double> small_batch(const PolicyArch& arch, std::mt19937_64& gen) {
  PolicyBatch<double> b;
  b.frame_count = 4;
  b.pixels = random_vec(b.frame_count * arch.pixels_per_frame(), gen, 0, 1);
  b.history = 3;
  b.windows = {0, 1, 2, 3, 3, 1};
  b.targets = random_vec(2 * arch.outputs, gen, -0.5, 0.5);
  b.weights = {0.25, 0.75};
  b.sample_slot = {0, 1};
  return b;
}

PolicyNet<double> small_net(std::mt19937_64& gen) {
  PolicyNet<double> net(small_arch());
  net.init(9);
  // Larger head weights so the gradient reaches every layer at a useful scale.
  for (auto& v : net.store().at("head.w").value.data) v *= 50;
  net.out_mean() = random_vec(6, gen, -0.1, 0.1);
  net.out_scale() = {0.5, 1.0, 2.0, 0.3, 1.5, 0.8};
  return net;
}

TEST(GradCheck, PolicyEndToEnd) {
  std::mt19937_64 gen(6);
  PolicyNet<double> net = small_net(gen);
  const auto batch = small_batch(net.arch(), gen);
  net.store().zero_grad();
  net.forward_backward(batch);
  std::vector<std::vector<double>> grads;
  for (const auto& p : net.store().params()) {
    double norm = 0;
    for (double g : p.grad.data) norm += g * g;
    EXPECT_GT(norm, 1e-12) << p.name << " receives no gradient";
    grads.push_back(p.grad.data);
  }
  auto objective = [&] { return net.forward_backward(batch).objective; };
  double worst = 0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = net.store().params()[i];
    const double e = check(p.value.data, grads[i], objective, 1e-5);
    EXPECT_LT(e, 1e-2) << p.name;
    worst = std::max(worst, e);
  }
  std::printf("policy gradient check: max relative error %.3g\n", worst);
}

TEST(GradCheck, PolicyGradientsVanishAtZeroLoss) {
  std::mt19937_64 gen(7);
  PolicyNet<double> net = small_net(gen);
  auto batch = small_batch(net.arch(), gen);
  batch.targets = net.forward(batch);
  net.store().zero_grad();
  const auto loss = net.forward_backward(batch);
  EXPECT_EQ(loss.objective, 0.0);
  for (const auto& p : net.store().params())
    for (double g : p.grad.data) ASSERT_EQ(g, 0.0) << p.name;
}

}  // namespace
