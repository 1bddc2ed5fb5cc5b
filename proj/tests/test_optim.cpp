// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "promptcl/optim.hpp"

using promptcl::Adam;
using promptcl::AdamConfig;
using promptcl::GradView;
using promptcl::ParamBlock;

TEST_CASE("global_norm spans multiple blocks") {
  std::vector<double> a{3.0};
  std::vector<double> b{4.0};
  const GradView views[] = {{a.data(), 1}, {b.data(), 1}};
  CHECK(promptcl::global_norm(views) == doctest::Approx(5.0));
}

TEST_CASE("clip_global_norm rescales only when above the bound") {
  std::vector<double> g{3.0, 4.0};
  const GradView views[] = {{g.data(), 2}};
  const double pre = promptcl::clip_global_norm(views, 1.0);
  CHECK(pre == doctest::Approx(5.0));
  CHECK(g[0] == doctest::Approx(0.6));
  CHECK(g[1] == doctest::Approx(0.8));

  std::vector<double> h{0.3, 0.4};
  const GradView hv[] = {{h.data(), 2}};
  const double pre2 = promptcl::clip_global_norm(hv, 1.0);
  CHECK(pre2 == doctest::Approx(0.5));
  CHECK(h[0] == doctest::Approx(0.3));  // untouched below the bound
}

TEST_CASE("first Adam step moves by about lr in the gradient direction") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt(1, cfg);
  double p = 2.0;
  const double g = 0.7;
  const ParamBlock blocks[] = {{&p, &g, 1}};
  opt.step(blocks);
  // With bias correction the first update is lr * g / (|g| + eps) ~= lr.
  CHECK(p == doctest::Approx(2.0 - 0.1).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("Adam converges on a quadratic bowl") {
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam opt(2, cfg);
  std::vector<double> p{3.0, -2.0};
  std::vector<double> g(2, 0.0);
  for (int t = 0; t < 2000; ++t) {
    g[0] = 2.0 * p[0];
    g[1] = 2.0 * p[1];
    const ParamBlock blocks[] = {{p.data(), g.data(), 2}};
    opt.step(blocks);
  }
  CHECK(std::abs(p[0]) < 1e-2);
  CHECK(std::abs(p[1]) < 1e-2);
}

TEST_CASE("beta1 of zero gives sign-like scaling from the running second moment") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.beta1 = 0.0;
  Adam opt(1, cfg);
  double p = 0.0;
  const double g = -4.0;
  const ParamBlock blocks[] = {{&p, &g, 1}};
  opt.step(blocks);
  CHECK(p == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("layout mismatch is rejected") {
  Adam opt(3, AdamConfig{});
  double p = 0.0;
  const double g = 1.0;
  const ParamBlock blocks[] = {{&p, &g, 1}};
  CHECK_THROWS_AS(opt.step(blocks), std::logic_error);
}
