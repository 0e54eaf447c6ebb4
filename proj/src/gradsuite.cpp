// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/gradsuite.hpp"

#include <cmath>

#include "meshpose/gradcheck.hpp"
#include "meshpose/losses.hpp"

namespace meshpose::gradsuite {

namespace {

constexpr double kTol = 1e-4;

TensorD rand_t(RngStream& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  auto t = TensorD::zeros(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

SuiteResult from_report(const GradCheckReport& rep) {
  return {rep.name, rep.pass, rep.max_rel_err, rep.tol};
}

}  // namespace

std::vector<SuiteResult> run_all() {
  std::vector<SuiteResult> out;
  RngStream rng(2026, "gradsuite");

  auto tmpl = body::make_template({.coarse = true});
  auto g = graph::build_graph(tmpl.faces, tmpl.n_verts());
  const int64_t n = tmpl.n_verts();

  body::BodyParams ps, pt;
  for (int i = 0; i < body::kJoints * 3; ++i) {
    ps.theta[i] = rng.uniform(-0.5, 0.5);
    pt.theta[i] = rng.uniform(-0.5, 0.5);
  }
  ps.cam = {0.8, 0.0, 0.0};
  pt.cam = {0.75, 0.05, -0.05};
  auto mesh_s = body::lbs(tmpl, ps);
  auto mesh_t = body::lbs(tmpl, pt);

  // conv / transposed conv
  {
    auto x0 = rand_t(rng, {1, 3, 16, 16});
    auto w0 = rand_t(rng, {4, 3, 3, 3});
    auto b0 = rand_t(rng, {4});
    auto u = rand_t(rng, {1, 4, 8, 8});
    auto lossify = [&](const TensorD& y) { return sum(mul(y, u)); };
    out.push_back(from_report(grad_check(
        "conv2d/x", [&](const TensorD& x) { return lossify(nn::conv2d(x, w0, b0, 2, 1)); }, x0,
        kTol)));
    out.push_back(from_report(grad_check(
        "conv2d/weight", [&](const TensorD& w) { return lossify(nn::conv2d(x0, w, b0, 2, 1)); },
        w0, kTol)));
    out.push_back(from_report(grad_check(
        "conv2d/bias", [&](const TensorD& b) { return lossify(nn::conv2d(x0, w0, b, 2, 1)); },
        b0, kTol)));

    auto wt = rand_t(rng, {3, 2, 4, 4});
    auto bt = rand_t(rng, {2});
    auto ut = rand_t(rng, {1, 2, 32, 32});
    auto tloss = [&](const TensorD& y) { return sum(mul(y, ut)); };
    out.push_back(from_report(grad_check(
        "conv_transpose2d/x",
        [&](const TensorD& x) { return tloss(nn::conv_transpose2d(x, wt, bt, 2, 1)); }, x0,
        kTol)));
    out.push_back(from_report(grad_check(
        "conv_transpose2d/weight",
        [&](const TensorD& w) { return tloss(nn::conv_transpose2d(x0, w, bt, 2, 1)); }, wt,
        kTol)));
    out.push_back(from_report(grad_check(
        "conv_transpose2d/bias",
        [&](const TensorD& b) { return tloss(nn::conv_transpose2d(x0, wt, b, 2, 1)); }, bt,
        kTol)));
  }

  // instance norm / adain
  {
    auto x0 = rand_t(rng, {1, 4, 12, 12});
    auto u = rand_t(rng, {1, 4, 12, 12});
    out.push_back(from_report(grad_check(
        "instance_norm_2d/x",
        [&](const TensorD& x) { return sum(mul(nn::instance_norm_2d(x), u)); }, x0, kTol)));
    auto ga = rand_t(rng, {1, 4}, 0.5, 1.5);
    auto al = rand_t(rng, {1, 4});
    out.push_back(from_report(grad_check(
        "adain/x", [&](const TensorD& x) { return sum(mul(nn::adain(x, ga, al), u)); }, x0,
        kTol)));
    out.push_back(from_report(grad_check(
        "adain/gamma", [&](const TensorD& gg) { return sum(mul(nn::adain(x0, gg, al), u)); },
        ga, kTol)));
    out.push_back(from_report(grad_check(
        "adain/alpha", [&](const TensorD& aa) { return sum(mul(nn::adain(x0, ga, aa), u)); },
        al, kTol)));
  }

  // bilinear sampling w.r.t. the feature map
  {
    auto feat = rand_t(rng, {3, 16, 16});
    auto pts = TensorD::zeros({n, 2});
    {
      std::vector<double> pv(n * 2);
      body::project(mesh_s.verts.data(), n, ps.cam, 16, 16, pv.data());
      for (int64_t i = 0; i < n * 2; ++i) pts.data()[i] = pv[i];
    }
    auto u = rand_t(rng, {n, 3});
    out.push_back(from_report(grad_check(
        "bilinear_sample/features",
        [&](const TensorD& f) { return sum(mul(nn::bilinear_sample(f, pts), u)); }, feat,
        kTol)));
  }

  // mesh instance norm and one graph-conv layer
  {
    auto x0 = rand_t(rng, {n, 6});
    auto u = rand_t(rng, {n, 6});
    auto sc = rand_t(rng, {6}, 0.5, 1.5);
    auto sh = rand_t(rng, {6});
    out.push_back(from_report(grad_check(
        "mesh_instance_norm/x",
        [&](const TensorD& x) { return sum(mul(nn::mesh_instance_norm(x, sc, sh), u)); }, x0,
        kTol)));

    RngStream lr(2, "gc_layer");
    graph::GraphConvLayer<double> layer(6, 6, lr);
    out.push_back(from_report(grad_check(
        "graph_conv/x",
        [&](const TensorD& x) { return sum(mul(graph::graph_conv(x, g, layer), u)); }, x0,
        kTol)));
    out.push_back(from_report(grad_check(
        "graph_conv/weight",
        [&](const TensorD& w) {
          graph::GraphConvLayer<double> l2 = layer;
          l2.weight = w;
          return sum(mul(graph::graph_conv(x0, g, l2), u));
        },
        layer.weight, kTol)));
  }

  // full LPB at 16x16
  {
    RngStream lr(3, "lpb_suite");
    graph::LPBlock<double> block(4, 0, lr);
    auto f0 = rand_t(rng, {4, 16, 16});
    auto u = rand_t(rng, {4, 16, 16});
    auto run = [&](const TensorD& f) {
      return sum(mul(graph::lpb_forward(block, g, f, mesh_s, mesh_t, ps.cam, pt.cam), u));
    };
    out.push_back(from_report(grad_check("lpb/features", run, f0, kTol)));
    nn::NamedParams<double> named;
    block.collect("lpb", named);
    std::vector<TensorD*> params;
    for (auto& [nm, p] : named) params.push_back(p);
    RngStream pr(4, "lpb_suite_params");
    out.push_back(
        from_report(grad_check_params("lpb/params", [&] { return run(f0); }, params, kTol, 3, pr)));
  }

  // rasterizer adjoint identity, f64, tolerance 1e-10
  {
    SuiteResult r{"rasterize/adjoint", false, 0.0, 1e-10};
    for (int trial = 0; trial < 3; ++trial) {
      auto X = rand_t(rng, {n, 3});
      auto U = rand_t(rng, {3, 16, 16});
      Tape<double> tape;
      TapeScope<double> scope(tape);
      auto Xg = X.clone();
      Xg.set_requires_grad(true);
      auto R = raster::rasterize(Xg, mesh_t, pt.cam, 16, 16);
      tape.backward(sum(mul(R, U)));
      auto gX = tape.grad_of(Xg);
      double lhs = 0, rhs = 0;
      for (int64_t i = 0; i < R.numel(); ++i) lhs += R.data()[i] * U.data()[i];
      for (int64_t i = 0; i < X.numel(); ++i) rhs += X.data()[i] * gX.data()[i];
      r.max_err = std::max(r.max_err, std::fabs(lhs - rhs));
    }
    r.pass = r.max_err <= r.tol;
    out.push_back(r);
  }

  // losses w.r.t. the generated image / predicted mask
  {
    models::PerceptualExtractor<double> ext;
    auto x0 = rand_t(rng, {1, 3, 16, 16});
    auto tgt = rand_t(rng, {1, 3, 16, 16});
    out.push_back(from_report(grad_check(
        "loss/rec", [&](const TensorD& x) { return losses::rec_loss(x, tgt); }, x0, kTol)));
    out.push_back(from_report(grad_check(
        "loss/perc", [&](const TensorD& x) { return losses::perc_loss(ext, x, tgt); }, x0,
        kTol)));
    auto sil = TensorD::zeros({1, 1, 16, 16});
    for (int64_t i = 100; i < 160; ++i) sil.data()[i] = 1.0;
    auto m0 = rand_t(rng, {1, 1, 16, 16}, 0.05, 0.95);
    out.push_back(from_report(grad_check(
        "loss/mask_tv", [&](const TensorD& m) { return losses::mask_loss(m, sil); }, m0, kTol)));

    RngStream dr(5, "suite_disc");
    models::ModelConfig mc;
    mc.disc_width = 4;
    models::PatchDiscriminator<double> disc(mc, dr);
    auto cond = rand_t(rng, {1, 3, 16, 16});
    out.push_back(from_report(grad_check(
        "loss/lsgan_g", [&](const TensorD& x) { return losses::lsgan_g_loss(disc, x, cond); },
        x0, kTol)));
    out.push_back(from_report(grad_check(
        "loss/lsgan_d_fake",
        [&](const TensorD& x) { return losses::lsgan_d_loss(disc, tgt, x, cond); }, x0, kTol)));
  }

  // dense layers and activations
  {
    RngStream mr(6, "suite_mlp");
    nn::Mlp<double> mlp({5, 7, 3}, mr);
    auto x0 = rand_t(rng, {2, 5});
    auto u = rand_t(rng, {2, 3});
    out.push_back(from_report(grad_check(
        "mlp/x", [&](const TensorD& x) { return sum(mul(mlp.forward(x), u)); }, x0, kTol)));
    auto a0 = rand_t(rng, {12}, 0.2, 1.5);
    out.push_back(from_report(grad_check(
        "activations", [&](const TensorD& x) {
          return mean(mul(tanh(x), sigmoid(leaky_relu(relu(x), 0.2))));
        },
        a0, kTol)));
  }

  // lbs w.r.t. pose and shape
  {
    auto th0 = TensorD::zeros({body::kJoints, 3});
    for (int64_t i = 0; i < th0.numel(); ++i) th0.data()[i] = rng.uniform(-0.8, 0.8);
    auto be0 = rand_t(rng, {body::kShapes});
    auto u = rand_t(rng, {n, 3});
    out.push_back(from_report(grad_check(
        "lbs/theta",
        [&](const TensorD& th) { return sum(mul(body::lbs_op(tmpl, th, be0), u)); }, th0,
        kTol)));
    out.push_back(from_report(grad_check(
        "lbs/beta", [&](const TensorD& be) { return sum(mul(body::lbs_op(tmpl, th0, be), u)); },
        be0, kTol)));
  }

  return out;
}

bool all_pass(const std::vector<SuiteResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return !results.empty();
}

}  // namespace meshpose::gradsuite
