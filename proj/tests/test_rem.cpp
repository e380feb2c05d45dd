#include "redf/rem.hpp"

#include "fd.hpp"

#include <doctest.h>

using namespace redf;
using ad::Tape;
using ad::Var;

namespace {

Config tiny_cfg(int C = 2, int L = 8, int p = 4, int s = 2, int D = 8) {
  Config c;
  c.num_channels = C;
  c.lookback = L;
  c.patch_size = p;
  c.patch_stride = s;
  c.hidden_dim = D;
  c.horizon = 4;
  c.encoder_layers = 1;
  c.msp_count = 1;
  c.dropout = 0.0;
  c.seed = 9;
  return c;
}

struct RemFixture {
  Config cfg;
  nn::ParamStore ps;
  Rng init{123};
  RemModel rem;
  explicit RemFixture(Config c) : cfg(std::move(c)), rem(cfg, ps, init) {}
};

}  // namespace

TEST_CASE("patch_frequency tiles exactly and the two views are transposed slicings") {
  Config cfg = tiny_cfg(1, 4, 2, 2, 8);
  RemFixture fx(cfg);
  Tape t(false);
  Tensor re(1, 4), im(1, 4);
  for (int i = 0; i < 4; ++i) {
    re(0, i) = i + 1;        // a,b,c,d
    im(0, i) = 10 * (i + 1);
  }
  auto [inter, intra] = fx.rem.patch_frequency(t, t.constant(re), t.constant(im));
  const Tensor& iv = t.val(inter);
  REQUIRE(iv.rows() == 2);  // N=2 patches, C=1
  REQUIRE(iv.cols() == 4);  // 2p
  // patch 0 = [a,b | im(a),im(b)], patch 1 = [c,d | ...]
  CHECK(iv(0, 0) == 1);
  CHECK(iv(0, 1) == 2);
  CHECK(iv(0, 2) == 10);
  CHECK(iv(0, 3) == 20);
  CHECK(iv(1, 0) == 3);
  CHECK(iv(1, 1) == 4);

  const Tensor& gv = t.val(intra);
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < 4; ++k) CHECK(gv(i, k) == iv(i, k));  // C=1: same ordering
}

TEST_CASE("patch views agree across channels: inter[i][c] == intra[c][i]") {
  Config cfg = tiny_cfg(3, 12, 4, 4, 8);
  RemFixture fx(cfg);
  Rng rng(5);
  Tape t(false);
  Tensor re = rng.gaussian_tensor(3, 12), im = rng.gaussian_tensor(3, 12);
  auto [inter, intra] = fx.rem.patch_frequency(t, t.constant(re), t.constant(im));
  int n = fx.rem.patches(), C = 3, w = 8;
  const Tensor& iv = t.val(inter);
  const Tensor& gv = t.val(intra);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < w; ++k) CHECK(iv(i * C + c, k) == gv(c * n + i, k));
}

TEST_CASE("patch count for the reference configuration is 23") {
  Config cfg = tiny_cfg(2, 192, 16, 8, 8);
  RemFixture fx(cfg);
  CHECK(fx.rem.patches() == 23);
}

TEST_CASE("embedding is affine: zero bias maps zero to zero, doubling doubles") {
  Config cfg = tiny_cfg();
  RemFixture fx(cfg);
  fx.ps.find("rem.embed_inter.b").value.set_zero();
  fx.ps.find("rem.embed_intra.b").value.set_zero();
  Tape t(false);
  nn::Binder bind(t);
  int n = fx.rem.patches();
  Tensor zero(n * cfg.num_channels, 2 * cfg.patch_size);
  auto [ei, gi] = fx.rem.embed(t, bind, t.constant(zero), t.constant(zero));
  CHECK(t.val(ei).map().cwiseAbs().maxCoeff() == 0.0);
  CHECK(t.val(gi).map().cwiseAbs().maxCoeff() == 0.0);

  Rng rng(3);
  Tensor x = rng.gaussian_tensor(n * cfg.num_channels, 2 * cfg.patch_size);
  Tensor x2 = x;
  x2.map() *= 2.0;
  auto [e1, g1] = fx.rem.embed(t, bind, t.constant(x), t.constant(x));
  auto [e2, g2] = fx.rem.embed(t, bind, t.constant(x2), t.constant(x2));
  for (long i = 0; i < t.val(e1).size(); ++i)
    CHECK(t.val(e2)[i] == doctest::Approx(2.0 * t.val(e1)[i]).epsilon(1e-12));
  (void)g1;
  (void)g2;
}

TEST_CASE("embedding shape contract at the reference scale") {
  Config cfg = tiny_cfg(38, 192, 16, 8, 256);
  RemFixture fx(cfg);
  Tape t(false);
  nn::Binder bind(t);
  Rng rng(7);
  int n = fx.rem.patches();
  REQUIRE(n == 23);
  Tensor inter = rng.gaussian_tensor(n * 38, 32);
  Tensor intra = rng.gaussian_tensor(38 * n, 32);
  auto [ei, gi] = fx.rem.embed(t, bind, t.constant(inter), t.constant(intra));
  CHECK(t.val(ei).rows() == 23 * 38);
  CHECK(t.val(ei).cols() == 256);
  CHECK(t.val(gi).rows() == 38 * 23);
  CHECK(t.val(gi).cols() == 256);

  // flatten width 5888 per channel, spectra C x 192
  auto [re, im] = fx.rem.fuse_and_project(t, bind, ei, gi);
  CHECK(t.val(re).rows() == 38);
  CHECK(t.val(re).cols() == 192);
  CHECK(t.val(im).rows() == 38);
  CHECK(t.val(im).cols() == 192);
  CHECK(fx.ps.find("rem.proj_real.w").value.rows() == 5888);
}

TEST_CASE("build_graph: distances, similarities, probabilities") {
  Config cfg = tiny_cfg(2, 4, 4, 4, 2);
  cfg.attention_heads = 2;
  RemFixture fx(cfg);
  REQUIRE(fx.rem.patches() == 1);

  Tape t(true);
  nn::Binder bind(t);
  Tensor feats(2, 2);  // rows [1,3], [2,1]
  feats(0, 0) = 1;
  feats(0, 1) = 3;
  feats(1, 0) = 2;
  feats(1, 1) = 1;
  RemOptions opts;  // inference
  GraphVars g = fx.rem.build_graph(t, bind, t.constant(feats), opts);
  SimilarityGraph snap = fx.rem.snapshot_graph(t, g);

  double eps = cfg.epsilon;
  CHECK(snap.similarity[0](0, 1) == doctest::Approx(1.0 / (3.0 + eps)).epsilon(1e-9));
  CHECK(snap.similarity[0](0, 1) == doctest::Approx(0.33333).epsilon(1e-4));
  CHECK(snap.similarity[0](0, 0) == doctest::Approx(1.0 / eps).epsilon(1e-9));
  // symmetry and unit diagonal probability
  CHECK(snap.similarity[0](0, 1) == snap.similarity[0](1, 0));
  CHECK(snap.prob[0](0, 0) == 1.0);
  CHECK(snap.prob[0](1, 1) == 1.0);
  // weak off-diagonal similarity: masked out at inference
  CHECK(snap.mask[0](0, 1) == 0.0);
  CHECK(snap.mask[0](0, 0) == 1.0);
}

TEST_CASE("build_graph: identical rows are always connected; C=1 gives unit mask") {
  Config cfg = tiny_cfg(2, 4, 4, 4, 2);
  cfg.attention_heads = 2;
  RemFixture fx(cfg);
  Tape t(false);
  nn::Binder bind(t);
  Tensor feats(2, 2);
  feats(0, 0) = feats(1, 0) = 0.4;
  feats(0, 1) = feats(1, 1) = -1.2;
  RemOptions opts;
  GraphVars g = fx.rem.build_graph(t, bind, t.constant(feats), opts);
  SimilarityGraph snap = fx.rem.snapshot_graph(t, g);
  CHECK(snap.similarity[0](0, 1) == doctest::Approx(1.0 / cfg.epsilon).epsilon(1e-12));
  for (int m = 0; m < 2; ++m)
    for (int n = 0; n < 2; ++n) {
      CHECK(snap.prob[0](m, n) == 1.0);
      CHECK(snap.mask[0](m, n) == 1.0);
    }

  Config cfg1 = tiny_cfg(1, 4, 4, 4, 2);
  cfg1.attention_heads = 2;
  RemFixture fx1(cfg1);
  Tape t1(false);
  nn::Binder bind1(t1);
  GraphVars g1 = fx1.rem.build_graph(t1, bind1, t1.constant(Tensor::full(1, 2, 0.3)), opts);
  SimilarityGraph s1 = fx1.rem.snapshot_graph(t1, g1);
  CHECK(s1.mask[0].rows() == 1);
  CHECK(s1.mask[0](0, 0) == 1.0);
}

TEST_CASE("graph invariants over random embeddings: symmetry, diagonal, mask respect") {
  Config cfg = tiny_cfg(4, 8, 4, 4, 8);
  RemFixture fx(cfg);
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    Tape t(false);
    nn::Binder bind(t);
    int n = fx.rem.patches();
    Tensor emb = rng.gaussian_tensor(n * 4, 8);
    RemOptions opts;
    GraphVars g = fx.rem.build_graph(t, bind, t.constant(emb), opts);
    SimilarityGraph snap = fx.rem.snapshot_graph(t, g);
    nn::AttentionCapture cap;
    RemOptions copts;
    copts.capture_inter = &cap;
    fx.rem.inter_attention(t, bind, t.constant(emb), g, copts);
    // weights: patches x heads, each (C, C)
    int heads = cfg.attention_heads;
    REQUIRE(static_cast<int>(cap.weights.size()) == n * heads);
    for (int i = 0; i < n; ++i) {
      for (int m = 0; m < 4; ++m) {
        CHECK(snap.prob[i](m, m) == 1.0);
        CHECK(snap.mask[i](m, m) == 1.0);
        for (int nn2 = 0; nn2 < 4; ++nn2) {
          CHECK(snap.similarity[i](m, nn2) == snap.similarity[i](nn2, m));
          if (snap.mask[i](m, nn2) == 0.0)
            for (int h = 0; h < heads; ++h) CHECK(cap.weights[i * heads + h](m, nn2) == 0.0);
        }
      }
    }
  }
}

TEST_CASE("inter attention with identity mask is one-hot; all-ones mask equals unmasked") {
  Config cfg = tiny_cfg(3, 8, 4, 4, 8);
  RemFixture fx(cfg);
  Rng rng(55);
  int n = fx.rem.patches(), C = 3;
  Tensor emb = rng.gaussian_tensor(n * C, 8);

  GraphVars identity;
  identity.masked = true;
  Tape t(false);
  nn::Binder bind(t);
  for (int i = 0; i < n; ++i) {
    Tensor bias(C, C);
    for (int m = 0; m < C; ++m)
      for (int k = 0; k < C; ++k)
        bias(m, k) = m == k ? 0.0 : -std::numeric_limits<double>::infinity();
    identity.bias.push_back(t.constant(bias));
  }
  nn::AttentionCapture cap;
  RemOptions opts;
  opts.capture_inter = &cap;
  fx.rem.inter_attention(t, bind, t.constant(emb), identity, opts);
  for (const Tensor& w : cap.weights)
    for (int m = 0; m < C; ++m)
      for (int k = 0; k < C; ++k) CHECK(w(m, k) == (m == k ? 1.0 : 0.0));

  GraphVars ones;
  ones.masked = true;
  for (int i = 0; i < n; ++i) ones.bias.push_back(t.constant(Tensor(C, C)));
  Var with_ones = fx.rem.inter_attention(t, bind, t.constant(emb), ones, RemOptions{});
  GraphVars none;
  none.masked = false;
  Var unmasked = fx.rem.inter_attention(t, bind, t.constant(emb), none, RemOptions{});
  for (long i = 0; i < t.val(with_ones).size(); ++i)
    CHECK(t.val(with_ones)[i] == t.val(unmasked)[i]);
}

TEST_CASE("intra attention: shape, N=1 single-token no-op weight, channel permutation") {
  Config cfg = tiny_cfg(2, 4, 4, 4, 8);
  RemFixture fx(cfg);
  REQUIRE(fx.rem.patches() == 1);
  Rng rng(66);
  Tensor emb = rng.gaussian_tensor(2, 8);
  Tape t(false);
  nn::Binder bind(t);
  nn::AttentionCapture cap;
  RemOptions opts;
  opts.capture_intra = &cap;
  Var out = fx.rem.intra_attention(t, bind, t.constant(emb), opts);
  CHECK(t.val(out).rows() == 2);
  CHECK(t.val(out).cols() == 8);
  for (const Tensor& w : cap.weights) {
    REQUIRE(w.rows() == 1);
    CHECK(w(0, 0) == 1.0);
  }

  // permuting channels permutes outputs identically
  Config cfg2 = tiny_cfg(3, 12, 4, 4, 8);
  RemFixture fx2(cfg2);
  int n = fx2.rem.patches();
  Tensor base = rng.gaussian_tensor(3 * n, 8);
  Tensor permuted(3 * n, 8);
  int perm[3] = {2, 0, 1};
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 8; ++k) permuted(c * n + i, k) = base(perm[c] * n + i, k);
  Tape t2(false);
  nn::Binder bind2(t2);
  Var o1 = fx2.rem.intra_attention(t2, bind2, t2.constant(base), RemOptions{});
  Var o2 = fx2.rem.intra_attention(t2, bind2, t2.constant(permuted), RemOptions{});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 8; ++k)
        CHECK(t2.val(o2)(c * n + i, k) == t2.val(o1)(perm[c] * n + i, k));
}

TEST_CASE("fuse_and_project: mean of equal inputs, zero features with zero bias") {
  Config cfg = tiny_cfg(2, 8, 4, 2, 8);
  RemFixture fx(cfg);
  int n = fx.rem.patches(), C = 2, D = 8;
  Rng rng(88);
  // identical inter/intra content (inter stored patch-major, intra channel-major)
  Tensor intra = rng.gaussian_tensor(C * n, D);
  Tensor inter(n * C, D);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < D; ++k) inter(i * C + c, k) = intra(c * n + i, k);

  // with equal fused inputs, fusion equals either input: check via zeroed
  // projection weights replaced by identity-like probe
  Tape t(false);
  nn::Binder bind(t);
  auto [re, im] = fx.rem.fuse_and_project(t, bind, t.constant(inter), t.constant(intra));
  (void)re;
  (void)im;

  // zero features and zero-bias heads give zero spectra
  fx.ps.find("rem.proj_real.b").value.set_zero();
  fx.ps.find("rem.proj_imag.b").value.set_zero();
  Tensor zi(n * C, D), zg(C * n, D);
  auto [re0, im0] = fx.rem.fuse_and_project(t, bind, t.constant(zi), t.constant(zg));
  CHECK(t.val(re0).map().cwiseAbs().maxCoeff() == 0.0);
  CHECK(t.val(im0).map().cwiseAbs().maxCoeff() == 0.0);

  // doubling both inputs doubles the fused flat features: check linearity of
  // the projection by comparing against manual flatten x W + b
  Tensor flat(C, n * D);
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < D; ++k) flat(c, i * D + k) = intra(c * n + i, k);
  const Tensor& w = fx.ps.find("rem.proj_real.w").value;
  Tensor expect(C, cfg.lookback);
  expect.map() = flat.map() * w.map();
  const Tensor& got = t.val(re);
  for (long i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-9));
}

TEST_CASE("rem_forward: shape, inference determinism, disjoint encoder parameters") {
  Config cfg = tiny_cfg();
  RemFixture fx(cfg);
  Rng rng(99);
  Tensor window = rng.gaussian_tensor(cfg.num_channels, cfg.lookback);

  Tape t1(false);
  nn::Binder b1(t1);
  RemForward f1 = fx.rem.forward(t1, b1, window, RemOptions{});
  CHECK(t1.val(f1.recon).rows() == cfg.num_channels);
  CHECK(t1.val(f1.recon).cols() == cfg.lookback);

  Tape t2(false);
  nn::Binder b2(t2);
  RemForward f2 = fx.rem.forward(t2, b2, window, RemOptions{});
  for (long i = 0; i < t1.val(f1.recon).size(); ++i)
    CHECK(t1.val(f1.recon)[i] == t2.val(f2.recon)[i]);

  // mutating the intra encoder must not change inter_attention output and
  // vice versa
  Tensor emb = rng.gaussian_tensor(fx.rem.patches() * cfg.num_channels, cfg.hidden_dim);
  Tensor emb_intra = rng.gaussian_tensor(cfg.num_channels * fx.rem.patches(), cfg.hidden_dim);
  Tape t3(false);
  nn::Binder b3(t3);
  GraphVars none;
  Var inter_before = fx.rem.inter_attention(t3, b3, t3.constant(emb), none, RemOptions{});
  Var intra_before = fx.rem.intra_attention(t3, b3, t3.constant(emb_intra), RemOptions{});
  fx.ps.find("rem.intra.attn.q.w").value.fill(0.123);
  fx.ps.find("rem.intra.ffn1.w").value.fill(-0.05);
  Tape t4(false);
  nn::Binder b4(t4);
  Var inter_after = fx.rem.inter_attention(t4, b4, t4.constant(emb), none, RemOptions{});
  Var intra_after = fx.rem.intra_attention(t4, b4, t4.constant(emb_intra), RemOptions{});
  for (long i = 0; i < t3.val(inter_before).size(); ++i)
    CHECK(t3.val(inter_before)[i] == t4.val(inter_after)[i]);
  bool intra_changed = false;
  for (long i = 0; i < t3.val(intra_before).size(); ++i)
    if (t3.val(intra_before)[i] != t4.val(intra_after)[i]) intra_changed = true;
  CHECK(intra_changed);
}

TEST_CASE("rem loss: perfect reconstruction scores zero; +1 offset gives 1.0") {
  // unit-std input so a unit offset stays a unit offset after normalization
  TimeWindow input{Tensor(2, 4), 0};
  double vals[4] = {-1, 1, -1, 1};
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i) input.values(c, i) = vals[i] * (c + 1) + 3 * c;
  SpectralPair sp = dft(input);

  CHECK(rem_loss_value(input, input, sp, sp, 1.0, 0.2) == doctest::Approx(0.0).epsilon(1e-12));

  TimeWindow shifted = input;
  for (long i = 0; i < shifted.values.size(); ++i) shifted.values[i] += 1.0;
  // channel std: c0 has std 1 exactly, c1 std 2 -> normalized offsets 1 and 0.5
  TimeWindow unit{Tensor(1, 4), 0};
  for (int i = 0; i < 4; ++i) unit.values(0, i) = vals[i];
  TimeWindow unit_shift = unit;
  for (int i = 0; i < 4; ++i) unit_shift.values(0, i) += 1.0;
  SpectralPair usp = dft(unit);
  CHECK(rem_loss_value(unit, unit_shift, usp, usp, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rem_forward gradient matches finite differences with full graph") {
  Config cfg = tiny_cfg(2, 8, 4, 2, 8);
  cfg.lambda_time = 1.0;
  cfg.lambda_freq = 0.2;
  RemFixture fx(cfg);
  Rng rng(1234);
  Tensor window = rng.gaussian_tensor(2, 8);

  RemOptions opts;
  opts.force_full_graph = true;  // masks forced to ones for the gradient contract

  auto eval = [&]() {
    Tape t(false);
    nn::Binder bind(t);
    RemForward f = fx.rem.forward(t, bind, window, opts);
    return t.val(fx.rem.loss(t, f)).item();
  };

  Tape t(true);
  nn::Binder bind(t);
  RemForward f = fx.rem.forward(t, bind, window, opts);
  Var loss = fx.rem.loss(t, f);
  t.backward(loss);
  fx.ps.zero_grads();
  bind.accumulate_grads();

  for (nn::Parameter* p : fx.ps.all()) {
    if (p->name == "rem.w_raw") continue;  // frozen under the full-graph contract
    auto rep = testing::fd_check(&p->value, eval, p->grad);
    INFO("param ", p->name);
    CHECK(rep.max_rel_err < 1e-3);
  }
}

TEST_CASE("build_graph soft path differentiates w.r.t. the distance weights") {
  Config cfg = tiny_cfg(3, 8, 4, 4, 8);
  RemFixture fx(cfg);
  Rng rng(31);
  int n = fx.rem.patches();
  Tensor emb = rng.gaussian_tensor(n * 3, 8);
  Rng prng(4);
  Tensor proj = prng.uniform_tensor(3, 3, -1, 1);

  auto eval = [&]() {
    Tape t(false);
    nn::Binder bind(t);
    GraphVars g = fx.rem.build_graph(t, bind, t.constant(emb), RemOptions{});
    double s = 0;
    for (int i = 0; i < n; ++i)
      s += t.val(ad::sum_all(t, ad::mul(t, g.prob[i], t.constant(proj)))).item();
    return s;
  };

  Tape t(true);
  nn::Binder bind(t);
  GraphVars g = fx.rem.build_graph(t, bind, t.constant(emb), RemOptions{});
  Var loss = ad::sum_all(t, ad::mul(t, g.prob[0], t.constant(proj)));
  for (int i = 1; i < n; ++i)
    loss = ad::add(t, loss, ad::sum_all(t, ad::mul(t, g.prob[i], t.constant(proj))));
  t.backward(loss);
  fx.ps.zero_grads();
  bind.accumulate_grads();

  nn::Parameter& w = fx.ps.find("rem.w_raw");
  auto rep = testing::fd_check(&w.value, eval, w.grad);
  CHECK(rep.max_rel_err < 1e-3);
}
