#include "redf/nn.hpp"

#include "redf/errors.hpp"

#include <cmath>

namespace redf::nn {

using ad::Tape;
using ad::Var;

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw DataError("duplicate parameter name: " + name);
  items_.push_back(std::make_unique<Parameter>(name, static_cast<int>(items_.size()), std::move(init)));
  return *items_.back();
}

Parameter& ParamStore::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return *p;
  throw DataError("unknown parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& p : items_)
    if (p->name == name) return true;
  return false;
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->grad.set_zero();
}

long ParamStore::total_size() const {
  long n = 0;
  for (const auto& p : items_) n += p->value.size();
  return n;
}

Var Binder::operator()(Parameter& p) {
  Var v = tape_->leaf(p.value);
  if (tape_->grad_enabled()) bound_.emplace_back(&p, v);
  return v;
}

void Binder::accumulate_grads(double k) {
  for (auto& [p, v] : bound_) {
    if (!tape_->grad_touched(v)) continue;
    Tensor g = tape_->grad(v);
    if (k == 1.0)
      p->grad.map() += g.map();
    else
      p->grad.map() += k * g.map();
  }
}

void Binder::accumulate_to(std::vector<Tensor>& by_index) const {
  for (const auto& [p, v] : bound_) {
    if (!tape_->grad_touched(v)) continue;
    Tensor g = tape_->grad(v);
    Tensor& dst = by_index[p->index];
    if (dst.empty()) dst = Tensor(g.rows(), g.cols());
    dst.map() += g.map();
  }
}

LinearParams make_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng) {
  double limit = std::sqrt(6.0 / (in + out));
  LinearParams p;
  p.w = &ps.add(name + ".w", rng.uniform_tensor(in, out, -limit, limit));
  p.b = &ps.add(name + ".b", Tensor(1, out));
  return p;
}

LayerNormParams make_layer_norm(ParamStore& ps, const std::string& name, int d) {
  LayerNormParams p;
  p.gain = &ps.add(name + ".gain", Tensor::full(1, d, 1.0));
  p.bias = &ps.add(name + ".bias", Tensor(1, d));
  return p;
}

EncoderLayerParams make_encoder_layer(ParamStore& ps, const std::string& name, int d, int heads, Rng& rng) {
  EncoderLayerParams p;
  p.ln1 = make_layer_norm(ps, name + ".ln1", d);
  p.ln2 = make_layer_norm(ps, name + ".ln2", d);
  p.attn.q = make_linear(ps, name + ".attn.q", d, d, rng);
  p.attn.k = make_linear(ps, name + ".attn.k", d, d, rng);
  p.attn.v = make_linear(ps, name + ".attn.v", d, d, rng);
  p.attn.o = make_linear(ps, name + ".attn.o", d, d, rng);
  p.attn.heads = heads;
  p.ffn1 = make_linear(ps, name + ".ffn1", d, 4 * d, rng);
  p.ffn2 = make_linear(ps, name + ".ffn2", 4 * d, d, rng);
  return p;
}

Var linear(Tape& t, Binder& bind, Var x, const LinearParams& p) {
  return ad::affine(t, x, bind(*p.w), bind(*p.b));
}

Var layer_norm(Tape& t, Binder& bind, Var x, const LayerNormParams& p) {
  return ad::layer_norm(t, x, bind(*p.gain), bind(*p.bias));
}

Var dropout(Tape& t, Var x, const DropoutCtx& ctx) {
  if (!ctx.active()) return x;
  const Tensor& xv = t.val(x);
  double keep = 1.0 - ctx.rate;
  Tensor mask(xv.rows(), xv.cols());
  for (long i = 0; i < mask.size(); ++i) mask[i] = ctx.rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ad::mul(t, x, t.constant(std::move(mask)));
}

Var multi_head_attention(Tape& t, Binder& bind, Var x, int tokens, const AttentionParams& p,
                         const std::vector<Var>* logit_bias, const DropoutCtx& drop,
                         AttentionCapture* capture) {
  const Tensor& xv = t.val(x);
  int total = xv.rows();
  int d = xv.cols();
  assert(total % tokens == 0);
  int blocks = total / tokens;
  int heads = p.heads;
  assert(d % heads == 0);
  int dh = d / heads;
  double scl = 1.0 / std::sqrt(static_cast<double>(dh));

  Var q = linear(t, bind, x, p.q);
  Var k = linear(t, bind, x, p.k);
  Var v = linear(t, bind, x, p.v);

  std::vector<Var> block_outs;
  block_outs.reserve(blocks);
  for (int b = 0; b < blocks; ++b) {
    int r0 = b * tokens, r1 = (b + 1) * tokens;
    std::vector<Var> head_outs;
    head_outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      int c0 = h * dh, c1 = (h + 1) * dh;
      Var qh = ad::block(t, q, r0, r1, c0, c1);
      Var kh = ad::block(t, k, r0, r1, c0, c1);
      Var vh = ad::block(t, v, r0, r1, c0, c1);
      Var scores = ad::scale(t, ad::matmul(t, qh, kh, false, true), scl);
      if (logit_bias) scores = ad::add(t, scores, (*logit_bias)[b]);
      Var attn = ad::softmax_rows(t, scores);
      if (capture) capture->weights.push_back(t.val(attn));
      attn = dropout(t, attn, drop);
      head_outs.push_back(ad::matmul(t, attn, vh));
    }
    block_outs.push_back(heads == 1 ? head_outs[0] : ad::concat_cols(t, head_outs));
  }
  Var merged = blocks == 1 ? block_outs[0] : ad::concat_rows(t, block_outs);
  return linear(t, bind, merged, p.o);
}

Var ffn(Tape& t, Binder& bind, Var x, const EncoderLayerParams& p, const DropoutCtx& drop) {
  Var h = ad::gelu(t, linear(t, bind, x, p.ffn1));
  h = dropout(t, h, drop);
  return linear(t, bind, h, p.ffn2);
}

Var encoder_block(Tape& t, Binder& bind, Var x, int tokens, const EncoderLayerParams& p,
                  const std::vector<Var>* logit_bias, const DropoutCtx& drop,
                  AttentionCapture* capture) {
  Var a = multi_head_attention(t, bind, layer_norm(t, bind, x, p.ln1), tokens, p.attn, logit_bias,
                               drop, capture);
  Var u = ad::add(t, x, a);
  return ad::add(t, u, ffn(t, bind, layer_norm(t, bind, u, p.ln2), p, drop));
}

Var norm_residual_encoder(Tape& t, Binder& bind, Var x, int tokens, const EncoderLayerParams& p,
                          const std::vector<Var>* logit_bias, const DropoutCtx& drop,
                          AttentionCapture* capture) {
  Var xn = layer_norm(t, bind, x, p.ln1);
  Var a = multi_head_attention(t, bind, xn, tokens, p.attn, logit_bias, drop, capture);
  Var xs = ad::add(t, xn, a);
  return ad::add(t, xs, ffn(t, bind, layer_norm(t, bind, xs, p.ln2), p, drop));
}

}  // namespace redf::nn
