#pragma once

#include "redf/autodiff.hpp"
#include "redf/rng.hpp"
#include "redf/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace redf::nn {

// A named learnable tensor plus its gradient accumulator and Adam state.
struct Parameter {
  std::string name;
  int index = -1;  // position in the owning store
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;

  Parameter(std::string n, int idx, Tensor v)
      : name(std::move(n)),
        index(idx),
        value(std::move(v)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()) {}
};

class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init);
  Parameter& find(const std::string& name);  // throws DataError when missing
  bool contains(const std::string& name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grads();
  long total_size() const;

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

// Tracks which tape leaf carries each parameter during one forward pass so
// gradients can be pulled back into the store afterwards.
class Binder {
 public:
  explicit Binder(ad::Tape& tape) : tape_(&tape) {}
  ad::Var operator()(Parameter& p);
  ad::Var operator()(const Parameter& p) { return (*this)(const_cast<Parameter&>(p)); }
  // adds tape gradients into Parameter::grad, scaled by k
  void accumulate_grads(double k = 1.0);
  // adds tape gradients into an external buffer aligned with Parameter::index
  // (thread-shard accumulation)
  void accumulate_to(std::vector<Tensor>& by_index) const;

 private:
  ad::Tape* tape_;
  std::vector<std::pair<Parameter*, ad::Var>> bound_;
};

// ---- layer parameter bundles ----

struct LinearParams {
  Parameter* w = nullptr;  // (in, out)
  Parameter* b = nullptr;  // (1, out)
};

struct LayerNormParams {
  Parameter* gain = nullptr;  // (1, d)
  Parameter* bias = nullptr;  // (1, d)
};

struct AttentionParams {
  LinearParams q, k, v, o;
  int heads = 4;
};

struct EncoderLayerParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  LinearParams ffn1, ffn2;  // d -> 4d -> d
};

LinearParams make_linear(ParamStore& ps, const std::string& name, int in, int out, Rng& rng);
LayerNormParams make_layer_norm(ParamStore& ps, const std::string& name, int d);
EncoderLayerParams make_encoder_layer(ParamStore& ps, const std::string& name, int d, int heads, Rng& rng);

// ---- functional pieces ----

ad::Var linear(ad::Tape& t, Binder& bind, ad::Var x, const LinearParams& p);
ad::Var layer_norm(ad::Tape& t, Binder& bind, ad::Var x, const LayerNormParams& p);

// Per-sample dropout/noise context. Inactive when rate == 0 or rng == null.
struct DropoutCtx {
  Rng* rng = nullptr;
  double rate = 0.0;
  bool active() const { return rng != nullptr && rate > 0.0; }
};
ad::Var dropout(ad::Tape& t, ad::Var x, const DropoutCtx& ctx);

// Captured attention probability matrices (one per (block, head)), for tests.
struct AttentionCapture {
  std::vector<Tensor> weights;
};

// Multi-head self-attention over `tokens` consecutive row blocks of x.
// x is (blocks*tokens, d); block i occupies rows [i*tokens, (i+1)*tokens).
// logit_bias, when provided, holds one (tokens, tokens) additive bias per
// block (use -inf entries for hard masking).
ad::Var multi_head_attention(ad::Tape& t, Binder& bind, ad::Var x, int tokens,
                             const AttentionParams& p, const std::vector<ad::Var>* logit_bias,
                             const DropoutCtx& drop, AttentionCapture* capture = nullptr);

ad::Var ffn(ad::Tape& t, Binder& bind, ad::Var x, const EncoderLayerParams& p, const DropoutCtx& drop);

// Standard pre-LN transformer block: x + Attn(LN1(x)), then + FFN(LN2(.)).
// Zero-initialized sublayers make it the identity.
ad::Var encoder_block(ad::Tape& t, Binder& bind, ad::Var x, int tokens, const EncoderLayerParams& p,
                      const std::vector<ad::Var>* logit_bias, const DropoutCtx& drop,
                      AttentionCapture* capture = nullptr);

// Encoder layer with the normalized-residual wiring used by the
// reconstruction model: x' = LN1(x); x* = x' + Attn(x'); out = x* + FFN(LN2(x*)).
ad::Var norm_residual_encoder(ad::Tape& t, Binder& bind, ad::Var x, int tokens,
                              const EncoderLayerParams& p, const std::vector<ad::Var>* logit_bias,
                              const DropoutCtx& drop, AttentionCapture* capture = nullptr);

}  // namespace redf::nn
