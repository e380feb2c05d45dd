#include "redf/dfm.hpp"

#include "redf/errors.hpp"

namespace redf {

using ad::Tape;
using ad::Var;

DfmModel::DfmModel(const Config& cfg, nn::ParamStore& ps, Rng& init_rng)
    : cfg_(cfg),
      n_patches_(cfg.patch_count()),
      patch_map_(time_patch_map(cfg.num_channels, cfg.lookback, cfg.patch_size, cfg.patch_stride)) {
  int d = cfg.hidden_dim;
  embed_ = nn::make_linear(ps, "dfm.embed", cfg.patch_size, d, init_rng);
  for (int m = 0; m < cfg.encoder_layers; ++m)
    layers_.push_back(nn::make_encoder_layer(ps, "dfm.layer" + std::to_string(m), d,
                                             cfg.attention_heads, init_rng));
  head_ = nn::make_linear(ps, "dfm.head", n_patches_ * d, cfg.horizon, init_rng);
  for (int k = 1; k <= cfg.msp_count; ++k) {
    MspModule mod;
    std::string base = "dfm.msp" + std::to_string(k);
    mod.ln_p = nn::make_layer_norm(ps, base + ".ln_p", d);
    mod.ln_h = nn::make_layer_norm(ps, base + ".ln_h", d);
    mod.fuse = nn::make_linear(ps, base + ".fuse", 2 * d, d, init_rng);
    mod.encoder = nn::make_encoder_layer(ps, base + ".encoder", d, cfg.attention_heads, init_rng);
    msp_.push_back(mod);
  }
}

DfmEmbed DfmModel::embed(Tape& t, nn::Binder& bind, Var window) const {
  const Tensor& w = t.val(window);
  if (w.rows() != cfg_.num_channels || w.cols() != cfg_.lookback)
    throw DataError("dfm: window shape mismatch");
  auto norm = ad::instance_norm(t, window, cfg_.epsilon);
  Var patches = ad::gather(t, norm.normalized, patch_map_, cfg_.num_channels * n_patches_,
                           cfg_.patch_size);
  DfmEmbed e;
  e.features = nn::linear(t, bind, patches, embed_);
  e.mean = norm.mean;
  e.stdev = norm.stdev;
  return e;
}

Var DfmModel::encode(Tape& t, nn::Binder& bind, Var features, const DfmOptions& opts) const {
  nn::DropoutCtx drop{opts.training ? opts.rng : nullptr, cfg_.dropout};
  Var h = features;
  for (const auto& layer : layers_)
    h = nn::encoder_block(t, bind, h, n_patches_, layer, nullptr, drop, opts.capture);
  return h;
}

Var DfmModel::head(Tape& t, nn::Binder& bind, Var features, Var mean, Var stdev) const {
  Var flat = ad::reshape(t, features, cfg_.num_channels, n_patches_ * cfg_.hidden_dim);
  Var y = nn::linear(t, bind, flat, head_);
  return ad::instance_denorm(t, y, mean, stdev);
}

std::pair<Var, Var> DfmModel::msp_step(Tape& t, nn::Binder& bind, int k, Var window_k, Var h_prev,
                                       const DfmOptions& opts) const {
  if (k < 1 || k > static_cast<int>(msp_.size()))
    throw DataError("msp_step: module index out of range");
  const MspModule& mod = msp_[k - 1];
  nn::DropoutCtx drop{opts.training ? opts.rng : nullptr, cfg_.dropout};
  DfmEmbed e = embed(t, bind, window_k);
  Var p_norm = nn::layer_norm(t, bind, e.features, mod.ln_p);
  Var h_norm = nn::layer_norm(t, bind, h_prev, mod.ln_h);
  Var fused = nn::linear(t, bind, ad::concat_cols(t, {p_norm, h_norm}), mod.fuse);
  Var h_k = nn::encoder_block(t, bind, fused, n_patches_, mod.encoder, nullptr, drop, opts.capture);
  Var yhat = head(t, bind, h_k, e.mean, e.stdev);
  return {h_k, yhat};
}

DfmStream DfmModel::run_stream(Tape& t, nn::Binder& bind, Var window, const DfmOptions& opts) const {
  DfmStream s;
  s.embed = embed(t, bind, window);
  s.encoded = encode(t, bind, s.embed.features, opts);
  s.forecast = head(t, bind, s.encoded, s.embed.mean, s.embed.stdev);
  return s;
}

std::pair<DfmStream, DfmStream> DfmModel::dual_stream_forward(Tape& t, nn::Binder& bind, Var x0,
                                                              Var x0_rec,
                                                              const DfmOptions& opts) const {
  DfmStream orig = run_stream(t, bind, x0, opts);
  DfmStream pure = run_stream(t, bind, x0_rec, opts);
  return {orig, pure};
}

DfmModel::LossParts DfmModel::loss(Tape& t, Var yhat0, const std::vector<Var>& yhat_msp,
                                   const std::vector<Tensor>& targets, Var yhat0_rec) const {
  if (targets.size() != yhat_msp.size() + 1)
    throw DataError("dfm loss: need one target per prediction");
  LossParts parts;
  Var l_main = ad::mse(t, yhat0, t.constant(targets[0]));
  Var pred = ad::scale(t, l_main, cfg_.lambda_main);
  if (!yhat_msp.empty()) {
    Var l_msp = ad::mse(t, yhat_msp[0], t.constant(targets[1]));
    for (size_t k = 1; k < yhat_msp.size(); ++k)
      l_msp = ad::add(t, l_msp, ad::mse(t, yhat_msp[k], t.constant(targets[k + 1])));
    pred = ad::add(t, pred, ad::scale(t, l_msp, cfg_.lambda_msp));
  }
  parts.pred = pred;
  parts.contra = ad::mse(t, yhat0, yhat0_rec);
  parts.total = ad::add(t, pred, ad::scale(t, parts.contra, cfg_.lambda_contra));
  return parts;
}

}  // namespace redf
