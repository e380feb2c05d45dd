#include "redf/rem.hpp"

#include "redf/errors.hpp"

#include <cmath>

namespace redf {

using ad::Tape;
using ad::Var;

namespace {
constexpr double kProbClamp = 1e-12;
}

RemModel::RemModel(const Config& cfg, nn::ParamStore& ps, Rng& init_rng)
    : cfg_(cfg),
      n_patches_(cfg.patch_count()),
      basis_(cfg.lookback),
      inter_map_(freq_patch_map_inter(cfg.num_channels, cfg.lookback, cfg.patch_size, cfg.patch_stride)),
      intra_map_(freq_patch_map_intra(cfg.num_channels, cfg.lookback, cfg.patch_size, cfg.patch_stride)),
      transpose_map_(inter_to_intra_map(n_patches_, cfg.num_channels, cfg.hidden_dim)) {
  int two_p = 2 * cfg.patch_size;
  int d = cfg.hidden_dim;
  embed_inter_ = nn::make_linear(ps, "rem.embed_inter", two_p, d, init_rng);
  embed_intra_ = nn::make_linear(ps, "rem.embed_intra", two_p, d, init_rng);
  // softplus(w_raw) == 1 at start
  w_raw_ = &ps.add("rem.w_raw", Tensor::full(1, d, std::log(std::exp(1.0) - 1.0)));
  inter_layer_ = nn::make_encoder_layer(ps, "rem.inter", d, cfg.attention_heads, init_rng);
  intra_layer_ = nn::make_encoder_layer(ps, "rem.intra", d, cfg.attention_heads, init_rng);
  proj_real_ = nn::make_linear(ps, "rem.proj_real", n_patches_ * d, cfg.lookback, init_rng);
  proj_imag_ = nn::make_linear(ps, "rem.proj_imag", n_patches_ * d, cfg.lookback, init_rng);
}

std::pair<Var, Var> RemModel::patch_frequency(Tape& t, Var re, Var im) const {
  Var pair = ad::concat_cols(t, {re, im});  // (C, 2L)
  int c = cfg_.num_channels, p = cfg_.patch_size;
  Var inter = ad::gather(t, pair, inter_map_, n_patches_ * c, 2 * p);
  Var intra = ad::gather(t, pair, intra_map_, c * n_patches_, 2 * p);
  return {inter, intra};
}

std::pair<Var, Var> RemModel::embed(Tape& t, nn::Binder& bind, Var inter2p, Var intra2p) const {
  return {nn::linear(t, bind, inter2p, embed_inter_), nn::linear(t, bind, intra2p, embed_intra_)};
}

GraphVars RemModel::build_graph(Tape& t, nn::Binder& bind, Var inter_embedded,
                                const RemOptions& opts) const {
  GraphVars g;
  int c = cfg_.num_channels;
  Var w = ad::softplus(t, bind(*w_raw_));
  bool binary = cfg_.mask_mode == "binary";
  for (int i = 0; i < n_patches_; ++i) {
    Var feats = ad::abs_(t, ad::rows(t, inter_embedded, i * c, (i + 1) * c));
    Var dist = ad::pairwise_weighted_l1(t, feats, w);
    Var sim = ad::reciprocal(t, ad::add_scalar(t, dist, cfg_.epsilon));
    Var prob = ad::div(t, sim, ad::row_max_bcast(t, sim));  // diagonal is the row max -> 1
    g.similarity.push_back(sim);
    g.prob.push_back(prob);
    if (opts.force_full_graph) continue;
    if (binary) {
      Tensor hard(c, c);
      if (opts.training && opts.rng != nullptr) {
        // relaxed Bernoulli: sigmoid((logit(p) + logistic noise) / tau),
        // hard forward values, straight-through backward
        Var pc = ad::clamp(t, prob, kProbClamp, 1.0 - kProbClamp);
        Var one_minus = ad::add_scalar(t, ad::scale(t, pc, -1.0), 1.0);
        Var logit = ad::sub(t, ad::log_(t, pc), ad::log_(t, one_minus));
        Tensor noise(c, c);
        for (long k = 0; k < noise.size(); ++k) {
          double u = opts.rng->uniform_open();
          noise[k] = std::log(u) - std::log1p(-u);
        }
        Var relaxed = ad::sigmoid(
            t, ad::scale(t, ad::add(t, logit, t.constant(std::move(noise))), 1.0 / cfg_.gumbel_temperature));
        const Tensor& soft = t.val(relaxed);
        for (int m = 0; m < c; ++m)
          for (int n = 0; n < c; ++n) hard(m, n) = (m == n || soft(m, n) >= 0.5) ? 1.0 : 0.0;
        g.bias.push_back(ad::log_st_gate(t, relaxed, hard));
      } else {
        const Tensor& pv = t.val(prob);
        for (int m = 0; m < c; ++m)
          for (int n = 0; n < c; ++n) hard(m, n) = (m == n || pv(m, n) >= 0.5) ? 1.0 : 0.0;
        Tensor bias(c, c);
        for (long k = 0; k < bias.size(); ++k)
          bias[k] = hard[k] > 0.5 ? 0.0 : -std::numeric_limits<double>::infinity();
        g.bias.push_back(t.constant(std::move(bias)));
      }
      g.mask_hard.push_back(hard);
    } else {
      g.bias.push_back(ad::log_(t, ad::clamp(t, prob, kProbClamp, 1.0)));
    }
  }
  g.masked = !opts.force_full_graph;
  return g;
}

Var RemModel::inter_attention(Tape& t, nn::Binder& bind, Var inter_embedded, const GraphVars& graph,
                              const RemOptions& opts) const {
  nn::DropoutCtx drop{opts.training ? opts.rng : nullptr, cfg_.dropout};
  const std::vector<Var>* bias = graph.masked && !graph.bias.empty() ? &graph.bias : nullptr;
  return nn::norm_residual_encoder(t, bind, inter_embedded, cfg_.num_channels, inter_layer_, bias,
                                   drop, opts.capture_inter);
}

Var RemModel::intra_attention(Tape& t, nn::Binder& bind, Var intra_embedded,
                              const RemOptions& opts) const {
  nn::DropoutCtx drop{opts.training ? opts.rng : nullptr, cfg_.dropout};
  return nn::norm_residual_encoder(t, bind, intra_embedded, n_patches_, intra_layer_, nullptr, drop,
                                   opts.capture_intra);
}

std::pair<Var, Var> RemModel::fuse_and_project(Tape& t, nn::Binder& bind, Var inter_out,
                                               Var intra_out) const {
  int c = cfg_.num_channels, d = cfg_.hidden_dim;
  Var inter_t = ad::gather(t, inter_out, transpose_map_, c * n_patches_, d);
  Var fused = ad::scale(t, ad::add(t, inter_t, intra_out), 0.5);  // elementwise mean
  Var flat = ad::reshape(t, fused, c, n_patches_ * d);
  return {nn::linear(t, bind, flat, proj_real_), nn::linear(t, bind, flat, proj_imag_)};
}

RemForward RemModel::forward(Tape& t, nn::Binder& bind, const Tensor& window,
                             const RemOptions& opts) const {
  if (window.rows() != cfg_.num_channels || window.cols() != cfg_.lookback)
    throw DataError("rem: window shape mismatch");
  RemForward f;
  Var x = t.constant(window);
  auto norm = ad::instance_norm(t, x, cfg_.epsilon);
  f.x_norm = norm.normalized;
  f.mean = norm.mean;
  f.stdev = norm.stdev;
  std::tie(f.spec_in_re, f.spec_in_im) = dft(t, f.x_norm, basis_);
  auto [inter2p, intra2p] = patch_frequency(t, f.spec_in_re, f.spec_in_im);
  auto [inter_e, intra_e] = embed(t, bind, inter2p, intra2p);
  bool graphless = !cfg_.use_graph;
  RemOptions eff = opts;
  if (graphless) eff.force_full_graph = true;
  GraphVars graph = build_graph(t, bind, inter_e, eff);
  Var inter_o = inter_attention(t, bind, inter_e, graph, opts);
  Var intra_o = intra_attention(t, bind, intra_e, opts);
  std::tie(f.spec_rec_re, f.spec_rec_im) = fuse_and_project(t, bind, inter_o, intra_o);
  f.recon_norm = idft(t, f.spec_rec_re, f.spec_rec_im, basis_);
  f.recon = ad::instance_denorm(t, f.recon_norm, f.mean, f.stdev);
  f.graph = snapshot_graph(t, graph);
  return f;
}

Var RemModel::loss(Tape& t, const RemForward& f) const {
  Var l_time = ad::mse(t, f.x_norm, f.recon_norm);
  Var l_freq = ad::add(t, ad::mse(t, f.spec_in_re, f.spec_rec_re),
                       ad::mse(t, f.spec_in_im, f.spec_rec_im));
  return ad::add(t, ad::scale(t, l_time, cfg_.lambda_time), ad::scale(t, l_freq, cfg_.lambda_freq));
}

SimilarityGraph RemModel::snapshot_graph(Tape& t, const GraphVars& g) const {
  SimilarityGraph s;
  s.patches = n_patches_;
  s.channels = cfg_.num_channels;
  for (int i = 0; i < static_cast<int>(g.similarity.size()); ++i) {
    s.similarity.push_back(t.val(g.similarity[i]));
    s.prob.push_back(t.val(g.prob[i]));
    if (i < static_cast<int>(g.mask_hard.size()) && !g.mask_hard.empty())
      s.mask.push_back(g.mask_hard[i]);
    else if (!g.masked)
      s.mask.push_back(Tensor::full(s.channels, s.channels, 1.0));
    else if (i < static_cast<int>(g.prob.size()))
      s.mask.push_back(t.val(g.prob[i]));  // soft mode: relaxed mask values
  }
  return s;
}

double rem_loss_value(const TimeWindow& input, const TimeWindow& recon, const SpectralPair& spec_in,
                      const SpectralPair& spec_rec, double lambda_time, double lambda_freq,
                      double eps) {
  auto [norm_in, stats] = instance_normalize(input, eps);
  TimeWindow recon_norm{Tensor(recon.values.rows(), recon.values.cols()), recon.origin_index};
  for (int c = 0; c < recon.values.rows(); ++c)
    for (int i = 0; i < recon.values.cols(); ++i)
      recon_norm.values(c, i) = (recon.values(c, i) - stats.mean(c, 0)) / stats.stdev(c, 0);
  auto mse_v = [](const Tensor& a, const Tensor& b) {
    double s = 0;
    for (long i = 0; i < a.size(); ++i) {
      double d = a[i] - b[i];
      s += d * d;
    }
    return s / static_cast<double>(a.size());
  };
  double l_time = mse_v(norm_in.values, recon_norm.values);
  double l_freq = mse_v(spec_in.real, spec_rec.real) + mse_v(spec_in.imag, spec_rec.imag);
  return lambda_time * l_time + lambda_freq * l_freq;
}

}  // namespace redf
