#pragma once

#include "redf/autodiff.hpp"
#include "redf/config.hpp"
#include "redf/core.hpp"
#include "redf/nn.hpp"
#include "redf/patching.hpp"
#include "redf/spectral.hpp"

#include <vector>

namespace redf {

// Value snapshot of the per-patch channel relationship graph.
struct SimilarityGraph {
  int patches = 0;
  int channels = 0;
  std::vector<Tensor> similarity;  // (C, C) per patch, symmetric
  std::vector<Tensor> prob;        // (C, C), diagonal exactly 1
  std::vector<Tensor> mask;        // (C, C); binary mode: {0,1}; soft mode: prob
};

// Tape-level graph state consumed by the masked attention.
struct GraphVars {
  std::vector<ad::Var> similarity;
  std::vector<ad::Var> prob;
  std::vector<ad::Var> bias;       // additive logit bias per patch (invalid when unmasked)
  std::vector<Tensor> mask_hard;   // binary masks (binary mode only)
  bool masked = false;             // whether bias should be applied
};

struct RemOptions {
  bool training = false;
  Rng* rng = nullptr;               // gumbel + dropout noise (training only)
  bool force_full_graph = false;    // all-ones masks, no sampling (testing hook)
  nn::AttentionCapture* capture_inter = nullptr;
  nn::AttentionCapture* capture_intra = nullptr;
};

struct RemForward {
  ad::Var x_norm;       // (C, L) normalized input
  ad::Var mean, stdev;  // (C, 1)
  ad::Var spec_in_re, spec_in_im;    // spectra of the normalized input
  ad::Var spec_rec_re, spec_rec_im;  // reconstructed spectra (normalized space)
  ad::Var recon_norm;   // (C, L) normalized-space reconstruction
  ad::Var recon;        // (C, L) data units
  SimilarityGraph graph;
};

// Frequency-domain reconstruction model: graph-masked inter-series attention
// and intra-series attention over frequency patches, projected back to a
// purified time-domain window.
class RemModel {
 public:
  RemModel(const Config& cfg, nn::ParamStore& ps, Rng& init_rng);

  // spectra (C, L) each -> (inter (N*C, 2p), intra (C*N, 2p))
  std::pair<ad::Var, ad::Var> patch_frequency(ad::Tape& t, ad::Var re, ad::Var im) const;

  std::pair<ad::Var, ad::Var> embed(ad::Tape& t, nn::Binder& bind, ad::Var inter2p, ad::Var intra2p) const;

  GraphVars build_graph(ad::Tape& t, nn::Binder& bind, ad::Var inter_embedded,
                        const RemOptions& opts) const;

  ad::Var inter_attention(ad::Tape& t, nn::Binder& bind, ad::Var inter_embedded,
                          const GraphVars& graph, const RemOptions& opts) const;

  ad::Var intra_attention(ad::Tape& t, nn::Binder& bind, ad::Var intra_embedded,
                          const RemOptions& opts) const;

  std::pair<ad::Var, ad::Var> fuse_and_project(ad::Tape& t, nn::Binder& bind, ad::Var inter_out,
                                               ad::Var intra_out) const;

  RemForward forward(ad::Tape& t, nn::Binder& bind, const Tensor& window,
                     const RemOptions& opts) const;

  // lambda_time * MSE(x_norm, recon_norm)
  //   + lambda_freq * (MSE(re_in, re_rec) + MSE(im_in, im_rec))
  ad::Var loss(ad::Tape& t, const RemForward& f) const;

  SimilarityGraph snapshot_graph(ad::Tape& t, const GraphVars& g) const;

  int patches() const { return n_patches_; }
  const DftBasis& basis() const { return basis_; }

 private:
  Config cfg_;
  int n_patches_;
  DftBasis basis_;
  IndexMap inter_map_, intra_map_, transpose_map_;

  nn::LinearParams embed_inter_, embed_intra_;
  nn::Parameter* w_raw_ = nullptr;  // softplus reparameterized distance weights (1, D)
  nn::EncoderLayerParams inter_layer_, intra_layer_;
  nn::LinearParams proj_real_, proj_imag_;
};

// Convenience value-level loss matching the op contract: both windows are
// normalized with the input window's statistics.
double rem_loss_value(const TimeWindow& input, const TimeWindow& recon, const SpectralPair& spec_in,
                      const SpectralPair& spec_rec, double lambda_time, double lambda_freq,
                      double eps = 1e-5);

}  // namespace redf
