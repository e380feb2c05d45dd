#pragma once

#include "redf/autodiff.hpp"
#include "redf/config.hpp"
#include "redf/core.hpp"
#include "redf/nn.hpp"
#include "redf/patching.hpp"

#include <vector>

namespace redf {

// The two horizon-step prediction streams, each (C, H) in data units.
struct ForecastPair {
  Tensor y_orig;
  Tensor y_pure;
};

struct DfmOptions {
  bool training = false;
  Rng* rng = nullptr;  // dropout noise
  nn::AttentionCapture* capture = nullptr;
};

struct DfmEmbed {
  ad::Var features;  // (C*N, D), channel-major rows
  ad::Var mean;      // (C, 1) Revin stats of the embedded window
  ad::Var stdev;
};

struct DfmStream {
  ad::Var forecast;  // (C, H) data units
  ad::Var encoded;   // (C*N, D) final encoder state (h_0 for the MSP chain)
  DfmEmbed embed;
};

// Shared-weight patch forecaster. Attention runs over the N patch tokens
// independently per channel; the embedding and output head are single
// instances shared by the main path and every MSP module.
class DfmModel {
 public:
  DfmModel(const Config& cfg, nn::ParamStore& ps, Rng& init_rng);

  // Revin -> patching -> shared embedding
  DfmEmbed embed(ad::Tape& t, nn::Binder& bind, ad::Var window) const;

  // M residual encoder layers over patch tokens
  ad::Var encode(ad::Tape& t, nn::Binder& bind, ad::Var features, const DfmOptions& opts) const;

  // flatten per channel, shared head, invert Revin
  ad::Var head(ad::Tape& t, nn::Binder& bind, ad::Var features, ad::Var mean, ad::Var stdev) const;

  // k-th auxiliary module (1-based): fuses the shared embedding of window k
  // with the previous hidden state, one encoder layer, shared head.
  std::pair<ad::Var, ad::Var> msp_step(ad::Tape& t, nn::Binder& bind, int k, ad::Var window_k,
                                       ad::Var h_prev, const DfmOptions& opts) const;  // (h_k, yhat_k)

  DfmStream run_stream(ad::Tape& t, nn::Binder& bind, ad::Var window, const DfmOptions& opts) const;

  // Both streams through the identical parameter set; no MSP modules.
  std::pair<DfmStream, DfmStream> dual_stream_forward(ad::Tape& t, nn::Binder& bind, ad::Var x0,
                                                      ad::Var x0_rec, const DfmOptions& opts) const;

  struct LossParts {
    ad::Var total;
    ad::Var pred;    // lambda_main * main + lambda_msp * sum msp
    ad::Var contra;  // MSE(yhat_0, yhat_0_rec)
  };
  // Targets in data units; msp losses only for the original stream.
  LossParts loss(ad::Tape& t, ad::Var yhat0, const std::vector<ad::Var>& yhat_msp,
                 const std::vector<Tensor>& targets, ad::Var yhat0_rec) const;

  int patches() const { return n_patches_; }
  int msp_modules() const { return static_cast<int>(msp_.size()); }

 private:
  Config cfg_;
  int n_patches_;
  IndexMap patch_map_;

  nn::LinearParams embed_;                       // p -> D, shared
  std::vector<nn::EncoderLayerParams> layers_;   // M blocks
  nn::LinearParams head_;                        // N*D -> H, shared

  struct MspModule {
    nn::LayerNormParams ln_p, ln_h;
    nn::LinearParams fuse;  // 2D -> D
    nn::EncoderLayerParams encoder;
  };
  std::vector<MspModule> msp_;
};

}  // namespace redf
