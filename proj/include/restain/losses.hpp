#pragma once

#include <torch/torch.h>

#include <vector>

#include "restain/core.hpp"

namespace restain::losses {

// Window statistics configuration for the per-pixel structural similarity
// map. q1/q2 stabilize the two ratios; they derive from (k * dynamic_range)^2
// via make() but can be set directly for experiments.
struct SsimParams {
  int window = 11;
  bool gaussian = true;
  double sigma = 1.5;
  double q1 = 4e-4;  // (0.01 * 2)^2
  double q2 = 3.6e-3;  // (0.03 * 2)^2
  double dynamic_range = 2.0;

  static SsimParams make(int window = 11, bool gaussian = true, double sigma = 1.5,
                         double k1 = 0.01, double k2 = 0.03, double dynamic_range = 2.0);
  static SsimParams from_config(const ExperimentConfig& cfg);
  void validate() const;
};

struct AdversarialScores {
  torch::Tensor real_scores;
  torch::Tensor fake_scores;
  AdversarialMode mode = AdversarialMode::LeastSquares;
};

// Discriminator-side conditional adversarial loss. Least-squares:
// 0.5 * [mean((real-1)^2) + mean(fake^2)]; vanilla:
// -mean(log(real)) - mean(log(1-fake)), scores must lie in (0,1).
torch::Tensor adversarial_loss_d(const AdversarialScores& scores);

// Generator-side counterpart: least-squares mean((fake-1)^2), vanilla
// -mean(log(fake)).
torch::Tensor adversarial_loss_g(const torch::Tensor& fake_scores, AdversarialMode mode);

// Softmax cross entropy, mean over samples. logits: NxC.
torch::Tensor classifier_loss(const torch::Tensor& logits, const std::vector<TissueClass>& labels);
torch::Tensor classifier_loss(const torch::Tensor& logits, const torch::Tensor& label_indices);

// mean|x_rec - x|_1 + mean|y_rec - y|_1.
torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                         const torch::Tensor& y, const torch::Tensor& y_rec);

// Mean row-wise L1 distance between paired softmax outputs (rows must sum
// to 1 within 1e-4).
torch::Tensor classification_cycle_loss(const torch::Tensor& probs_a, const torch::Tensor& probs_b);

// Identity regularizer. enc_out is always G_enc applied to its identity
// input, dec_out is G_dec applied to its identity input; the mode decides
// both the pairing and which identity input the caller must have used:
//   SameDomain:   mean|enc_out - y|_1 + mean|dec_out - x|_1, dec_out = G_dec(x)
//   PaperLiteral: mean|enc_out - x|_1 + mean|dec_out - y|_1, dec_out = G_dec(y)
torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& dec_out,
                            const torch::Tensor& y, const torch::Tensor& enc_out,
                            IdentityMode mode);

// Per-pixel SSIM over single-channel images (reflection-padded window
// statistics). StandardProduct: luminance * contrast-structure, in [-1,1].
// PaperSum: luminance + contrast-structure, in [-2,2].
torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p,
                       SsimMode mode);

// Mean SSIM over a BxCxHxW batch: per-channel maps averaged over channels,
// pixels and batch.
torch::Tensor ssim_mean(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& p,
                        SsimMode mode);

// (1 - mean Ssim(x_out, x_in)) + (1 - mean Ssim(y_out, y_in)).
torch::Tensor ssim_loss(const torch::Tensor& x_in, const torch::Tensor& x_out,
                        const torch::Tensor& y_in, const torch::Tensor& y_out,
                        const SsimParams& p, SsimMode mode);

}  // namespace restain::losses
