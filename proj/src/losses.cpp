#include "restain/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace restain::losses {

namespace F = torch::nn::functional;

SsimParams SsimParams::make(int window, bool gaussian, double sigma, double k1, double k2,
                            double dynamic_range) {
  SsimParams p;
  p.window = window;
  p.gaussian = gaussian;
  p.sigma = sigma;
  p.dynamic_range = dynamic_range;
  p.q1 = (k1 * dynamic_range) * (k1 * dynamic_range);
  p.q2 = (k2 * dynamic_range) * (k2 * dynamic_range);
  p.validate();
  return p;
}

SsimParams SsimParams::from_config(const ExperimentConfig& cfg) {
  return make(cfg.ssim_window, cfg.ssim_gaussian, cfg.ssim_sigma, cfg.ssim_k1, cfg.ssim_k2,
              cfg.ssim_dynamic_range);
}

void SsimParams::validate() const {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("ssim window must be odd and >= 3");
  if (!(q1 > 0) || !(q2 > 0)) throw std::invalid_argument("ssim q1, q2 must be > 0");
  if (!(dynamic_range > 0)) throw std::invalid_argument("ssim dynamic_range must be > 0");
  if (gaussian && !(sigma > 0)) throw std::invalid_argument("ssim gaussian sigma must be > 0");
}

torch::Tensor adversarial_loss_d(const AdversarialScores& scores) {
  const auto& real = scores.real_scores;
  const auto& fake = scores.fake_scores;
  if (!real.defined() || !fake.defined() || real.numel() == 0 || fake.numel() == 0)
    throw std::invalid_argument("adversarial_loss_d requires nonempty real and fake scores");
  if (scores.mode == AdversarialMode::LeastSquares) {
    return 0.5 * ((real - 1).pow(2).mean() + fake.pow(2).mean());
  }
  if (real.min().item<double>() <= 0.0 || real.max().item<double>() >= 1.0 ||
      fake.min().item<double>() <= 0.0 || fake.max().item<double>() >= 1.0)
    throw std::domain_error("vanilla adversarial scores must lie strictly in (0, 1)");
  return -real.log().mean() - (1 - fake).log().mean();
}

torch::Tensor adversarial_loss_g(const torch::Tensor& fake_scores, AdversarialMode mode) {
  if (!fake_scores.defined() || fake_scores.numel() == 0)
    throw std::invalid_argument("adversarial_loss_g requires nonempty fake scores");
  if (mode == AdversarialMode::LeastSquares) return (fake_scores - 1).pow(2).mean();
  if (fake_scores.min().item<double>() <= 0.0 || fake_scores.max().item<double>() >= 1.0)
    throw std::domain_error("vanilla adversarial scores must lie strictly in (0, 1)");
  return -fake_scores.log().mean();
}

torch::Tensor classifier_loss(const torch::Tensor& logits, const torch::Tensor& label_indices) {
  if (logits.dim() != 2) throw std::invalid_argument("classifier_loss expects NxC logits");
  const int64_t n = logits.size(0);
  const int64_t c = logits.size(1);
  if (n < 1) throw std::invalid_argument("classifier_loss requires at least one sample");
  if (label_indices.numel() != n)
    throw std::invalid_argument("classifier_loss label count does not match logit rows");
  auto labels = label_indices.to(torch::kLong);
  if (labels.min().item<int64_t>() < 0 || labels.max().item<int64_t>() >= c)
    throw std::invalid_argument("classifier_loss label index out of range for C=" + std::to_string(c));
  auto log_probs = torch::log_softmax(logits, 1);
  return -log_probs.gather(1, labels.view({n, 1})).mean();
}

torch::Tensor classifier_loss(const torch::Tensor& logits, const std::vector<TissueClass>& labels) {
  std::vector<int64_t> idx(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) idx[i] = class_index(labels[i]);
  return classifier_loss(logits, torch::tensor(idx, torch::kLong));
}

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes())
    throw std::invalid_argument(std::string(what) + " shape mismatch: " +
                                torch::str(a.sizes()) + " vs " + torch::str(b.sizes()));
}

}  // namespace

torch::Tensor cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                         const torch::Tensor& y, const torch::Tensor& y_rec) {
  check_same_shape(x, x_rec, "cycle_loss x");
  check_same_shape(y, y_rec, "cycle_loss y");
  return (x_rec - x).abs().mean() + (y_rec - y).abs().mean();
}

torch::Tensor classification_cycle_loss(const torch::Tensor& probs_a, const torch::Tensor& probs_b) {
  if (probs_a.dim() != 2 || probs_b.dim() != 2)
    throw std::invalid_argument("classification_cycle_loss expects NxC probability matrices");
  check_same_shape(probs_a, probs_b, "classification_cycle_loss");
  for (const auto& probs : {probs_a, probs_b}) {
    auto row_err = (probs.sum(1) - 1).abs().max().item<double>();
    if (row_err > 1e-4)
      throw std::invalid_argument(
          "classification_cycle_loss rows must sum to 1 (max deviation " + std::to_string(row_err) + ")");
  }
  return (probs_a - probs_b).abs().sum(1).mean();
}

torch::Tensor identity_loss(const torch::Tensor& x, const torch::Tensor& dec_out,
                            const torch::Tensor& y, const torch::Tensor& enc_out,
                            IdentityMode mode) {
  if (mode == IdentityMode::SameDomain) {
    check_same_shape(enc_out, y, "identity_loss enc");
    check_same_shape(dec_out, x, "identity_loss dec");
    return (enc_out - y).abs().mean() + (dec_out - x).abs().mean();
  }
  check_same_shape(enc_out, x, "identity_loss enc");
  check_same_shape(dec_out, y, "identity_loss dec");
  return (enc_out - x).abs().mean() + (dec_out - y).abs().mean();
}

namespace {

torch::Tensor make_window(const SsimParams& p, torch::Dtype dtype) {
  if (p.gaussian) {
    auto coords = torch::arange(p.window, dtype) - (p.window - 1) / 2.0;
    auto g1 = torch::exp(-coords.pow(2) / (2.0 * p.sigma * p.sigma));
    g1 = g1 / g1.sum();
    auto w = g1.unsqueeze(1).mm(g1.unsqueeze(0));
    return w.view({1, 1, p.window, p.window});
  }
  auto w = torch::full({1, 1, p.window, p.window}, 1.0 / (p.window * p.window), dtype);
  return w;
}

// Core map over (N,1,H,W) stacks; shared by the 2-D public entry point and
// the batched mean.
torch::Tensor ssim_map_stack(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p,
                             SsimMode mode) {
  p.validate();
  const int64_t h = x.size(2), w = x.size(3);
  if (p.window > h || p.window > w)
    throw std::invalid_argument("ssim window " + std::to_string(p.window) +
                                " larger than image " + std::to_string(h) + "x" + std::to_string(w));
  const int64_t pad = p.window / 2;
  auto window = make_window(p, torch::typeMetaToScalarType(x.dtype()));
  auto opts = F::PadFuncOptions({pad, pad, pad, pad}).mode(torch::kReflect);
  auto xp = F::pad(x, opts);
  auto yp = F::pad(y, opts);

  auto mu_x = torch::conv2d(xp, window);
  auto mu_y = torch::conv2d(yp, window);
  auto mu_xx = mu_x * mu_x;
  auto mu_yy = mu_y * mu_y;
  auto mu_xy = mu_x * mu_y;
  auto sigma_xx = torch::conv2d(xp * xp, window) - mu_xx;
  auto sigma_yy = torch::conv2d(yp * yp, window) - mu_yy;
  auto sigma_xy = torch::conv2d(xp * yp, window) - mu_xy;

  auto luminance = (2 * mu_xy + p.q1) / (mu_xx + mu_yy + p.q1);
  auto contrast = (2 * sigma_xy + p.q2) / (sigma_xx + sigma_yy + p.q2);
  return mode == SsimMode::StandardProduct ? luminance * contrast : luminance + contrast;
}

}  // namespace

torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y, const SsimParams& p,
                       SsimMode mode) {
  if (x.dim() != 2 || y.dim() != 2) throw std::invalid_argument("ssim_map expects HxW tensors");
  check_same_shape(x, y, "ssim_map");
  auto map = ssim_map_stack(x.view({1, 1, x.size(0), x.size(1)}),
                            y.view({1, 1, y.size(0), y.size(1)}), p, mode);
  return map.view({x.size(0), x.size(1)});
}

torch::Tensor ssim_mean(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& p,
                        SsimMode mode) {
  if (a.dim() != 4 || b.dim() != 4) throw std::invalid_argument("ssim_mean expects BxCxHxW tensors");
  check_same_shape(a, b, "ssim_mean");
  const int64_t n = a.size(0) * a.size(1);
  auto map = ssim_map_stack(a.reshape({n, 1, a.size(2), a.size(3)}),
                            b.reshape({n, 1, b.size(2), b.size(3)}), p, mode);
  return map.mean();
}

torch::Tensor ssim_loss(const torch::Tensor& x_in, const torch::Tensor& x_out,
                        const torch::Tensor& y_in, const torch::Tensor& y_out,
                        const SsimParams& p, SsimMode mode) {
  return (1 - ssim_mean(x_out, x_in, p, mode)) + (1 - ssim_mean(y_out, y_in, p, mode));
}

}  // namespace restain::losses
