#include "restain/gradcheck.hpp"

#include <torch/torch.h>

#include <cmath>
#include <functional>
#include <sstream>

#include "restain/losses.hpp"
#include "restain/matting.hpp"

namespace restain::gradcheck {

namespace {

using LossFn = std::function<torch::Tensor(const torch::Tensor&)>;

double max_relative_error(const LossFn& fn, const torch::Tensor& input, double h,
                          double analytic_sign) {
  auto probe = input.detach().clone().set_requires_grad(true);
  auto loss = fn(probe);
  loss.backward();
  auto analytic = probe.grad().detach().clone().reshape({-1}) * analytic_sign;

  torch::NoGradGuard no_grad;
  auto flat = input.detach().clone().reshape({-1});
  const int64_t n = flat.size(0);
  double worst = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    auto plus = input.detach().clone();
    auto minus = input.detach().clone();
    plus.reshape({-1})[i] += h;
    minus.reshape({-1})[i] -= h;
    const double fp = fn(plus).item<double>();
    const double fm = fn(minus).item<double>();
    const double fd = (fp - fm) / (2.0 * h);
    const double a = analytic[i].item<double>();
    const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-6});
    worst = std::max(worst, std::fabs(a - fd) / denom);
  }
  return worst;
}

torch::Tensor rand_double(std::initializer_list<int64_t> shape, double lo, double hi) {
  return torch::rand(shape, torch::kFloat64) * (hi - lo) + lo;
}

}  // namespace

std::vector<CheckResult> run_loss_gradient_checks(const Options& opts) {
  torch::manual_seed(opts.seed);
  const int s = opts.size;
  std::vector<CheckResult> results;
  auto record = [&](const std::string& name, double err) {
    results.push_back({name, err, err < opts.tolerance});
  };

  auto x = rand_double({2, 3, s, s}, -0.9, 0.9);
  auto y = rand_double({2, 3, s, s}, -0.9, 0.9);
  auto x_rec = rand_double({2, 3, s, s}, -0.9, 0.9);
  auto y_rec = rand_double({2, 3, s, s}, -0.9, 0.9);

  record("cycle_loss/x_rec", max_relative_error(
      [&](const torch::Tensor& t) { return losses::cycle_loss(x, t, y, y_rec); }, x_rec,
      opts.fd_step, 1.0));
  record("cycle_loss/y_rec", max_relative_error(
      [&](const torch::Tensor& t) { return losses::cycle_loss(x, x_rec, y, t); }, y_rec,
      opts.fd_step, 1.0));

  auto enc_out = rand_double({2, 3, s, s}, -0.9, 0.9);
  auto dec_out = rand_double({2, 3, s, s}, -0.9, 0.9);
  record("identity_loss/enc_out", max_relative_error(
      [&](const torch::Tensor& t) {
        return losses::identity_loss(x, dec_out, y, t, IdentityMode::SameDomain);
      },
      enc_out, opts.fd_step, 1.0));
  record("identity_loss/dec_out", max_relative_error(
      [&](const torch::Tensor& t) {
        return losses::identity_loss(x, t, y, enc_out, IdentityMode::SameDomain);
      },
      dec_out, opts.fd_step, 1.0));

  auto logits = rand_double({4, kNumTissueClasses}, -2.0, 2.0);
  auto labels = torch::tensor({0L, 3L, 7L, 1L}, torch::kLong);
  record("classifier_loss/logits", max_relative_error(
      [&](const torch::Tensor& t) { return losses::classifier_loss(t, labels); }, logits,
      opts.fd_step, 1.0));

  // The default 11x11 window does not fit an 8x8 image; gradcheck uses the
  // largest odd window that does.
  const int win = std::min(11, s % 2 == 0 ? s - 1 : s);
  const auto ssim_params = losses::SsimParams::make(win, true, 1.5, 0.01, 0.03, 2.0);
  auto x_out = rand_double({1, 3, s, s}, -0.9, 0.9);
  auto y_out = rand_double({1, 3, s, s}, -0.9, 0.9);
  auto x_in = x.narrow(0, 0, 1);
  auto y_in = y.narrow(0, 0, 1);
  const double ssim_sign = opts.flip_ssim_sign ? -1.0 : 1.0;
  record("ssim_loss/x_out", max_relative_error(
      [&](const torch::Tensor& t) {
        return losses::ssim_loss(x_in, t, y_in, y_out, ssim_params, SsimMode::StandardProduct);
      },
      x_out, opts.fd_step, ssim_sign));
  record("ssim_loss/y_out", max_relative_error(
      [&](const torch::Tensor& t) {
        return losses::ssim_loss(x_in, x_out, y_in, t, ssim_params, SsimMode::StandardProduct);
      },
      y_out, opts.fd_step, ssim_sign));

  auto guide = rand_double({s, s, 3}, 0.0, 1.0);
  const auto lap = matting::build_matting_laplacian(guide, 1, 1e-7);
  auto gen = rand_double({3, s, s}, 0.0, 1.0);
  record("photorealism_quadratic/img", max_relative_error(
      [&](const torch::Tensor& t) { return matting::photorealism_quadratic(lap, t); }, gen,
      opts.fd_step, 1.0));

  // Full loss path in the asymmetric (differentiable-term-only) mode; the
  // symmetric extra term is constant under backprop by design.
  matting::LaplacianCache cache("", s, 1, 1e-7);
  matting::PhotorealismOptions pho_opts;
  pho_opts.resolution = s;
  pho_opts.symmetric = false;
  std::vector<std::string> x_ids = {"gradcheck-x"};
  std::vector<std::string> y_ids = {"gradcheck-y"};
  auto g_enc_x = rand_double({1, 3, s, s}, -0.9, 0.9);
  auto g_dec_y = rand_double({1, 3, s, s}, -0.9, 0.9);
  record("photorealism_loss/g_enc_x", max_relative_error(
      [&](const torch::Tensor& t) {
        return matting::photorealism_loss(x_in, t, y_in, g_dec_y, x_ids, y_ids, cache, pho_opts);
      },
      g_enc_x, opts.fd_step, 1.0));

  return results;
}

bool all_pass(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return !results.empty();
}

std::string format_results(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-28s max_rel_err=%.3e  %s\n", r.name.c_str(),
                  r.max_rel_err, r.pass ? "ok" : "FAIL");
    os << line;
  }
  return os.str();
}

}  // namespace restain::gradcheck
