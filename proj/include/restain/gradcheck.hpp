#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace restain::gradcheck {

struct CheckResult {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

struct Options {
  uint64_t seed = 1;
  int size = 8;
  double fd_step = 1e-3;
  double tolerance = 1e-4;
  // Test-harness hook: negates the analytic SSIM gradient before comparison
  // so the negative control fails as it should.
  bool flip_ssim_sign = false;
};

// Central-finite-difference verification of the analytic gradients of the
// cycle, identity, classifier, SSIM and photorealism losses, in double
// precision, with respect to their generated/differentiable inputs.
std::vector<CheckResult> run_loss_gradient_checks(const Options& opts);

bool all_pass(const std::vector<CheckResult>& results);
std::string format_results(const std::vector<CheckResult>& results);

}  // namespace restain::gradcheck
