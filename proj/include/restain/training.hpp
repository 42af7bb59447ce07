#pragma once

#include <torch/torch.h>

#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "restain/core.hpp"
#include "restain/data.hpp"
#include "restain/losses.hpp"
#include "restain/matting.hpp"
#include "restain/networks.hpp"
#include "restain/pool.hpp"

namespace restain::train {

// The eight scalar parts of the composite objective, in its term order:
// the two adversarial terms, cycle, identity, classifier, classification
// cycle, SSIM, photorealism.
struct LossTerms {
  double adv_enc = 0;
  double adv_dec = 0;
  double cyc = 0;
  double id = 0;
  double cls = 0;
  double clcyc = 0;
  double ssim = 0;
  double pho = 0;

  // Name of the first non-finite term, or nullptr when all are finite.
  const char* first_non_finite() const;
};

// adv_enc + adv_dec + lambda*cyc + delta*id + gamma*cls + gamma*clcyc +
// alpha*ssim + beta*pho. A non-finite part is an error naming the term.
double total_objective(const LossTerms& parts, const LossWeights& w);

struct TrainState {
  ExperimentConfig cfg;
  net::ModelBundle bundle;
  std::unique_ptr<torch::optim::Adam> optim_g;  // generators + classifiers
  std::unique_ptr<torch::optim::Adam> optim_d;  // discriminators
  ConditionalImagePool pool_x{50, 0};  // generated domain-X patches, feeds d_dec
  ConditionalImagePool pool_y{50, 0};  // generated domain-Y patches, feeds d_enc
  std::unique_ptr<matting::LaplacianCache> pho_cache;
  losses::SsimParams ssim_params;
  int64_t iteration = 0;
  std::deque<LossTerms> recent;  // bounded history of per-step records
};

TrainState init_train_state(const ExperimentConfig& cfg);

// Scheduled learning rate: constant until decay_start, then linear to zero
// at total_iterations.
double lr_at(const ExperimentConfig& cfg, int64_t iteration);
void set_learning_rate(torch::optim::Adam& optim, double lr);

// One alternating minimax update: (a) generators + classifiers on the full
// weighted objective with discriminators frozen, then (b) discriminators on
// real-vs-pooled-fake batches. Batches must share their class sequence.
LossTerms train_step(TrainState& st, const std::vector<LabeledPatch>& x_batch,
                     const std::vector<LabeledPatch>& y_batch);

struct RunResult {
  std::string checkpoint_path;
  std::string metrics_path;
  int64_t iterations_run = 0;
};

// Full training driver: seeded per-step sampling, scheduled learning rate,
// tab-separated metrics log (one line per step, all eight terms plus the
// total), periodic checkpoints, resumable from the last checkpoint in
// out_dir.
RunResult run_training(const ExperimentConfig& cfg, const data::DatasetManifest& manifest,
                       const std::string& out_dir, bool resume = false);

// Latest checkpoint file in a training directory, empty string if none.
std::string find_latest_checkpoint(const std::string& out_dir);

std::string format_metrics_line(int64_t iteration, const LossTerms& t, const LossWeights& w);

}  // namespace restain::train
