#pragma once

#include <torch/torch.h>

#include <string>
#include <vector>

#include "restain/core.hpp"

namespace restain::net {

struct ResnetBlockImpl : torch::nn::Module {
  explicit ResnetBlockImpl(int channels);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(ResnetBlock);

// Resnet translation generator: 7x7 stem, two stride-2 downsampling convs,
// resnet blocks at the bottleneck, two stride-2 transposed convs back up,
// 7x7 head with tanh. Instance normalization and reflection padding
// throughout; shape preserving for any input divisible by 4.
struct GeneratorImpl : torch::nn::Module {
  GeneratorImpl(int in_channels, int base_channels, int resnet_blocks);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Sequential layers{nullptr};
  int in_channels = 3;
};
TORCH_MODULE(Generator);

// Five-layer patch discriminator, channel progression 64-128-256-512-1,
// emitting a score map. Vanilla mode appends a sigmoid so scores lie in
// (0,1); least-squares mode leaves them raw.
struct DiscriminatorImpl : torch::nn::Module {
  DiscriminatorImpl(int in_channels, AdversarialMode mode);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Sequential layers{nullptr};
  int in_channels = 3;
  AdversarialMode mode = AdversarialMode::LeastSquares;
};
TORCH_MODULE(Discriminator);

// Eight-conv classifier sharing the discriminator base (first four layers),
// with a deeper head and global average pooling onto num_classes logits.
// Unconditioned: it predicts the condition.
struct ClassifierImpl : torch::nn::Module {
  explicit ClassifierImpl(int num_classes);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Sequential layers{nullptr};
  int num_classes = 8;
};
TORCH_MODULE(Classifier);

Generator build_generator(const ExperimentConfig& cfg);
Discriminator build_discriminator(const ExperimentConfig& cfg);
Classifier build_classifier(const ExperimentConfig& cfg);

// The six trainable networks plus the condition-encoding convention.
struct ModelBundle {
  Generator g_enc{nullptr};  // X -> Y
  Generator g_dec{nullptr};  // Y -> X
  Discriminator d_enc{nullptr};  // judges domain Y
  Discriminator d_dec{nullptr};  // judges domain X
  Classifier s_enc{nullptr};  // classifies domain X inputs
  Classifier s_dec{nullptr};  // classifies domain Y inputs
  bool gen_conditioned = true;
  bool disc_conditioned = true;
  int num_classes = 8;
  std::string arch;

  void set_train(bool on);
  std::vector<torch::Tensor> generator_side_parameters() const;  // G + S
  std::vector<torch::Tensor> discriminator_parameters() const;

  const Generator& generator(Direction d) const { return d == Direction::XtoY ? g_enc : g_dec; }
  const Discriminator& discriminator_for_target(Direction d) const {
    return d == Direction::XtoY ? d_enc : d_dec;
  }
  const Classifier& classifier(StainDomain d) const { return d == StainDomain::X ? s_enc : s_dec; }
};

// Builds all six networks with seeded initialization (normal(0, 0.02) convs).
ModelBundle build_model_bundle(const ExperimentConfig& cfg);

// Architectural fingerprint checked before checkpoint weights are restored.
std::string arch_descriptor(const ExperimentConfig& cfg);

int64_t parameter_count(const torch::nn::Module& module);

// Concatenates spatial one-hot condition maps onto a Bx3xHxW batch,
// yielding Bx(3+C)xHxW.
torch::Tensor with_condition(const torch::Tensor& images, const std::vector<TissueClass>& classes,
                             int num_classes);

// Single-file versioned checkpoint: arch descriptor, config snapshot,
// iteration counter, pool seeds (pool contents are transient and excluded),
// per-network weights and (optionally) optimizer state.
void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const ExperimentConfig& cfg, int64_t iteration,
                     torch::optim::Adam* optim_g = nullptr, torch::optim::Adam* optim_d = nullptr,
                     uint64_t pool_seed_x = 0, uint64_t pool_seed_y = 0);

struct LoadedCheckpoint {
  ModelBundle bundle;
  ExperimentConfig config;
  int64_t iteration = 0;
  bool has_optimizer_state = false;
  uint64_t pool_seed_x = 0;
  uint64_t pool_seed_y = 0;
};

// Rebuilds the bundle from the stored config and restores weights. If
// expected_arch is nonempty it must match the stored descriptor.
LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& expected_arch = "");

// Restores Adam state saved alongside the weights; optimizers must already
// be constructed over the loaded bundle's parameters.
void load_optimizer_state(const std::string& path, torch::optim::Adam& optim_g,
                          torch::optim::Adam& optim_d);

}  // namespace restain::net
