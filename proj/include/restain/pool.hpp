#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "restain/core.hpp"

namespace restain {

// History buffer of generated patches, partitioned by tissue class, from
// which discriminator fakes are drawn to damp oscillation. Below capacity a
// query stores the fresh patch and returns it; at capacity it returns the
// fresh patch with probability 0.5 and otherwise swaps it against a
// uniformly drawn stored patch of the same class. Single-owner mutable
// state: not safe for concurrent mutation.
class ConditionalImagePool {
 public:
  explicit ConditionalImagePool(int capacity_per_class = 50, uint64_t seed = 0);

  torch::Tensor query(const torch::Tensor& patch, TissueClass c);
  std::vector<torch::Tensor> query(const std::vector<std::pair<torch::Tensor, TissueClass>>& fresh);

  int bucket_size(TissueClass c) const;
  int capacity_per_class() const { return capacity_; }
  uint64_t seed() const { return seed_; }

 private:
  double next_unit();
  uint64_t next_raw();

  int capacity_ = 50;
  uint64_t seed_ = 0;
  uint64_t rng_state_ = 0;
  std::array<std::vector<torch::Tensor>, kNumTissueClasses> buckets_;
};

}  // namespace restain
