#include "restain/pool.hpp"

#include <stdexcept>

namespace restain {

ConditionalImagePool::ConditionalImagePool(int capacity_per_class, uint64_t seed)
    : capacity_(capacity_per_class), seed_(seed), rng_state_(seed) {
  if (capacity_per_class < 1) throw std::invalid_argument("pool capacity must be >= 1");
}

uint64_t ConditionalImagePool::next_raw() {
  // splitmix64: portable, so two runs with one seed replay identically
  // regardless of the standard library.
  rng_state_ += 0x9e3779b97f4a7c15ull;
  uint64_t z = rng_state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double ConditionalImagePool::next_unit() {
  return static_cast<double>(next_raw() >> 11) * 0x1.0p-53;
}

torch::Tensor ConditionalImagePool::query(const torch::Tensor& patch, TissueClass c) {
  auto& bucket = buckets_[static_cast<size_t>(class_index(c))];
  if (static_cast<int>(bucket.size()) < capacity_) {
    bucket.push_back(patch.detach().clone());
    return patch;
  }
  if (next_unit() < 0.5) return patch;
  const size_t idx = static_cast<size_t>(next_raw() % bucket.size());
  torch::Tensor stored = bucket[idx];
  bucket[idx] = patch.detach().clone();
  return stored;
}

std::vector<torch::Tensor> ConditionalImagePool::query(
    const std::vector<std::pair<torch::Tensor, TissueClass>>& fresh) {
  if (fresh.empty()) throw std::invalid_argument("pool query requires a nonempty batch");
  std::vector<torch::Tensor> out;
  out.reserve(fresh.size());
  for (const auto& [patch, c] : fresh) out.push_back(query(patch, c));
  return out;
}

int ConditionalImagePool::bucket_size(TissueClass c) const {
  return static_cast<int>(buckets_[static_cast<size_t>(class_index(c))].size());
}

}  // namespace restain
