#pragma once

#include <torch/torch.h>

#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "restain/core.hpp"

namespace restain::matting {

// Closed-form matting Laplacian of a guide image, stored as symmetric CSR.
// Rows sum to zero, the matrix is positive semidefinite, and entry (i,j) is
// nonzero only when pixels i and j share at least one (2r+1)^2 window.
struct MattingLaplacian {
  int height = 0;
  int width = 0;
  int window_radius = 1;
  double eps = 1e-7;
  std::vector<int64_t> row_ptr;
  std::vector<int32_t> col_idx;
  std::vector<double> values;

  int64_t dim() const { return static_cast<int64_t>(height) * width; }
  int64_t nnz() const { return static_cast<int64_t>(values.size()); }
  double entry(int64_t i, int64_t j) const;
  double row_sum(int64_t i) const;
  // v is a flat dim() vector (row-major pixel order); result is double.
  torch::Tensor matvec(const torch::Tensor& v) const;
  double quadratic_form(const torch::Tensor& v) const;
};

// Builds the Laplacian from an HxWx3 guide image with values in [0, 1].
// Per-window affine color model with 3x3 covariance and eps*I regularization.
MattingLaplacian build_matting_laplacian(const torch::Tensor& image, int window_radius = 1,
                                         double eps = 1e-7);

// Sum over RGB channels of vec(img_k)^T M vec(img_k) for an HxWx3 image.
double photorealism_penalty(const MattingLaplacian& m, const torch::Tensor& img);

// Autograd-enabled quadratic form over a 3xHxW image tensor. The Laplacian
// is constant; the backward pass is 2 * M * vec(img_k) per channel. The
// referenced Laplacian must outlive the backward call.
torch::Tensor photorealism_quadratic(const MattingLaplacian& m, const torch::Tensor& img_chw);

// Cache of guide-image Laplacians keyed by (source_id, resolution, radius,
// eps). Optionally persisted to disk: an index.tsv maps keys to one binary
// file per Laplacian. Reads are concurrent; writes take an exclusive lock.
class LaplacianCache {
 public:
  LaplacianCache() = default;
  LaplacianCache(std::string disk_dir, int resolution, int window_radius, double eps);

  // Returns the cached Laplacian, building (and persisting) it from
  // image01_hwc on a miss.
  const MattingLaplacian& get(const std::string& source_id, const torch::Tensor& image01_hwc);
  // Miss is an error naming the patch.
  const MattingLaplacian& get_precomputed(const std::string& source_id);
  bool contains(const std::string& source_id);

  int resolution() const { return resolution_; }
  int window_radius() const { return window_radius_; }
  double eps() const { return eps_; }
  const std::string& disk_dir() const { return disk_dir_; }

 private:
  std::string key_for(const std::string& source_id) const;
  const MattingLaplacian* load_from_disk(const std::string& key);
  void store_to_disk(const std::string& key, const MattingLaplacian& lap);

  std::string disk_dir_;
  int resolution_ = 64;
  int window_radius_ = 1;
  double eps_ = 1e-7;
  std::unordered_map<std::string, std::unique_ptr<MattingLaplacian>> memory_;
  std::shared_mutex mutex_;
};

void write_laplacian_file(const std::string& path, const std::string& key,
                          const MattingLaplacian& lap);
MattingLaplacian read_laplacian_file(const std::string& path, std::string* key_out = nullptr);

struct PhotorealismOptions {
  int resolution = 64;
  int window_radius = 1;
  double eps = 1e-7;
  // Eq.-as-printed symmetric penalty: also evaluates the real image against
  // the generated image's Laplacian. That term is held constant during
  // backprop (the Laplacian carries no gradient), so only the generated
  // pixels receive gradient either way.
  bool symmetric = true;
  bool build_on_miss = true;

  static PhotorealismOptions from_config(const ExperimentConfig& cfg);
};

// Mean over the batch of Pho(G_enc(x), x) + Pho(G_dec(y), y) where
// Pho(a, b) = sum_k a_k^T M_b a_k + sum_k b_k^T M_a b_k. Inputs are
// Bx3xHxW batches in [-1, 1]; images are mapped to [0, 1] and downscaled to
// opts.resolution before the Laplacians are applied. Gradient flows only
// into the generated batches g_enc_x / g_dec_y.
torch::Tensor photorealism_loss(const torch::Tensor& x, const torch::Tensor& g_enc_x,
                                const torch::Tensor& y, const torch::Tensor& g_dec_y,
                                const std::vector<std::string>& x_ids,
                                const std::vector<std::string>& y_ids, LaplacianCache& cache,
                                const PhotorealismOptions& opts);

}  // namespace restain::matting
