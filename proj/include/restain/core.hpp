#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <string>

namespace restain {

// Tissue taxonomy. The integer values double as the condition channel index
// and must never be reordered: manifests, checkpoints and reports all rely
// on this mapping.
enum class TissueClass : int {
  H = 0,   // hepatocyte
  F = 1,   // fibrosis
  N = 2,   // necrosis
  TF = 3,  // tumour & fibrosis
  HF = 4,  // hepatocyte & fibrosis
  HB = 5,  // hepatocyte & blood
  TN = 6,  // tumour & necrosis
  BG = 7,  // background
};

inline constexpr int kNumTissueClasses = 8;

inline constexpr std::array<TissueClass, kNumTissueClasses> kAllTissueClasses = {
    TissueClass::H,  TissueClass::F,  TissueClass::N,  TissueClass::TF,
    TissueClass::HF, TissueClass::HB, TissueClass::TN, TissueClass::BG,
};

int class_index(TissueClass c);
TissueClass class_from_index(int index);
const std::string& class_token(TissueClass c);
TissueClass class_from_token(const std::string& token);

enum class StainDomain { X, Y };

const std::string& domain_token(StainDomain d);
StainDomain domain_from_token(const std::string& token);
StainDomain other_domain(StainDomain d);

std::ostream& operator<<(std::ostream& os, TissueClass c);
std::ostream& operator<<(std::ostream& os, StainDomain d);

// One training/inference sample: a normalized RGB patch with its stain
// domain and tissue class. Pixels are stored as a 3xHxW float tensor with
// values in [-1, 1].
struct LabeledPatch {
  torch::Tensor pixels;
  StainDomain domain = StainDomain::X;
  TissueClass tissue_class = TissueClass::H;
  std::string source_id;

  int64_t height() const { return pixels.size(1); }
  int64_t width() const { return pixels.size(2); }
  void validate(int expected_patch_size = -1) const;
};

struct LossWeights {
  double lambda_cyc = 10.0;
  double delta_id = 5.0;
  double gamma_cls = 0.5;
  double alpha_ssim = 0.5;
  double beta_pho = 1.0;

  void validate() const;
};

enum class AdversarialMode { LeastSquares, Vanilla };
enum class SsimMode { StandardProduct, PaperSum };
enum class IdentityMode { SameDomain, PaperLiteral };
enum class ClcycMode { TranslatedPair, UnpairedSameClass };
enum class ClassBalance { UniformClass, Empirical };
enum class Direction { XtoY, YtoX };

StainDomain source_domain(Direction d);
StainDomain target_domain(Direction d);

struct ExperimentConfig {
  int patch_size = 256;
  int num_classes = 8;
  LossWeights weights;

  AdversarialMode adversarial_mode = AdversarialMode::LeastSquares;
  SsimMode ssim_mode = SsimMode::StandardProduct;
  IdentityMode identity_mode = IdentityMode::SameDomain;
  ClcycMode clcyc_mode = ClcycMode::TranslatedPair;
  ClassBalance class_balance = ClassBalance::UniformClass;

  bool condition_generator = true;
  bool condition_discriminator = true;
  int gen_base_channels = 64;
  int gen_resnet_blocks = 9;

  int pool_capacity_per_class = 50;

  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 1;
  int total_iterations = 100000;
  int decay_start = -1;  // -1: constant lr for the first half, then linear decay
  int checkpoint_every = 1000;
  uint64_t seed = 0;
  int num_threads = 1;

  // SSIM window statistics
  int ssim_window = 11;
  bool ssim_gaussian = true;
  double ssim_sigma = 1.5;
  double ssim_k1 = 0.01;
  double ssim_k2 = 0.03;
  double ssim_dynamic_range = 2.0;  // pixel span of the [-1, 1] convention

  // photorealism term
  int pho_resolution = 64;
  int pho_window_radius = 1;
  double pho_eps = 1e-7;
  bool pho_symmetric = true;
  std::string cache_dir;  // empty: in-memory Laplacian cache only

  std::string domain_x_name = "H&E";
  std::string domain_y_name = "IHC";
  Direction default_direction = Direction::XtoY;

  int effective_decay_start() const { return decay_start < 0 ? total_iterations / 2 : decay_start; }
  void validate() const;
};

// Strict config I/O: JSON object, every key documented in the README,
// unknown keys are a hard error so weight-name typos cannot slip through.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Maps 8-bit RGB [0,255] to the training range [-1,1]: raw / 127.5 - 1.
// Accepts an HxWx3 tensor of any integral or floating dtype.
torch::Tensor normalize_image(const torch::Tensor& raw);

// Inverse of normalize_image: clamps to [-1,1], maps back and rounds to uint8.
torch::Tensor denormalize_image(const torch::Tensor& normalized);

// Spatial one-hot condition map: channel class_index(c) is all ones, the
// other num_classes-1 channels are zero. Returned layout is (C, h, w) so it
// concatenates directly with 3xHxW image tensors.
torch::Tensor one_hot_condition(TissueClass c, int64_t h, int64_t w, int num_classes,
                                torch::Dtype dtype = torch::kFloat32);

// splitmix64 step; used to derive independent deterministic seeds for
// pools, samplers and per-iteration streams from one experiment seed.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

}  // namespace restain
