#pragma once

#include <torch/torch.h>

#include <array>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "restain/core.hpp"

namespace restain::data {

struct ManifestEntry {
  std::string path;      // as written in the manifest file
  std::string resolved;  // path actually used for IO (relative to manifest dir)
  StainDomain domain = StainDomain::X;
  TissueClass tissue_class = TissueClass::H;
  std::string source_id;
};

// Class-conditional patch index over the two stain domains. Loading
// validates every record: the file must exist, decode to a square 3-channel
// image of the common patch size, carry known domain/class tokens and a
// unique path, and each domain must be nonempty.
class DatasetManifest {
 public:
  // Line format: path<TAB>domain<TAB>class<TAB>source_id, '#' comments.
  static DatasetManifest load(const std::string& path);
  void save(const std::string& path) const;

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  int patch_size() const { return patch_size_; }
  const std::string& magnification_tag() const { return magnification_tag_; }

  int count(StainDomain d) const;
  int count(StainDomain d, TissueClass c) const;
  // Entry indices of one (domain, class) cell.
  const std::vector<int>& cell(StainDomain d, TissueClass c) const;
  // Classes with at least one patch in the given domain, in index order.
  std::vector<TissueClass> classes_present(StainDomain d) const;
  // Classes present in both domains.
  std::vector<TissueClass> classes_present() const;

  LabeledPatch load_patch(int entry_index) const;

  friend DatasetManifest make_manifest(std::vector<ManifestEntry> entries, int patch_size,
                                       std::string magnification_tag);

 private:
  std::vector<ManifestEntry> entries_;
  int patch_size_ = 0;
  std::string magnification_tag_ = "20x";
  std::array<std::vector<int>, 2 * kNumTissueClasses> cells_;
  void index_cells();
  int count_nolock(StainDomain d) const;  // linear scan, usable before indexing
};

// Assembles a manifest from already-validated entries (test fixtures,
// synthetic generation).
DatasetManifest make_manifest(std::vector<ManifestEntry> entries, int patch_size,
                              std::string magnification_tag = "20x");

// 8-bit RGB image IO (PNG/TIFF via OpenCV); tensors are HxWx3 uint8.
torch::Tensor read_image_uint8_hwc(const std::string& path);
void write_image_uint8_hwc(const std::string& path, const torch::Tensor& img);

// Reads, normalizes to [-1,1] and converts to the 3xHxW patch layout.
LabeledPatch load_patch_file(const std::string& path, StainDomain domain, TissueClass c,
                             const std::string& source_id);

uint64_t draw_index(std::mt19937_64& rng, uint64_t n);

// Condition sequence for one training step. UniformClass draws each class
// uniformly from the classes present in both domains; Empirical draws an
// X-domain entry uniformly and takes its class.
std::vector<TissueClass> sample_class_sequence(const DatasetManifest& m, ClassBalance balance,
                                               int n, std::mt19937_64& rng);

// Draws one patch per requested class from the given domain. An empty
// (domain, class) cell is an error.
std::vector<LabeledPatch> sample_for_classes(const DatasetManifest& m, StainDomain d,
                                             const std::vector<TissueClass>& classes,
                                             std::mt19937_64& rng);

// Single-domain conditional sampling: UniformClass draws a class uniformly
// from the classes present in d, then a patch within it; Empirical draws
// uniformly over all entries of d.
std::vector<LabeledPatch> sample_conditional_batch(const DatasetManifest& m, StainDomain d,
                                                   ClassBalance balance, int n,
                                                   std::mt19937_64& rng);

// X and Y batches sharing one class sequence, as the conditional losses
// require.
std::pair<std::vector<LabeledPatch>, std::vector<LabeledPatch>> sample_paired_batches(
    const DatasetManifest& m, ClassBalance balance, int n, std::mt19937_64& rng);

// Stacks patch pixel tensors into a Bx3xHxW batch (and the class list).
torch::Tensor stack_batch(const std::vector<LabeledPatch>& patches);
std::vector<TissueClass> batch_classes(const std::vector<LabeledPatch>& patches);
std::vector<std::string> batch_ids(const std::vector<LabeledPatch>& patches);

// Ground truth X->Y color map of the synthetic fixture: rgb' = scale *
// permute(rgb) + offset, per class. Always invertible and chosen so that it
// never clips for inputs in [0,1].
struct ColorAffine {
  std::array<int, 3> permutation;
  std::array<double, 3> scale;
  std::array<double, 3> offset;

  std::array<double, 3> apply(const std::array<double, 3>& rgb) const;
  std::array<double, 3> invert(const std::array<double, 3>& rgb) const;
};

ColorAffine synthetic_class_transform(int class_idx);
double synthetic_class_hue(int class_idx);

struct SyntheticSpec {
  int num_classes = 3;
  int patch_size = 64;
  int per_class_count = 20;
  uint64_t seed = 7;

  std::string domain_transform_description() const;
};

// Writes per_class_count PNG patches per (domain, class) into out_dir plus
// a manifest.tsv, and returns the loaded manifest. Domain X is a class-keyed
// hue plus seeded texture; domain Y applies the per-class ground-truth color
// transform to a fresh same-class texture (unpaired). Byte-reproducible from
// the seed.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

// Hue in degrees [0, 360) of an rgb triple in [0,1]; used by fixture tests
// and the synthetic generator.
double rgb_to_hue_deg(double r, double g, double b);

}  // namespace restain::data
