#pragma once

#include <torch/torch.h>

#include <string>

#include "restain/core.hpp"
#include "restain/networks.hpp"

namespace restain::infer {

enum class ClassSource { Given, Predicted };

// Translates one patch across domains. The patch's domain must match the
// direction's source. With ClassSource::Predicted the source-domain
// classifier supplies the condition; the output patch carries the condition
// actually used as its tissue_class. Deterministic: no sampling.
LabeledPatch translate_patch(const net::ModelBundle& bundle, const LabeledPatch& patch,
                             Direction direction, ClassSource class_source = ClassSource::Given);

TissueClass predict_class(const net::ModelBundle& bundle, StainDomain domain,
                          const torch::Tensor& pixels_chw);

struct TileOptions {
  int tile = 256;
  int overlap = 64;  // default tile/4

  void validate() const;
};

enum class TileClassMode { SingleClass, PerTilePredicted };

// Class-conditioned tiled translation of an arbitrary 3xHxW image in
// [-1, 1]. The image is covered by overlapping tiles, each translated under
// its condition and blended with linear feathering weights that form a
// partition of unity. Images smaller than one tile are padded, translated
// and cropped. Tiles are processed band-by-band so memory stays bounded by
// a few tile rows.
torch::Tensor translate_tiled(const net::ModelBundle& bundle, const torch::Tensor& image,
                              Direction direction, const TileOptions& tiling,
                              TileClassMode class_mode,
                              TissueClass single_class = TissueClass::H);

enum class PresetMode { HeToIhc, IhcToHe, HOnlyDeconvolution };

PresetMode preset_from_token(const std::string& token);

// Dataset-semantics presets: same machinery, different domain naming and
// default direction. he_to_ihc is the base configuration; ihc_to_he flips
// the default direction; h_only_deconvolution names domain Y "H-only".
ExperimentConfig preset_mode(ExperimentConfig cfg, PresetMode mode);

}  // namespace restain::infer
