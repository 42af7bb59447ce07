#include "restain/inference.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace restain::infer {

namespace F = torch::nn::functional;

TissueClass predict_class(const net::ModelBundle& bundle, StainDomain domain,
                          const torch::Tensor& pixels_chw) {
  torch::NoGradGuard no_grad;
  auto s = bundle.classifier(domain);  // handle copy shares the module
  s->eval();
  auto logits = s->forward(pixels_chw.unsqueeze(0));
  return class_from_index(static_cast<int>(logits.argmax(1).item<int64_t>()));
}

LabeledPatch translate_patch(const net::ModelBundle& bundle, const LabeledPatch& patch,
                             Direction direction, ClassSource class_source) {
  const StainDomain src = source_domain(direction);
  if (patch.domain != src)
    throw std::invalid_argument("translate_patch: patch domain " + domain_token(patch.domain) +
                                " does not match direction source " + domain_token(src));
  const TissueClass condition = class_source == ClassSource::Given
                                    ? patch.tissue_class
                                    : predict_class(bundle, src, patch.pixels);

  torch::NoGradGuard no_grad;
  auto g = bundle.generator(direction);  // handle copy shares the module
  g->eval();
  auto in = patch.pixels.unsqueeze(0);
  if (bundle.gen_conditioned) in = net::with_condition(in, {condition}, bundle.num_classes);
  auto out = g->forward(in).squeeze(0);

  LabeledPatch result;
  result.pixels = out;
  result.domain = target_domain(direction);
  result.tissue_class = condition;
  result.source_id = patch.source_id;
  return result;
}

void TileOptions::validate() const {
  if (tile < 4 || tile % 4 != 0) throw std::invalid_argument("tile size must be a positive multiple of 4");
  if (overlap < 0 || overlap >= (tile + 1) / 2)
    throw std::invalid_argument("overlap must satisfy 0 <= overlap < tile/2");
}

namespace {

// Tile start coordinates covering [0, extent) with the given stride; the
// last tile is clamped so it ends exactly at the edge.
std::vector<int64_t> tile_positions(int64_t extent, int64_t tile, int64_t stride) {
  std::vector<int64_t> pos;
  for (int64_t p = 0;; p += stride) {
    if (p + tile >= extent) {
      pos.push_back(std::max<int64_t>(0, extent - tile));
      break;
    }
    pos.push_back(p);
  }
  pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
  return pos;
}

// Linear feather profile along one axis. Ramps appear only on sides that
// actually abut a neighbouring tile, so a single tile keeps weight exactly
// 1 everywhere and blending reduces to the identity bit-for-bit.
torch::Tensor feather_profile(int64_t tile, int64_t overlap, bool ramp_lead, bool ramp_trail) {
  auto w = torch::ones({tile}, torch::kFloat32);
  for (int64_t u = 0; u < overlap; ++u) {
    const float ramp = static_cast<float>(u + 1) / static_cast<float>(overlap + 1);
    if (ramp_lead) w[u] = std::min(w[u].item<float>(), ramp);
    if (ramp_trail) w[tile - 1 - u] = std::min(w[tile - 1 - u].item<float>(), ramp);
  }
  return w;
}

}  // namespace

torch::Tensor translate_tiled(const net::ModelBundle& bundle, const torch::Tensor& image,
                              Direction direction, const TileOptions& tiling,
                              TileClassMode class_mode, TissueClass single_class) {
  if (image.dim() != 3 || image.size(0) != 3)
    throw std::invalid_argument("translate_tiled expects a 3xHxW image");
  tiling.validate();
  const int64_t h = image.size(1), w = image.size(2);
  const int64_t tile = tiling.tile;
  const int64_t overlap = tiling.overlap;
  const int64_t stride = tile - overlap;

  // Pad up to at least one tile; replicate handles images much smaller than
  // the tile, where reflection would run out of pixels.
  const int64_t ph = std::max<int64_t>(0, tile - h);
  const int64_t pw = std::max<int64_t>(0, tile - w);
  torch::Tensor canvas = image;
  if (ph > 0 || pw > 0)
    canvas = F::pad(image.unsqueeze(0), F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate))
                 .squeeze(0);
  const int64_t ch = canvas.size(1), cw = canvas.size(2);

  const auto rows = tile_positions(ch, tile, stride);
  const auto cols = tile_positions(cw, tile, stride);

  const StainDomain src = source_domain(direction);
  auto out = torch::empty({3, ch, cw}, image.options());

  // Band accumulators cover one tile height; completed rows are emitted as
  // the band advances.
  auto band_acc = torch::zeros({3, tile, cw}, torch::kFloat32);
  auto band_wsum = torch::zeros({1, tile, cw}, torch::kFloat32);
  int64_t band_top = rows.front();

  auto emit_rows = [&](int64_t from, int64_t to) {  // absolute canvas rows [from, to)
    if (from >= to) return;
    auto acc = band_acc.narrow(1, from - band_top, to - from);
    auto wsum = band_wsum.narrow(1, from - band_top, to - from);
    out.narrow(1, from, to - from) = acc / wsum;
  };

  for (size_t ri = 0; ri < rows.size(); ++ri) {
    const int64_t top = rows[ri];
    if (top != band_top) {
      // advance the band: rows [band_top, top) are final
      emit_rows(band_top, top);
      const int64_t shift = top - band_top;
      auto keep_acc = band_acc.narrow(1, shift, tile - shift).clone();
      auto keep_w = band_wsum.narrow(1, shift, tile - shift).clone();
      band_acc.zero_();
      band_wsum.zero_();
      band_acc.narrow(1, 0, tile - shift) = keep_acc;
      band_wsum.narrow(1, 0, tile - shift) = keep_w;
      band_top = top;
    }
    const auto h_profile =
        feather_profile(tile, overlap, /*ramp_lead=*/top > 0, /*ramp_trail=*/top + tile < ch);
    for (const int64_t left : cols) {
      auto tile_in = canvas.narrow(1, top, tile).narrow(2, left, tile);
      LabeledPatch patch;
      patch.pixels = tile_in.contiguous();
      patch.domain = src;
      patch.tissue_class = single_class;
      patch.source_id = "tile";
      const ClassSource cs =
          class_mode == TileClassMode::SingleClass ? ClassSource::Given : ClassSource::Predicted;
      auto translated = translate_patch(bundle, patch, direction, cs);

      const auto w_profile =
          feather_profile(tile, overlap, /*ramp_lead=*/left > 0, /*ramp_trail=*/left + tile < cw);
      auto weight = h_profile.unsqueeze(1) * w_profile.unsqueeze(0);  // tile x tile
      band_acc.narrow(2, left, tile) += translated.pixels * weight;
      band_wsum.narrow(2, left, tile) += weight;
    }
  }
  emit_rows(band_top, ch);

  if (ph > 0 || pw > 0) out = out.narrow(1, 0, h).narrow(2, 0, w).contiguous();
  return out;
}

PresetMode preset_from_token(const std::string& token) {
  if (token == "he_to_ihc") return PresetMode::HeToIhc;
  if (token == "ihc_to_he") return PresetMode::IhcToHe;
  if (token == "h_only_deconvolution") return PresetMode::HOnlyDeconvolution;
  throw std::invalid_argument("unknown preset mode: '" + token + "'");
}

ExperimentConfig preset_mode(ExperimentConfig cfg, PresetMode mode) {
  switch (mode) {
    case PresetMode::HeToIhc:
      cfg.domain_x_name = "H&E";
      cfg.domain_y_name = "IHC";
      cfg.default_direction = Direction::XtoY;
      break;
    case PresetMode::IhcToHe:
      cfg.domain_x_name = "H&E";
      cfg.domain_y_name = "IHC";
      cfg.default_direction = Direction::YtoX;
      break;
    case PresetMode::HOnlyDeconvolution:
      cfg.domain_x_name = "H&E";
      cfg.domain_y_name = "H-only";
      cfg.default_direction = Direction::XtoY;
      break;
  }
  return cfg;
}

}  // namespace restain::infer
