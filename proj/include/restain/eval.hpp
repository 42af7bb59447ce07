#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "restain/core.hpp"
#include "restain/data.hpp"
#include "restain/networks.hpp"

namespace restain::eval {

struct EvalClassRow {
  TissueClass tissue_class = TissueClass::H;
  int n_patches = 0;
  double mean_ssim = 0;
  double mean_cycle_l1 = 0;
  double agreement = 0;  // fraction with argmax S_target(translated) == condition
};

struct EvalReport {
  Direction direction = Direction::XtoY;
  std::vector<EvalClassRow> rows;  // one per evaluated class, class-index order
  EvalClassRow overall;            // patch-weighted aggregate
};

// Report column order mirrors the paper's result table.
inline constexpr std::array<TissueClass, kNumTissueClasses> kReportClassOrder = {
    TissueClass::H,  TissueClass::TF, TissueClass::N,  TissueClass::F,
    TissueClass::HF, TissueClass::TN, TissueClass::HB, TissueClass::BG,
};

// For each class present in the source domain, translates n_per_class
// patches under their true condition and measures SSIM(input, translated)
// in product mode, round-trip cycle L1, and target-domain classifier
// agreement. A class with fewer than n_per_class source patches is an
// error listing every deficit. Deterministic given (seed, bundle, manifest).
EvalReport evaluate(const net::ModelBundle& bundle, const data::DatasetManifest& manifest,
                    Direction direction, int n_per_class = 30, uint64_t seed = 0);

// Same protocol with the model factored out, so the harness can be driven
// by reference translators/classifiers in tests.
using TranslateFn = std::function<LabeledPatch(const LabeledPatch&, Direction)>;
using ClassifyFn = std::function<TissueClass(StainDomain, const torch::Tensor&)>;
EvalReport evaluate_with(const TranslateFn& translate, const ClassifyFn& classify,
                         const data::DatasetManifest& manifest, Direction direction,
                         int n_per_class = 30, uint64_t seed = 0);

enum class ReportFormat { Tsv, Markdown };

// Renders one row per metric with columns in kReportClassOrder (restricted
// to classes present in the report) plus Overall; fixed 4-decimal formatting.
std::string render_report(const EvalReport& report, ReportFormat format);

// Parses a rendered report (TSV directly; markdown tables are reduced to
// TSV first), so externally annotated tables can be read back.
EvalReport parse_report(const std::string& text);

}  // namespace restain::eval
