#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "restain/core.hpp"
#include "restain/data.hpp"
#include "restain/eval.hpp"
#include "restain/gradcheck.hpp"
#include "restain/inference.hpp"
#include "restain/networks.hpp"
#include "restain/training.hpp"

namespace fs = std::filesystem;
using namespace restain;

namespace {

Direction direction_from_token(const std::string& token) {
  if (token == "x_to_y") return Direction::XtoY;
  if (token == "y_to_x") return Direction::YtoX;
  throw std::invalid_argument("unknown direction '" + token + "' (expected x_to_y or y_to_x)");
}

int cmd_synth(const data::SyntheticSpec& spec, const std::string& out_dir) {
  data::generate_synthetic(spec, out_dir);
  const std::string manifest = (fs::path(out_dir) / "manifest.tsv").string();
  std::cout << manifest << std::endl;
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string manifest_path;
  std::string out_dir;
  std::string preset;
  bool resume = false;
  // flag overrides; negative/empty means "not set"
  int iterations = -1;
  int64_t seed = -1;
  double lr = -1;
  int batch_size = -1;
  int num_classes = -1;
  int patch_size = -1;
  int gen_base_channels = -1;
  int pool_capacity = -1;
  std::string cache_dir;
  int condition_generator = -1;  // tri-state bool
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg = load_config(a.config_path);
  if (!a.preset.empty()) cfg = infer::preset_mode(cfg, infer::preset_from_token(a.preset));
  if (const char* env = std::getenv("RESTAIN_CACHE_DIR")) cfg.cache_dir = env;
  if (a.iterations >= 0) cfg.total_iterations = a.iterations;
  if (a.seed >= 0) cfg.seed = static_cast<uint64_t>(a.seed);
  if (a.lr > 0) cfg.learning_rate = a.lr;
  if (a.batch_size > 0) cfg.batch_size = a.batch_size;
  if (a.num_classes > 0) cfg.num_classes = a.num_classes;
  if (a.patch_size > 0) cfg.patch_size = a.patch_size;
  if (a.gen_base_channels > 0) cfg.gen_base_channels = a.gen_base_channels;
  if (a.pool_capacity > 0) cfg.pool_capacity_per_class = a.pool_capacity;
  if (!a.cache_dir.empty()) cfg.cache_dir = a.cache_dir;
  if (a.condition_generator >= 0) cfg.condition_generator = a.condition_generator != 0;
  cfg.validate();

  auto manifest = data::DatasetManifest::load(a.manifest_path);
  auto result = train::run_training(cfg, manifest, a.out_dir, a.resume);
  std::cout << result.checkpoint_path << std::endl;
  std::cout << result.metrics_path << std::endl;
  return 0;
}

struct TranslateArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
  std::string direction;
  std::string class_token;
  int tile = 0;
  int overlap = -1;
};

int cmd_translate(const TranslateArgs& a) {
  auto loaded = net::load_checkpoint(a.checkpoint);
  const Direction dir = a.direction.empty() ? loaded.config.default_direction
                                            : direction_from_token(a.direction);
  auto raw = data::read_image_uint8_hwc(a.input);
  auto image = normalize_image(raw).permute({2, 0, 1}).contiguous();

  torch::Tensor out;
  if (a.tile > 0) {
    infer::TileOptions tiling;
    tiling.tile = a.tile;
    tiling.overlap = a.overlap >= 0 ? a.overlap : a.tile / 4;
    const auto mode = a.class_token.empty() ? infer::TileClassMode::PerTilePredicted
                                            : infer::TileClassMode::SingleClass;
    const TissueClass c = a.class_token.empty() ? TissueClass::H : class_from_token(a.class_token);
    out = infer::translate_tiled(loaded.bundle, image, dir, tiling, mode, c);
  } else {
    LabeledPatch patch;
    patch.pixels = image;
    patch.domain = source_domain(dir);
    patch.tissue_class = a.class_token.empty() ? TissueClass::H : class_from_token(a.class_token);
    patch.source_id = a.input;
    const auto cs = a.class_token.empty() ? infer::ClassSource::Predicted : infer::ClassSource::Given;
    out = infer::translate_patch(loaded.bundle, patch, dir, cs).pixels;
  }
  data::write_image_uint8_hwc(a.output, denormalize_image(out.permute({1, 2, 0}).contiguous()));
  std::cout << a.output << std::endl;
  return 0;
}

struct EvaluateArgs {
  std::string checkpoint;
  std::string manifest;
  std::string out_path;
  std::string direction;
  std::string format = "tsv";
  int per_class = 30;
  int64_t seed = 0;
};

int cmd_evaluate(const EvaluateArgs& a) {
  auto loaded = net::load_checkpoint(a.checkpoint);
  auto manifest = data::DatasetManifest::load(a.manifest);
  const Direction dir = a.direction.empty() ? loaded.config.default_direction
                                            : direction_from_token(a.direction);
  const auto format = [&] {
    if (a.format == "tsv") return eval::ReportFormat::Tsv;
    if (a.format == "markdown") return eval::ReportFormat::Markdown;
    throw std::invalid_argument("unknown report format '" + a.format + "'");
  }();
  auto report = eval::evaluate(loaded.bundle, manifest, dir, a.per_class,
                               static_cast<uint64_t>(a.seed));
  const std::string text = eval::render_report(report, format);
  std::string out_path = a.out_path;
  if (out_path.empty()) {
    const char* ext = format == eval::ReportFormat::Tsv ? ".tsv" : ".md";
    out_path = (fs::path(a.manifest).parent_path() / (std::string("eval_report") + ext)).string();
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot write report: " + out_path);
  out << text;
  std::cout << text;
  std::cout << out_path << std::endl;
  return 0;
}

int cmd_gradcheck(uint64_t seed, int size, bool inject_flip) {
  gradcheck::Options opts;
  opts.seed = seed;
  opts.size = size;
  opts.flip_ssim_sign = inject_flip;
  const auto results = gradcheck::run_loss_gradient_checks(opts);
  std::cout << gradcheck::format_results(results);
  if (!gradcheck::all_pass(results)) {
    std::cerr << "gradient check failed" << std::endl;
    return 1;
  }
  std::cout << "all gradients within tolerance" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"restain: class-conditioned cycle-consistent virtual re-staining of histology patches"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic two-domain fixture dataset");
  data::SyntheticSpec spec;
  std::string synth_out;
  synth->add_option("--classes", spec.num_classes, "Number of tissue classes")->default_val(3);
  synth->add_option("--size", spec.patch_size, "Patch size in pixels")->default_val(64);
  synth->add_option("--per-class", spec.per_class_count, "Patches per class per domain")->default_val(20);
  synth->add_option("--seed", spec.seed, "Generator seed")->default_val(7);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model on a manifest");
  TrainArgs targs;
  train_cmd->add_option("--config", targs.config_path, "JSON config file (defaults when omitted)");
  train_cmd->add_option("--manifest", targs.manifest_path, "Dataset manifest")->required();
  train_cmd->add_option("--out", targs.out_dir, "Output directory for checkpoints and metrics")->required();
  train_cmd->add_option("--preset", targs.preset,
                        "Dataset preset: he_to_ihc, ihc_to_he, h_only_deconvolution");
  train_cmd->add_flag("--resume", targs.resume, "Resume from the latest checkpoint in --out");
  train_cmd->add_option("--iterations", targs.iterations, "Override total_iterations");
  train_cmd->add_option("--seed", targs.seed, "Override seed");
  train_cmd->add_option("--lr", targs.lr, "Override learning_rate");
  train_cmd->add_option("--batch-size", targs.batch_size, "Override batch_size");
  train_cmd->add_option("--num-classes", targs.num_classes, "Override num_classes");
  train_cmd->add_option("--patch-size", targs.patch_size, "Override patch_size");
  train_cmd->add_option("--gen-base-channels", targs.gen_base_channels,
                        "Override generator base width");
  train_cmd->add_option("--pool-capacity", targs.pool_capacity, "Override pool_capacity_per_class");
  train_cmd->add_option("--cache-dir", targs.cache_dir,
                        "Laplacian cache directory (overrides config and RESTAIN_CACHE_DIR)");
  train_cmd->add_flag("--condition-generator,!--no-condition-generator", targs.condition_generator,
                      "Enable/disable generator conditioning (ablation)");

  // translate
  auto* translate = app.add_subcommand("translate", "Translate an image with a trained checkpoint");
  TranslateArgs xargs;
  translate->add_option("--checkpoint", xargs.checkpoint, "Checkpoint file")->required();
  translate->add_option("--input", xargs.input, "Input image (PNG/TIFF, 8-bit RGB)")->required();
  translate->add_option("--output", xargs.output, "Output image path")->required();
  translate->add_option("--direction", xargs.direction, "x_to_y or y_to_x (default from checkpoint)");
  translate->add_option("--class", xargs.class_token,
                        "Tissue class condition (H,F,N,TF,HF,HB,TN,BG); predicted when omitted");
  translate->add_option("--tile", xargs.tile, "Tile size for tiled translation (0 = whole image)");
  translate->add_option("--overlap", xargs.overlap, "Tile overlap in pixels (default tile/4)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run the automated evaluation protocol");
  EvaluateArgs eargs;
  evaluate->add_option("--checkpoint", eargs.checkpoint, "Checkpoint file")->required();
  evaluate->add_option("--manifest", eargs.manifest, "Evaluation manifest")->required();
  evaluate->add_option("--per-class", eargs.per_class, "Patches evaluated per class")->default_val(30);
  evaluate->add_option("--format", eargs.format, "Report format: tsv or markdown")->default_val("tsv");
  evaluate->add_option("--out", eargs.out_path, "Report output path");
  evaluate->add_option("--direction", eargs.direction, "x_to_y or y_to_x (default from checkpoint)");
  evaluate->add_option("--seed", eargs.seed, "Patch sampling seed")->default_val(0);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Verify loss gradients against finite differences");
  uint64_t gc_seed = 1;
  int gc_size = 8;
  bool gc_flip = false;
  gc->add_option("--seed", gc_seed, "Random seed")->default_val(1);
  gc->add_option("--size", gc_size, "Test image side length")->default_val(8);
  gc->add_flag("--inject-ssim-sign-flip", gc_flip, "Negative control: corrupt the SSIM gradient")
      ->group("");  // hidden test hook

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(spec, synth_out);
    if (train_cmd->parsed()) return cmd_train(targs);
    if (translate->parsed()) return cmd_translate(xargs);
    if (evaluate->parsed()) return cmd_evaluate(eargs);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_size, gc_flip);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
