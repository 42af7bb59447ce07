#include "restain/core.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace restain {

namespace {

const std::array<std::string, kNumTissueClasses> kClassTokens = {
    "H", "F", "N", "TF", "HF", "HB", "TN", "BG"};

template <typename E>
std::string enum_text(E value, const std::map<E, std::string>& names) {
  return names.at(value);
}

template <typename E>
E enum_from_text(const std::string& text, const std::map<E, std::string>& names,
                 const std::string& what) {
  for (const auto& [value, name] : names) {
    if (name == text) return value;
  }
  throw std::invalid_argument("unknown " + what + ": '" + text + "'");
}

const std::map<AdversarialMode, std::string> kAdvNames = {
    {AdversarialMode::LeastSquares, "least_squares"},
    {AdversarialMode::Vanilla, "vanilla"}};
const std::map<SsimMode, std::string> kSsimNames = {
    {SsimMode::StandardProduct, "standard_product"},
    {SsimMode::PaperSum, "paper_sum"}};
const std::map<IdentityMode, std::string> kIdentityNames = {
    {IdentityMode::SameDomain, "same_domain"},
    {IdentityMode::PaperLiteral, "paper_literal"}};
const std::map<ClcycMode, std::string> kClcycNames = {
    {ClcycMode::TranslatedPair, "translated_pair"},
    {ClcycMode::UnpairedSameClass, "unpaired_same_class"}};
const std::map<ClassBalance, std::string> kBalanceNames = {
    {ClassBalance::UniformClass, "uniform_class"},
    {ClassBalance::Empirical, "empirical"}};
const std::map<Direction, std::string> kDirectionNames = {
    {Direction::XtoY, "x_to_y"}, {Direction::YtoX, "y_to_x"}};

}  // namespace

int class_index(TissueClass c) { return static_cast<int>(c); }

TissueClass class_from_index(int index) {
  if (index < 0 || index >= kNumTissueClasses)
    throw std::invalid_argument("tissue class index out of range: " + std::to_string(index));
  return static_cast<TissueClass>(index);
}

const std::string& class_token(TissueClass c) { return kClassTokens[static_cast<size_t>(class_index(c))]; }

TissueClass class_from_token(const std::string& token) {
  for (int i = 0; i < kNumTissueClasses; ++i) {
    if (kClassTokens[static_cast<size_t>(i)] == token) return static_cast<TissueClass>(i);
  }
  throw std::invalid_argument("unknown tissue class token: '" + token + "'");
}

const std::string& domain_token(StainDomain d) {
  static const std::string x = "X", y = "Y";
  return d == StainDomain::X ? x : y;
}

StainDomain domain_from_token(const std::string& token) {
  if (token == "X") return StainDomain::X;
  if (token == "Y") return StainDomain::Y;
  throw std::invalid_argument("unknown stain domain token: '" + token + "' (expected X or Y)");
}

StainDomain other_domain(StainDomain d) {
  return d == StainDomain::X ? StainDomain::Y : StainDomain::X;
}

std::ostream& operator<<(std::ostream& os, TissueClass c) { return os << class_token(c); }

std::ostream& operator<<(std::ostream& os, StainDomain d) { return os << domain_token(d); }

StainDomain source_domain(Direction d) {
  return d == Direction::XtoY ? StainDomain::X : StainDomain::Y;
}

StainDomain target_domain(Direction d) {
  return d == Direction::XtoY ? StainDomain::Y : StainDomain::X;
}

void LabeledPatch::validate(int expected_patch_size) const {
  if (!pixels.defined() || pixels.dim() != 3 || pixels.size(0) != 3)
    throw std::invalid_argument("patch pixels must be a 3xHxW tensor");
  if (pixels.size(1) != pixels.size(2))
    throw std::invalid_argument("patch must be square, got " + std::to_string(pixels.size(1)) +
                                "x" + std::to_string(pixels.size(2)));
  if (expected_patch_size > 0 && pixels.size(1) != expected_patch_size)
    throw std::invalid_argument("patch size " + std::to_string(pixels.size(1)) +
                                " does not match expected " + std::to_string(expected_patch_size));
  const double lo = pixels.min().item<double>();
  const double hi = pixels.max().item<double>();
  if (lo < -1.0 - 1e-6 || hi > 1.0 + 1e-6)
    throw std::invalid_argument("patch pixel values escape [-1, 1]: [" + std::to_string(lo) +
                                ", " + std::to_string(hi) + "]");
}

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("loss weight ") + name + " must be finite and >= 0");
  };
  check(lambda_cyc, "lambda_cyc");
  check(delta_id, "delta_id");
  check(gamma_cls, "gamma_cls");
  check(alpha_ssim, "alpha_ssim");
  check(beta_pho, "beta_pho");
}

void ExperimentConfig::validate() const {
  weights.validate();
  if (patch_size < 4 || patch_size % 4 != 0)
    throw std::invalid_argument("patch_size must be a positive multiple of 4");
  if (num_classes < 1 || num_classes > kNumTissueClasses)
    throw std::invalid_argument("num_classes must be in [1, 8]");
  if (gen_base_channels < 1 || gen_resnet_blocks < 1)
    throw std::invalid_argument("generator width/depth must be positive");
  if (pool_capacity_per_class < 1) throw std::invalid_argument("pool_capacity_per_class must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (total_iterations < 0) throw std::invalid_argument("total_iterations must be >= 0");
  if (decay_start >= 0 && decay_start > total_iterations)
    throw std::invalid_argument("decay_start cannot exceed total_iterations");
  if (checkpoint_every < 1) throw std::invalid_argument("checkpoint_every must be >= 1");
  if (ssim_window < 3 || ssim_window % 2 == 0)
    throw std::invalid_argument("ssim_window must be odd and >= 3");
  if (!(ssim_dynamic_range > 0)) throw std::invalid_argument("ssim_dynamic_range must be > 0");
  if (pho_resolution < 3) throw std::invalid_argument("pho_resolution must be >= 3");
  if (pho_window_radius < 1) throw std::invalid_argument("pho_window_radius must be >= 1");
  if (!(pho_eps > 0)) throw std::invalid_argument("pho_eps must be > 0");
  if (num_threads < 1) throw std::invalid_argument("num_threads must be >= 1");
}

namespace {

using nlohmann::json;

// Single description of every config key: loader and saver both walk this
// table, so they cannot drift apart.
struct KeyHandler {
  std::function<void(ExperimentConfig&, const json&)> load;
  std::function<json(const ExperimentConfig&)> save;
};

const std::map<std::string, KeyHandler>& config_keys() {
  static const std::map<std::string, KeyHandler> keys = {
      {"patch_size",
       {[](ExperimentConfig& c, const json& v) { c.patch_size = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.patch_size); }}},
      {"num_classes",
       {[](ExperimentConfig& c, const json& v) { c.num_classes = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.num_classes); }}},
      {"lambda_cyc",
       {[](ExperimentConfig& c, const json& v) { c.weights.lambda_cyc = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.weights.lambda_cyc); }}},
      {"delta_id",
       {[](ExperimentConfig& c, const json& v) { c.weights.delta_id = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.weights.delta_id); }}},
      {"gamma_cls",
       {[](ExperimentConfig& c, const json& v) { c.weights.gamma_cls = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.weights.gamma_cls); }}},
      {"alpha_ssim",
       {[](ExperimentConfig& c, const json& v) { c.weights.alpha_ssim = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.weights.alpha_ssim); }}},
      {"beta_pho",
       {[](ExperimentConfig& c, const json& v) { c.weights.beta_pho = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.weights.beta_pho); }}},
      {"adversarial_mode",
       {[](ExperimentConfig& c, const json& v) {
          c.adversarial_mode = enum_from_text(v.get<std::string>(), kAdvNames, "adversarial_mode");
        },
        [](const ExperimentConfig& c) { return json(enum_text(c.adversarial_mode, kAdvNames)); }}},
      {"ssim_mode",
       {[](ExperimentConfig& c, const json& v) {
          c.ssim_mode = enum_from_text(v.get<std::string>(), kSsimNames, "ssim_mode");
        },
        [](const ExperimentConfig& c) { return json(enum_text(c.ssim_mode, kSsimNames)); }}},
      {"identity_mode",
       {[](ExperimentConfig& c, const json& v) {
          c.identity_mode = enum_from_text(v.get<std::string>(), kIdentityNames, "identity_mode");
        },
        [](const ExperimentConfig& c) { return json(enum_text(c.identity_mode, kIdentityNames)); }}},
      {"clcyc_mode",
       {[](ExperimentConfig& c, const json& v) {
          c.clcyc_mode = enum_from_text(v.get<std::string>(), kClcycNames, "clcyc_mode");
        },
        [](const ExperimentConfig& c) { return json(enum_text(c.clcyc_mode, kClcycNames)); }}},
      {"class_balance",
       {[](ExperimentConfig& c, const json& v) {
          c.class_balance = enum_from_text(v.get<std::string>(), kBalanceNames, "class_balance");
        },
        [](const ExperimentConfig& c) { return json(enum_text(c.class_balance, kBalanceNames)); }}},
      {"condition_generator",
       {[](ExperimentConfig& c, const json& v) { c.condition_generator = v.get<bool>(); },
        [](const ExperimentConfig& c) { return json(c.condition_generator); }}},
      {"condition_discriminator",
       {[](ExperimentConfig& c, const json& v) { c.condition_discriminator = v.get<bool>(); },
        [](const ExperimentConfig& c) { return json(c.condition_discriminator); }}},
      {"gen_base_channels",
       {[](ExperimentConfig& c, const json& v) { c.gen_base_channels = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.gen_base_channels); }}},
      {"gen_resnet_blocks",
       {[](ExperimentConfig& c, const json& v) { c.gen_resnet_blocks = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.gen_resnet_blocks); }}},
      {"pool_capacity_per_class",
       {[](ExperimentConfig& c, const json& v) { c.pool_capacity_per_class = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.pool_capacity_per_class); }}},
      {"learning_rate",
       {[](ExperimentConfig& c, const json& v) { c.learning_rate = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.learning_rate); }}},
      {"adam_beta1",
       {[](ExperimentConfig& c, const json& v) { c.adam_beta1 = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.adam_beta1); }}},
      {"adam_beta2",
       {[](ExperimentConfig& c, const json& v) { c.adam_beta2 = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.adam_beta2); }}},
      {"batch_size",
       {[](ExperimentConfig& c, const json& v) { c.batch_size = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.batch_size); }}},
      {"total_iterations",
       {[](ExperimentConfig& c, const json& v) { c.total_iterations = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.total_iterations); }}},
      {"decay_start",
       {[](ExperimentConfig& c, const json& v) { c.decay_start = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.decay_start); }}},
      {"checkpoint_every",
       {[](ExperimentConfig& c, const json& v) { c.checkpoint_every = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.checkpoint_every); }}},
      {"seed",
       {[](ExperimentConfig& c, const json& v) { c.seed = v.get<uint64_t>(); },
        [](const ExperimentConfig& c) { return json(c.seed); }}},
      {"num_threads",
       {[](ExperimentConfig& c, const json& v) { c.num_threads = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.num_threads); }}},
      {"ssim_window",
       {[](ExperimentConfig& c, const json& v) { c.ssim_window = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.ssim_window); }}},
      {"ssim_gaussian",
       {[](ExperimentConfig& c, const json& v) { c.ssim_gaussian = v.get<bool>(); },
        [](const ExperimentConfig& c) { return json(c.ssim_gaussian); }}},
      {"ssim_sigma",
       {[](ExperimentConfig& c, const json& v) { c.ssim_sigma = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.ssim_sigma); }}},
      {"ssim_k1",
       {[](ExperimentConfig& c, const json& v) { c.ssim_k1 = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.ssim_k1); }}},
      {"ssim_k2",
       {[](ExperimentConfig& c, const json& v) { c.ssim_k2 = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.ssim_k2); }}},
      {"ssim_dynamic_range",
       {[](ExperimentConfig& c, const json& v) { c.ssim_dynamic_range = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.ssim_dynamic_range); }}},
      {"pho_resolution",
       {[](ExperimentConfig& c, const json& v) { c.pho_resolution = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.pho_resolution); }}},
      {"pho_window_radius",
       {[](ExperimentConfig& c, const json& v) { c.pho_window_radius = v.get<int>(); },
        [](const ExperimentConfig& c) { return json(c.pho_window_radius); }}},
      {"pho_eps",
       {[](ExperimentConfig& c, const json& v) { c.pho_eps = v.get<double>(); },
        [](const ExperimentConfig& c) { return json(c.pho_eps); }}},
      {"pho_symmetric",
       {[](ExperimentConfig& c, const json& v) { c.pho_symmetric = v.get<bool>(); },
        [](const ExperimentConfig& c) { return json(c.pho_symmetric); }}},
      {"cache_dir",
       {[](ExperimentConfig& c, const json& v) { c.cache_dir = v.get<std::string>(); },
        [](const ExperimentConfig& c) { return json(c.cache_dir); }}},
      {"domain_x_name",
       {[](ExperimentConfig& c, const json& v) { c.domain_x_name = v.get<std::string>(); },
        [](const ExperimentConfig& c) { return json(c.domain_x_name); }}},
      {"domain_y_name",
       {[](ExperimentConfig& c, const json& v) { c.domain_y_name = v.get<std::string>(); },
        [](const ExperimentConfig& c) { return json(c.domain_y_name); }}},
      {"default_direction",
       {[](ExperimentConfig& c, const json& v) {
          c.default_direction = enum_from_text(v.get<std::string>(), kDirectionNames, "default_direction");
        },
        [](const ExperimentConfig& c) { return json(enum_text(c.default_direction, kDirectionNames)); }}},
  };
  return keys;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw std::invalid_argument("config root must be a JSON object");

  ExperimentConfig cfg;
  const auto& keys = config_keys();
  for (const auto& [key, value] : doc.items()) {
    auto it = keys.find(key);
    if (it == keys.end()) throw std::invalid_argument("unknown config key: '" + key + "'");
    try {
      it->second.load(cfg, value);
    } catch (const json::exception& e) {
      throw std::invalid_argument("bad value for config key '" + key + "': " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json doc = json::object();
  for (const auto& [key, handler] : config_keys()) doc[key] = handler.save(cfg);
  return doc.dump(2) + "\n";
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file: " + path);
  out << config_to_json_text(cfg);
}

torch::Tensor normalize_image(const torch::Tensor& raw) {
  if (raw.dim() != 3 || raw.size(2) != 3)
    throw std::invalid_argument("normalize_image expects an HxWx3 tensor, got shape " +
                                std::string(torch::str(raw.sizes())));
  return raw.to(torch::kFloat32) / 127.5f - 1.0f;
}

torch::Tensor denormalize_image(const torch::Tensor& normalized) {
  if (normalized.dim() != 3 || normalized.size(2) != 3)
    throw std::invalid_argument("denormalize_image expects an HxWx3 tensor");
  auto scaled = (normalized.to(torch::kFloat32).clamp(-1.0, 1.0) + 1.0f) * 127.5f;
  return scaled.round().clamp(0, 255).to(torch::kUInt8);
}

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

torch::Tensor one_hot_condition(TissueClass c, int64_t h, int64_t w, int num_classes,
                                torch::Dtype dtype) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("one_hot_condition needs positive h, w");
  const int idx = class_index(c);
  if (idx >= num_classes)
    throw std::invalid_argument("tissue class " + class_token(c) + " (index " +
                                std::to_string(idx) + ") exceeds num_classes=" +
                                std::to_string(num_classes));
  auto map = torch::zeros({num_classes, h, w}, dtype);
  map[idx].fill_(1);
  return map;
}

}  // namespace restain
