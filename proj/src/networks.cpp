#include "restain/networks.hpp"

#include <filesystem>
#include <stdexcept>

#include <json.hpp>

namespace restain::net {

namespace nn = torch::nn;

namespace {

nn::Conv2dOptions conv_opts(int in, int out, int kernel, int stride, int padding) {
  return nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding);
}

void init_weights(nn::Module& module) {
  torch::NoGradGuard no_grad;
  if (auto* conv = module.as<nn::Conv2d>()) {
    nn::init::normal_(conv->weight, 0.0, 0.02);
    if (conv->options.bias()) nn::init::constant_(conv->bias, 0.0);
  } else if (auto* convt = module.as<nn::ConvTranspose2d>()) {
    nn::init::normal_(convt->weight, 0.0, 0.02);
    if (convt->options.bias()) nn::init::constant_(convt->bias, 0.0);
  }
}

}  // namespace

ResnetBlockImpl::ResnetBlockImpl(int channels) {
  body = nn::Sequential(
      nn::ReflectionPad2d(1), nn::Conv2d(conv_opts(channels, channels, 3, 1, 0)),
      nn::InstanceNorm2d(channels), nn::ReLU(nn::ReLUOptions().inplace(true)),
      nn::ReflectionPad2d(1), nn::Conv2d(conv_opts(channels, channels, 3, 1, 0)),
      nn::InstanceNorm2d(channels));
  register_module("body", body);
}

torch::Tensor ResnetBlockImpl::forward(torch::Tensor x) { return x + body->forward(x); }

GeneratorImpl::GeneratorImpl(int in_channels_, int base_channels, int resnet_blocks)
    : in_channels(in_channels_) {
  const int ngf = base_channels;
  layers = nn::Sequential();
  layers->push_back(nn::ReflectionPad2d(3));
  layers->push_back(nn::Conv2d(conv_opts(in_channels, ngf, 7, 1, 0)));
  layers->push_back(nn::InstanceNorm2d(ngf));
  layers->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(ngf, ngf * 2, 3, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(ngf * 2));
  layers->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(ngf * 2, ngf * 4, 3, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(ngf * 4));
  layers->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
  for (int i = 0; i < resnet_blocks; ++i) layers->push_back(ResnetBlock(ngf * 4));
  layers->push_back(nn::ConvTranspose2d(
      nn::ConvTranspose2dOptions(ngf * 4, ngf * 2, 3).stride(2).padding(1).output_padding(1)));
  layers->push_back(nn::InstanceNorm2d(ngf * 2));
  layers->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
  layers->push_back(nn::ConvTranspose2d(
      nn::ConvTranspose2dOptions(ngf * 2, ngf, 3).stride(2).padding(1).output_padding(1)));
  layers->push_back(nn::InstanceNorm2d(ngf));
  layers->push_back(nn::ReLU(nn::ReLUOptions().inplace(true)));
  layers->push_back(nn::ReflectionPad2d(3));
  layers->push_back(nn::Conv2d(conv_opts(ngf, 3, 7, 1, 0)));
  layers->push_back(nn::Tanh());
  register_module("layers", layers);
}

torch::Tensor GeneratorImpl::forward(torch::Tensor x) {
  if (x.dim() != 4 || x.size(1) != in_channels)
    throw std::invalid_argument("generator expects Bx" + std::to_string(in_channels) +
                                "xHxW input, got " + std::string(torch::str(x.sizes())));
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0)
    throw std::invalid_argument("generator input height/width must be divisible by 4");
  return layers->forward(x);
}

DiscriminatorImpl::DiscriminatorImpl(int in_channels_, AdversarialMode mode_)
    : in_channels(in_channels_), mode(mode_) {
  layers = nn::Sequential();
  layers->push_back(nn::Conv2d(conv_opts(in_channels, 64, 4, 2, 1)));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(64, 128, 4, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(128));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(128, 256, 4, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(256));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(256, 512, 4, 1, 1)));
  layers->push_back(nn::InstanceNorm2d(512));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(512, 1, 4, 1, 1)));
  if (mode == AdversarialMode::Vanilla) layers->push_back(nn::Sigmoid());
  register_module("layers", layers);
}

torch::Tensor DiscriminatorImpl::forward(torch::Tensor x) {
  if (x.dim() != 4 || x.size(1) != in_channels)
    throw std::invalid_argument("discriminator expects Bx" + std::to_string(in_channels) +
                                "xHxW input, got " + std::string(torch::str(x.sizes())));
  return layers->forward(x);
}

ClassifierImpl::ClassifierImpl(int num_classes_) : num_classes(num_classes_) {
  layers = nn::Sequential();
  // discriminator base
  layers->push_back(nn::Conv2d(conv_opts(3, 64, 4, 2, 1)));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(64, 128, 4, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(128));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(128, 256, 4, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(256));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(256, 512, 4, 1, 1)));
  layers->push_back(nn::InstanceNorm2d(512));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  // deeper head
  layers->push_back(nn::Conv2d(conv_opts(512, 512, 4, 2, 1)));
  layers->push_back(nn::InstanceNorm2d(512));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(512, 512, 3, 1, 1)));
  layers->push_back(nn::InstanceNorm2d(512));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(512, 512, 3, 1, 1)));
  layers->push_back(nn::InstanceNorm2d(512));
  layers->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2).inplace(true)));
  layers->push_back(nn::Conv2d(conv_opts(512, num_classes, 1, 1, 0)));
  register_module("layers", layers);
}

torch::Tensor ClassifierImpl::forward(torch::Tensor x) {
  if (x.dim() != 4 || x.size(1) != 3)
    throw std::invalid_argument("classifier expects Bx3xHxW input, got " +
                                std::string(torch::str(x.sizes())));
  auto maps = layers->forward(x);
  return torch::adaptive_avg_pool2d(maps, {1, 1}).flatten(1);
}

Generator build_generator(const ExperimentConfig& cfg) {
  if (cfg.patch_size % 4 != 0)
    throw std::invalid_argument("patch_size must be divisible by 4 for the generator");
  const int in_ch = 3 + (cfg.condition_generator ? cfg.num_classes : 0);
  Generator g(in_ch, cfg.gen_base_channels, cfg.gen_resnet_blocks);
  g->apply(init_weights);
  return g;
}

Discriminator build_discriminator(const ExperimentConfig& cfg) {
  const int in_ch = 3 + (cfg.condition_discriminator ? cfg.num_classes : 0);
  Discriminator d(in_ch, cfg.adversarial_mode);
  d->apply(init_weights);
  return d;
}

Classifier build_classifier(const ExperimentConfig& cfg) {
  Classifier s(cfg.num_classes);
  s->apply(init_weights);
  return s;
}

ModelBundle build_model_bundle(const ExperimentConfig& cfg) {
  cfg.validate();
  ModelBundle b;
  b.gen_conditioned = cfg.condition_generator;
  b.disc_conditioned = cfg.condition_discriminator;
  b.num_classes = cfg.num_classes;
  b.arch = arch_descriptor(cfg);
  b.g_enc = build_generator(cfg);
  b.g_dec = build_generator(cfg);
  b.d_enc = build_discriminator(cfg);
  b.d_dec = build_discriminator(cfg);
  b.s_enc = build_classifier(cfg);
  b.s_dec = build_classifier(cfg);
  return b;
}

void ModelBundle::set_train(bool on) {
  g_enc->train(on);
  g_dec->train(on);
  d_enc->train(on);
  d_dec->train(on);
  s_enc->train(on);
  s_dec->train(on);
}

std::vector<torch::Tensor> ModelBundle::generator_side_parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& m : {g_enc->parameters(), g_dec->parameters()})
    params.insert(params.end(), m.begin(), m.end());
  for (const auto& m : {s_enc->parameters(), s_dec->parameters()})
    params.insert(params.end(), m.begin(), m.end());
  return params;
}

std::vector<torch::Tensor> ModelBundle::discriminator_parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& m : {d_enc->parameters(), d_dec->parameters()})
    params.insert(params.end(), m.begin(), m.end());
  return params;
}

std::string arch_descriptor(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["format"] = 1;
  j["num_classes"] = cfg.num_classes;
  j["condition_generator"] = cfg.condition_generator;
  j["condition_discriminator"] = cfg.condition_discriminator;
  j["gen_base_channels"] = cfg.gen_base_channels;
  j["gen_resnet_blocks"] = cfg.gen_resnet_blocks;
  j["adversarial_mode"] = cfg.adversarial_mode == AdversarialMode::Vanilla ? "vanilla" : "least_squares";
  return j.dump();
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

torch::Tensor with_condition(const torch::Tensor& images, const std::vector<TissueClass>& classes,
                             int num_classes) {
  if (images.dim() != 4 || images.size(1) != 3)
    throw std::invalid_argument("with_condition expects a Bx3xHxW batch");
  if (static_cast<int64_t>(classes.size()) != images.size(0))
    throw std::invalid_argument("with_condition class count does not match batch size");
  std::vector<torch::Tensor> maps;
  maps.reserve(classes.size());
  for (const auto& c : classes)
    maps.push_back(one_hot_condition(c, images.size(2), images.size(3), num_classes,
                                     torch::typeMetaToScalarType(images.dtype())));
  return torch::cat({images, torch::stack(maps)}, 1);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr int64_t kCheckpointVersion = 1;

void write_module(torch::serialize::OutputArchive& root, const std::string& key,
                  const torch::nn::Module& module) {
  torch::serialize::OutputArchive sub;
  // save() is non-const in the Module API but does not mutate.
  const_cast<torch::nn::Module&>(module).save(sub);
  root.write(key, sub);
}

void read_module(torch::serialize::InputArchive& root, const std::string& key,
                 torch::nn::Module& module) {
  torch::serialize::InputArchive sub;
  root.read(key, sub);
  module.load(sub);
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelBundle& bundle,
                     const ExperimentConfig& cfg, int64_t iteration, torch::optim::Adam* optim_g,
                     torch::optim::Adam* optim_d, uint64_t pool_seed_x, uint64_t pool_seed_y) {
  if ((optim_g == nullptr) != (optim_d == nullptr))
    throw std::invalid_argument("save_checkpoint: pass both optimizers or neither");
  torch::serialize::OutputArchive root;
  root.write("version", c10::IValue(kCheckpointVersion));
  root.write("arch", c10::IValue(bundle.arch));
  root.write("config_json", c10::IValue(config_to_json_text(cfg)));
  root.write("iteration", c10::IValue(iteration));
  root.write("has_optimizer_state", c10::IValue(optim_g != nullptr));
  root.write("pool_seed_x", c10::IValue(static_cast<int64_t>(pool_seed_x)));
  root.write("pool_seed_y", c10::IValue(static_cast<int64_t>(pool_seed_y)));
  write_module(root, "g_enc", *bundle.g_enc);
  write_module(root, "g_dec", *bundle.g_dec);
  write_module(root, "d_enc", *bundle.d_enc);
  write_module(root, "d_dec", *bundle.d_dec);
  write_module(root, "s_enc", *bundle.s_enc);
  write_module(root, "s_dec", *bundle.s_dec);
  if (optim_g) {
    torch::serialize::OutputArchive og, od;
    optim_g->save(og);
    optim_d->save(od);
    root.write("optim_g", og);
    root.write("optim_d", od);
  }
  const std::string tmp = path + ".tmp";
  root.save_to(tmp);
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path, const std::string& expected_arch) {
  torch::serialize::InputArchive root;
  root.load_from(path);

  c10::IValue version, arch, config_json, iteration, has_optim, pool_x, pool_y;
  root.read("version", version);
  if (version.toInt() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version.toInt()) +
                             " in " + path);
  root.read("arch", arch);
  root.read("config_json", config_json);
  root.read("iteration", iteration);
  root.read("has_optimizer_state", has_optim);
  root.read("pool_seed_x", pool_x);
  root.read("pool_seed_y", pool_y);

  LoadedCheckpoint out;
  out.config = config_from_json_text(config_json.toStringRef());
  const std::string stored_arch = arch.toStringRef();
  if (stored_arch != arch_descriptor(out.config))
    throw std::runtime_error("checkpoint arch descriptor does not match its config snapshot: " + path);
  if (!expected_arch.empty() && stored_arch != expected_arch)
    throw std::runtime_error("checkpoint architecture mismatch: expected " + expected_arch +
                             ", found " + stored_arch);
  out.iteration = iteration.toInt();
  out.has_optimizer_state = has_optim.toBool();
  out.pool_seed_x = static_cast<uint64_t>(pool_x.toInt());
  out.pool_seed_y = static_cast<uint64_t>(pool_y.toInt());
  out.bundle = build_model_bundle(out.config);
  read_module(root, "g_enc", *out.bundle.g_enc);
  read_module(root, "g_dec", *out.bundle.g_dec);
  read_module(root, "d_enc", *out.bundle.d_enc);
  read_module(root, "d_dec", *out.bundle.d_dec);
  read_module(root, "s_enc", *out.bundle.s_enc);
  read_module(root, "s_dec", *out.bundle.s_dec);
  return out;
}

void load_optimizer_state(const std::string& path, torch::optim::Adam& optim_g,
                          torch::optim::Adam& optim_d) {
  torch::serialize::InputArchive root;
  root.load_from(path);
  c10::IValue has_optim;
  root.read("has_optimizer_state", has_optim);
  if (!has_optim.toBool())
    throw std::runtime_error("checkpoint has no optimizer state: " + path);
  torch::serialize::InputArchive og, od;
  root.read("optim_g", og);
  root.read("optim_d", od);
  optim_g.load(og);
  optim_d.load(od);
}

}  // namespace restain::net
