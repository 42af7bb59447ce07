#include <torch/torch.h>

#include <filesystem>
#include <stdexcept>

#include <doctest.h>

#include "restain/networks.hpp"

using namespace restain;
using namespace restain::net;

namespace {

ExperimentConfig small_cfg() {
  ExperimentConfig cfg;
  cfg.patch_size = 32;
  cfg.num_classes = 3;
  cfg.gen_base_channels = 8;
  cfg.gen_resnet_blocks = 2;
  return cfg;
}

}  // namespace

TEST_SUITE("networks") {

TEST_CASE("generator shape contract and output range") {
  auto cfg = small_cfg();
  torch::manual_seed(1);
  auto g = build_generator(cfg);
  torch::NoGradGuard no_grad;

  auto in32 = torch::randn({1, 3 + 3, 32, 32});
  auto out = g->forward(in32);
  CHECK(out.sizes() == torch::IntArrayRef({1, 3, 32, 32}));
  CHECK(out.min().item<float>() >= -1.0f);
  CHECK(out.max().item<float>() <= 1.0f);

  // fully convolutional: any multiple-of-4 size passes through unchanged
  auto out64 = g->forward(torch::randn({2, 6, 64, 64}));
  CHECK(out64.sizes() == torch::IntArrayRef({2, 3, 64, 64}));
  auto out48 = g->forward(torch::randn({1, 6, 48, 48}));
  CHECK(out48.sizes() == torch::IntArrayRef({1, 3, 48, 48}));

  CHECK_THROWS_AS(g->forward(torch::randn({1, 6, 30, 30})), std::invalid_argument);
  CHECK_THROWS_AS(g->forward(torch::randn({1, 4, 32, 32})), std::invalid_argument);

  auto bad = small_cfg();
  bad.patch_size = 30;
  CHECK_THROWS_AS(build_generator(bad), std::invalid_argument);
}

TEST_CASE("generator range survives extreme weight scales (tanh head)") {
  auto cfg = small_cfg();
  torch::manual_seed(2);
  auto g = build_generator(cfg);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : g->parameters()) p.mul_(25.0);
  }
  torch::NoGradGuard no_grad;
  auto out = g->forward(torch::randn({1, 6, 32, 32}) * 10);
  CHECK(out.min().item<float>() >= -1.0f);
  CHECK(out.max().item<float>() <= 1.0f);
}

TEST_CASE("default generator handles a 256px conditioned input") {
  ExperimentConfig cfg;  // 8 classes, conditioned, base 64
  torch::manual_seed(3);
  auto g = build_generator(cfg);
  torch::NoGradGuard no_grad;
  auto out = g->forward(torch::randn({1, 11, 256, 256}));
  CHECK(out.sizes() == torch::IntArrayRef({1, 3, 256, 256}));
  CHECK(out.abs().max().item<float>() <= 1.0f);
}

TEST_CASE("discriminator emits the frozen 30x30 patch map at 256px") {
  ExperimentConfig cfg;
  torch::manual_seed(4);
  auto d = build_discriminator(cfg);
  torch::NoGradGuard no_grad;
  auto map = d->forward(torch::randn({1, 11, 256, 256}));
  CHECK(map.sizes() == torch::IntArrayRef({1, 1, 30, 30}));
  auto map64 = d->forward(torch::randn({1, 11, 64, 64}));
  CHECK(map64.sizes() == torch::IntArrayRef({1, 1, 6, 6}));

  CHECK_THROWS_AS(d->forward(torch::randn({1, 3, 64, 64})), std::invalid_argument);
}

TEST_CASE("vanilla discriminator appends a sigmoid; least-squares stays raw") {
  auto cfg = small_cfg();
  cfg.adversarial_mode = AdversarialMode::Vanilla;
  torch::manual_seed(5);
  auto dv = build_discriminator(cfg);
  torch::NoGradGuard no_grad;
  auto scores = dv->forward(torch::randn({2, 6, 32, 32}) * 5);
  CHECK(scores.min().item<float>() > 0.0f);
  CHECK(scores.max().item<float>() < 1.0f);

  cfg.adversarial_mode = AdversarialMode::LeastSquares;
  torch::manual_seed(5);
  auto dl = build_discriminator(cfg);
  auto raw = dl->forward(torch::randn({2, 6, 32, 32}) * 5);
  const bool escapes_unit_interval =
      raw.min().item<float>() < 0.0f || raw.max().item<float>() > 1.0f;
  CHECK(escapes_unit_interval);
}

TEST_CASE("classifier: size-independent C-way logits, softmax normalized") {
  ExperimentConfig cfg;
  torch::manual_seed(6);
  auto s = build_classifier(cfg);
  torch::NoGradGuard no_grad;
  auto l256 = s->forward(torch::randn({1, 3, 256, 256}));
  CHECK(l256.sizes() == torch::IntArrayRef({1, 8}));
  auto l64 = s->forward(torch::randn({2, 3, 64, 64}));
  CHECK(l64.sizes() == torch::IntArrayRef({2, 8}));
  auto probs = torch::softmax(l64, 1).sum(1);
  CHECK((probs - 1).abs().max().item<float>() < 1e-6);
  CHECK_THROWS_AS(s->forward(torch::randn({1, 4, 64, 64})), std::invalid_argument);
}

TEST_CASE("seeded construction is deterministic") {
  auto cfg = small_cfg();
  auto in = torch::randn({1, 6, 32, 32});
  torch::manual_seed(42);
  auto b1 = build_model_bundle(cfg);
  torch::manual_seed(42);
  auto b2 = build_model_bundle(cfg);
  torch::NoGradGuard no_grad;
  CHECK(b1.g_enc->forward(in).equal(b2.g_enc->forward(in)));
  CHECK(b1.d_dec->forward(in).equal(b2.d_dec->forward(in)));
  CHECK(b1.s_enc->forward(in.narrow(1, 0, 3)).equal(b2.s_enc->forward(in.narrow(1, 0, 3))));
}

TEST_CASE("parameter counts are locked for the reference configurations") {
  ExperimentConfig cfg;  // 8 classes, conditioned, base 64, 9 blocks
  torch::manual_seed(0);
  auto b = build_model_bundle(cfg);
  CHECK(parameter_count(*b.g_enc) == 11403267);
  CHECK(parameter_count(*b.g_dec) == 11403267);
  CHECK(parameter_count(*b.d_enc) == 2772929);
  CHECK(parameter_count(*b.s_enc) == 11675080);

  ExperimentConfig desk;
  desk.num_classes = 3;
  desk.patch_size = 64;
  desk.gen_base_channels = 32;
  torch::manual_seed(0);
  auto db = build_model_bundle(desk);
  CHECK(parameter_count(*db.g_enc) == 2855267);
  CHECK(parameter_count(*db.d_enc) == 2767809);
  CHECK(parameter_count(*db.s_enc) == 11672515);
}

TEST_CASE("with_condition concatenates one-hot maps") {
  auto imgs = torch::zeros({2, 3, 4, 4});
  auto out = with_condition(imgs, {TissueClass::F, TissueClass::H}, 3);
  CHECK(out.sizes() == torch::IntArrayRef({2, 6, 4, 4}));
  CHECK(out[0][3 + 1].min().item<float>() == 1.0f);  // F -> channel index 1
  CHECK(out[1][3 + 0].min().item<float>() == 1.0f);  // H -> channel index 0
  CHECK(out[0][3 + 0].abs().max().item<float>() == 0.0f);
  CHECK_THROWS_AS(with_condition(imgs, {TissueClass::F}, 3), std::invalid_argument);
}

TEST_CASE("unconditioned bundle keeps 3-channel generators") {
  auto cfg = small_cfg();
  cfg.condition_generator = false;
  cfg.condition_discriminator = false;
  torch::manual_seed(7);
  auto b = build_model_bundle(cfg);
  torch::NoGradGuard no_grad;
  CHECK(b.g_enc->forward(torch::randn({1, 3, 32, 32})).sizes() ==
        torch::IntArrayRef({1, 3, 32, 32}));
  CHECK_FALSE(b.gen_conditioned);
}

TEST_CASE("checkpoint round trip preserves weights, config, iteration, pool seeds") {
  namespace fs = std::filesystem;
  auto cfg = small_cfg();
  cfg.seed = 99;
  torch::manual_seed(cfg.seed);
  auto b = build_model_bundle(cfg);
  const auto path = (fs::temp_directory_path() / "restain_ckpt_test.restain").string();

  torch::optim::Adam og(b.generator_side_parameters(), torch::optim::AdamOptions(1e-3));
  torch::optim::Adam od(b.discriminator_parameters(), torch::optim::AdamOptions(1e-3));
  save_checkpoint(path, b, cfg, 1234, &og, &od, 7, 8);

  auto loaded = load_checkpoint(path);
  CHECK(loaded.iteration == 1234);
  CHECK(loaded.has_optimizer_state);
  CHECK(loaded.pool_seed_x == 7);
  CHECK(loaded.pool_seed_y == 8);
  CHECK(loaded.config.num_classes == 3);
  CHECK(loaded.config.seed == 99);
  CHECK(loaded.bundle.arch == b.arch);

  torch::NoGradGuard no_grad;
  auto in = torch::randn({1, 6, 32, 32});
  CHECK(loaded.bundle.g_enc->forward(in).equal(b.g_enc->forward(in)));
  CHECK(loaded.bundle.s_dec->forward(in.narrow(1, 0, 3)).equal(b.s_dec->forward(in.narrow(1, 0, 3))));

  // arch mismatch is rejected before weights are touched
  auto other = small_cfg();
  other.gen_base_channels = 16;
  CHECK_THROWS_AS(load_checkpoint(path, arch_descriptor(other)), std::runtime_error);
  CHECK_NOTHROW(load_checkpoint(path, arch_descriptor(cfg)));
  fs::remove(path);
}

TEST_CASE("arch descriptor tracks architectural fields only") {
  auto a = small_cfg();
  auto b = small_cfg();
  b.learning_rate = 123.0;
  b.seed = 555;
  CHECK(arch_descriptor(a) == arch_descriptor(b));
  b.gen_resnet_blocks = 3;
  CHECK(arch_descriptor(a) != arch_descriptor(b));
  auto c = small_cfg();
  c.condition_generator = false;
  CHECK(arch_descriptor(a) != arch_descriptor(c));
}

}  // TEST_SUITE
