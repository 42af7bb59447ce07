#include <torch/torch.h>

#include <filesystem>
#include <stdexcept>

#include <doctest.h>

#include "restain/core.hpp"

using namespace restain;

TEST_SUITE("core") {

TEST_CASE("tissue class taxonomy is a fixed bijection onto 0..7") {
  CHECK(kNumTissueClasses == 8);
  for (int i = 0; i < 8; ++i) {
    const auto c = class_from_index(i);
    CHECK(class_index(c) == i);
    CHECK(class_from_token(class_token(c)) == c);
  }
  CHECK(class_index(TissueClass::H) == 0);
  CHECK(class_index(TissueClass::TN) == 6);
  CHECK(class_index(TissueClass::BG) == 7);
  CHECK(class_token(TissueClass::HF) == "HF");
  CHECK_THROWS_AS(class_from_token("XX"), std::invalid_argument);
  CHECK_THROWS_AS(class_from_index(8), std::invalid_argument);
}

TEST_CASE("stain domain tokens") {
  CHECK(domain_from_token("X") == StainDomain::X);
  CHECK(domain_from_token("Y") == StainDomain::Y);
  CHECK(other_domain(StainDomain::X) == StainDomain::Y);
  CHECK_THROWS_AS(domain_from_token("Z"), std::invalid_argument);
  CHECK(source_domain(Direction::YtoX) == StainDomain::Y);
  CHECK(target_domain(Direction::YtoX) == StainDomain::X);
}

TEST_CASE("normalize_image endpoints and midpoint") {
  auto zeros = torch::zeros({4, 4, 3}, torch::kUInt8);
  auto z = normalize_image(zeros);
  CHECK(z.min().item<float>() == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(z.max().item<float>() == doctest::Approx(-1.0).epsilon(1e-7));

  auto full = torch::full({4, 4, 3}, 255, torch::kUInt8);
  auto f = normalize_image(full);
  CHECK(f.min().item<float>() == doctest::Approx(1.0).epsilon(1e-7));

  auto mid = torch::full({2, 2, 3}, 128, torch::kUInt8);
  auto m = normalize_image(mid);
  CHECK(m[0][0][0].item<double>() == doctest::Approx(128.0 / 127.5 - 1.0).epsilon(1e-7));

  CHECK_THROWS_AS(normalize_image(torch::zeros({4, 4, 1}, torch::kUInt8)), std::invalid_argument);
  CHECK_THROWS_AS(normalize_image(torch::zeros({4, 4}, torch::kUInt8)), std::invalid_argument);
}

TEST_CASE("normalize/denormalize round-trips every 8-bit value exactly") {
  auto ramp = torch::arange(256, torch::kInt32);
  auto img = ramp.view({16, 16, 1}).repeat({1, 1, 3}).to(torch::kUInt8);
  auto back = denormalize_image(normalize_image(img));
  CHECK(back.equal(img));
}

TEST_CASE("one_hot_condition layout and partition of unity") {
  auto m = one_hot_condition(TissueClass::H, 4, 4, 8);
  CHECK(m.sizes() == torch::IntArrayRef({8, 4, 4}));
  CHECK(m[0].min().item<float>() == 1.0f);
  CHECK(m.narrow(0, 1, 7).abs().max().item<float>() == 0.0f);

  auto bg = one_hot_condition(TissueClass::BG, 16, 16, 8);
  CHECK(bg[7].min().item<float>() == 1.0f);

  for (const auto& c : kAllTissueClasses) {
    auto oh = one_hot_condition(c, 5, 3, 8);
    auto channel_sum = oh.sum(0);
    CHECK(channel_sum.min().item<float>() == 1.0f);
    CHECK(channel_sum.max().item<float>() == 1.0f);
  }

  CHECK_THROWS_AS(one_hot_condition(TissueClass::BG, 4, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(one_hot_condition(TissueClass::H, 0, 4, 8), std::invalid_argument);
}

TEST_CASE("loss weight defaults match the experiment configuration") {
  LossWeights w;
  CHECK(w.lambda_cyc == 10.0);
  CHECK(w.delta_id == 5.0);
  CHECK(w.gamma_cls == 0.5);
  CHECK(w.alpha_ssim == 0.5);
  CHECK(w.beta_pho == 1.0);
  w.lambda_cyc = -1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}

TEST_CASE("config json round trip and strict unknown-key rejection") {
  ExperimentConfig cfg;
  cfg.patch_size = 64;
  cfg.num_classes = 3;
  cfg.seed = 1234;
  cfg.weights.delta_id = 2.5;
  cfg.ssim_mode = SsimMode::PaperSum;
  cfg.identity_mode = IdentityMode::PaperLiteral;
  cfg.clcyc_mode = ClcycMode::UnpairedSameClass;
  cfg.adversarial_mode = AdversarialMode::Vanilla;

  auto text = config_to_json_text(cfg);
  auto parsed = config_from_json_text(text);
  CHECK(parsed.patch_size == 64);
  CHECK(parsed.num_classes == 3);
  CHECK(parsed.seed == 1234);
  CHECK(parsed.weights.delta_id == 2.5);
  CHECK(parsed.ssim_mode == SsimMode::PaperSum);
  CHECK(parsed.identity_mode == IdentityMode::PaperLiteral);
  CHECK(parsed.clcyc_mode == ClcycMode::UnpairedSameClass);
  CHECK(parsed.adversarial_mode == AdversarialMode::Vanilla);
  CHECK(config_to_json_text(parsed) == text);

  CHECK_THROWS_WITH_AS(config_from_json_text(R"({"lambda_cycle": 1.0})"),
                       doctest::Contains("unknown config key: 'lambda_cycle'"),
                       std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"ssim_mode": "product"})"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text("not json"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text(R"({"patch_size": 13})"), std::invalid_argument);

  const auto path = std::filesystem::temp_directory_path() / "restain_cfg_test.json";
  save_config(cfg, path.string());
  auto from_file = load_config(path.string());
  CHECK(from_file.num_classes == 3);
  std::filesystem::remove(path);
}

TEST_CASE("labeled patch validation") {
  LabeledPatch p;
  p.pixels = torch::zeros({3, 8, 8});
  CHECK_NOTHROW(p.validate());
  CHECK_NOTHROW(p.validate(8));
  CHECK_THROWS_AS(p.validate(16), std::invalid_argument);
  p.pixels = torch::full({3, 8, 8}, 1.5f);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.pixels = torch::zeros({1, 8, 8});
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

}  // TEST_SUITE
