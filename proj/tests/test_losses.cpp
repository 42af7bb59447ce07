#include <torch/torch.h>

#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "oracles.hpp"
#include "restain/losses.hpp"

using namespace restain;
using namespace restain::losses;

namespace {

torch::Tensor rnd(std::initializer_list<int64_t> shape, double lo = -1.0, double hi = 1.0) {
  return torch::rand(shape, torch::kFloat64) * (hi - lo) + lo;
}

double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-12});
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("adversarial discriminator loss spot values") {
  AdversarialScores s;
  s.mode = AdversarialMode::LeastSquares;
  s.real_scores = torch::ones({2, 1, 4, 4}, torch::kFloat64);
  s.fake_scores = torch::zeros({2, 1, 4, 4}, torch::kFloat64);
  CHECK(adversarial_loss_d(s).item<double>() == doctest::Approx(0.0).epsilon(1e-12));

  s.real_scores = torch::full({3, 5}, 0.5, torch::kFloat64);
  s.fake_scores = torch::full({3, 5}, 0.5, torch::kFloat64);
  CHECK(std::fabs(adversarial_loss_d(s).item<double>() - 0.25) < 1e-9);

  s.mode = AdversarialMode::Vanilla;
  CHECK(adversarial_loss_d(s).item<double>() == doctest::Approx(2 * std::log(2)).epsilon(1e-9));

  s.fake_scores = torch::full({3, 5}, 1.5, torch::kFloat64);
  CHECK_THROWS_AS(adversarial_loss_d(s), std::domain_error);
  s.fake_scores = torch::Tensor();
  CHECK_THROWS_AS(adversarial_loss_d(s), std::invalid_argument);
}

TEST_CASE("adversarial generator loss spot values") {
  auto ones = torch::ones({4, 4}, torch::kFloat64);
  CHECK(adversarial_loss_g(ones, AdversarialMode::LeastSquares).item<double>() == 0.0);
  auto zeros = torch::zeros({4, 4}, torch::kFloat64);
  CHECK(adversarial_loss_g(zeros, AdversarialMode::LeastSquares).item<double>() == 1.0);
  auto half = torch::full({4, 4}, 0.5, torch::kFloat64);
  CHECK(adversarial_loss_g(half, AdversarialMode::Vanilla).item<double>() ==
        doctest::Approx(std::log(2)).epsilon(1e-9));
  CHECK_THROWS_AS(adversarial_loss_g(zeros, AdversarialMode::Vanilla), std::domain_error);
}

TEST_CASE("adversarial losses match scalar oracles on random scores") {
  torch::manual_seed(3);
  auto real = rnd({2, 1, 6, 6}, -2.0, 2.0);
  auto fake = rnd({2, 1, 6, 6}, -2.0, 2.0);
  AdversarialScores s{real, fake, AdversarialMode::LeastSquares};
  CHECK(rel_err(adversarial_loss_d(s).item<double>(),
                oracles::adversarial_d_least_squares(real, fake)) < 1e-6);
  CHECK(rel_err(adversarial_loss_g(fake, AdversarialMode::LeastSquares).item<double>(),
                oracles::adversarial_g_least_squares(fake)) < 1e-6);

  auto real01 = rnd({2, 1, 6, 6}, 0.05, 0.95);
  auto fake01 = rnd({2, 1, 6, 6}, 0.05, 0.95);
  AdversarialScores v{real01, fake01, AdversarialMode::Vanilla};
  CHECK(rel_err(adversarial_loss_d(v).item<double>(),
                oracles::adversarial_d_vanilla(real01, fake01)) < 1e-6);
}

TEST_CASE("classifier loss spot values and oracle agreement") {
  auto uniform = torch::zeros({3, 8}, torch::kFloat64);
  auto labels = std::vector<TissueClass>{TissueClass::H, TissueClass::TN, TissueClass::BG};
  CHECK(classifier_loss(uniform, labels).item<double>() ==
        doctest::Approx(std::log(8.0)).epsilon(1e-9));

  auto saturated = torch::zeros({1, 8}, torch::kFloat64);
  saturated[0][2] = 60.0;  // saturates the softmax onto the true class
  CHECK(classifier_loss(saturated, {TissueClass::N}).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-12));

  auto margin = torch::zeros({1, 8}, torch::kFloat64);
  margin[0][0] = 2.0;
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 7.0));
  CHECK(classifier_loss(margin, {TissueClass::H}).item<double>() ==
        doctest::Approx(expected).epsilon(1e-9));

  torch::manual_seed(11);
  auto logits = rnd({5, 8}, -3.0, 3.0);
  auto idx = torch::tensor({0L, 1L, 7L, 4L, 2L}, torch::kLong);
  CHECK(rel_err(classifier_loss(logits, idx).item<double>(),
                oracles::softmax_cross_entropy(logits, {0, 1, 7, 4, 2})) < 1e-6);

  CHECK_THROWS_AS(classifier_loss(logits, torch::tensor({0L, 1L, 8L, 4L, 2L}, torch::kLong)),
                  std::invalid_argument);
}

TEST_CASE("cycle loss: identity, uniform offset, oracle, symmetry") {
  torch::manual_seed(5);
  auto x = rnd({2, 3, 8, 8});
  auto y = rnd({2, 3, 8, 8});
  CHECK(cycle_loss(x, x, y, y).item<double>() == 0.0);

  auto x0 = torch::zeros({2, 3, 8, 8}, torch::kFloat64);
  auto xr = torch::full({2, 3, 8, 8}, 0.5, torch::kFloat64);
  CHECK(cycle_loss(x0, xr, y, y).item<double>() == doctest::Approx(0.5).epsilon(1e-12));

  auto x_rec = rnd({2, 3, 8, 8});
  auto y_rec = rnd({2, 3, 8, 8});
  CHECK(rel_err(cycle_loss(x, x_rec, y, y_rec).item<double>(),
                oracles::cycle_loss(x, x_rec, y, y_rec)) < 1e-6);
  CHECK(cycle_loss(x, x_rec, y, y_rec).item<double>() ==
        cycle_loss(y, y_rec, x, x_rec).item<double>());

  CHECK_THROWS_AS(cycle_loss(x, x_rec.narrow(2, 0, 4), y, y_rec), std::invalid_argument);
}

TEST_CASE("classification cycle loss") {
  torch::manual_seed(4);
  auto p = torch::softmax(rnd({4, 8}, -2, 2), 1);
  CHECK(classification_cycle_loss(p, p).item<double>() == 0.0);

  auto a = torch::zeros({1, 8}, torch::kFloat64);
  auto b = torch::zeros({1, 8}, torch::kFloat64);
  a[0][0] = 1.0;
  b[0][1] = 1.0;
  CHECK(classification_cycle_loss(a, b).item<double>() == doctest::Approx(2.0).epsilon(1e-12));

  auto c = torch::zeros({1, 8}, torch::kFloat64);
  auto d = torch::zeros({1, 8}, torch::kFloat64);
  c[0][0] = 0.5;
  c[0][1] = 0.5;
  d[0][0] = 0.25;
  d[0][1] = 0.75;
  CHECK(classification_cycle_loss(c, d).item<double>() == doctest::Approx(0.5).epsilon(1e-12));

  auto q = torch::softmax(rnd({4, 8}, -2, 2), 1);
  CHECK(rel_err(classification_cycle_loss(p, q).item<double>(),
                oracles::classification_cycle(p, q)) < 1e-6);

  auto bad = p.clone();
  bad[0][0] += 0.01;
  CHECK_THROWS_AS(classification_cycle_loss(bad, q), std::invalid_argument);
}

TEST_CASE("identity loss modes") {
  torch::manual_seed(6);
  auto x = rnd({2, 3, 8, 8});
  auto y = rnd({2, 3, 8, 8});
  CHECK(identity_loss(x, x, y, y, IdentityMode::SameDomain).item<double>() == 0.0);

  auto enc_out = y + 0.1;
  CHECK(identity_loss(x, x, y, enc_out, IdentityMode::SameDomain).item<double>() ==
        doctest::Approx(0.1).epsilon(1e-9));

  auto dec_out = rnd({2, 3, 8, 8});
  auto enc_rand = rnd({2, 3, 8, 8});
  CHECK(rel_err(identity_loss(x, dec_out, y, enc_rand, IdentityMode::SameDomain).item<double>(),
                oracles::identity_same_domain(x, dec_out, y, enc_rand)) < 1e-6);

  // paper-literal pairing: enc_out against x, dec_out (= G_dec(y)) against y
  const double lit = identity_loss(x, dec_out, y, enc_rand, IdentityMode::PaperLiteral).item<double>();
  CHECK(rel_err(lit, oracles::mean_abs_diff(enc_rand, x) + oracles::mean_abs_diff(dec_out, y)) < 1e-6);

  CHECK_THROWS_AS(identity_loss(x, dec_out.narrow(0, 0, 1), y, enc_rand, IdentityMode::SameDomain),
                  std::invalid_argument);
}

TEST_CASE("ssim_map endpoints and spot values") {
  torch::manual_seed(7);
  const auto p = SsimParams::make(5, true, 1.5, 0.01, 0.03, 1.0);

  auto img = rnd({8, 8}, 0.0, 1.0);
  auto same = ssim_map(img, img, p, SsimMode::StandardProduct);
  CHECK(same.min().item<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(same.max().item<double>() == doctest::Approx(1.0).epsilon(1e-9));
  auto same_sum = ssim_map(img, img, p, SsimMode::PaperSum);
  CHECK(same_sum.min().item<double>() == doctest::Approx(2.0).epsilon(1e-9));

  auto zeros = torch::zeros({8, 8}, torch::kFloat64);
  auto ones = torch::ones({8, 8}, torch::kFloat64);
  auto map = ssim_map(zeros, ones, p, SsimMode::StandardProduct);
  const double expected = 1e-4 / (1.0 + 1e-4);  // luminance term only; contrast term is 1
  CHECK(map.min().item<double>() == doctest::Approx(expected).epsilon(1e-9));
  CHECK(map.max().item<double>() == doctest::Approx(expected).epsilon(1e-9));

  auto constant = torch::full({8, 8}, 0.37, torch::kFloat64);
  auto cmap = ssim_map(constant, constant, p, SsimMode::PaperSum);
  CHECK(cmap.min().item<double>() == doctest::Approx(2.0).epsilon(1e-9));

  CHECK_THROWS_AS(ssim_map(torch::zeros({4, 4}), torch::zeros({4, 4}), SsimParams::make(11),
                           SsimMode::StandardProduct),
                  std::invalid_argument);
}

TEST_CASE("ssim_map symmetry and range") {
  torch::manual_seed(8);
  const auto p = SsimParams::make(5);
  auto x = rnd({10, 12}, -1, 1);
  auto y = rnd({10, 12}, -1, 1);
  auto ab = ssim_map(x, y, p, SsimMode::StandardProduct);
  auto ba = ssim_map(y, x, p, SsimMode::StandardProduct);
  CHECK(ab.equal(ba));
  CHECK(ab.min().item<double>() >= -1.0 - 1e-9);
  CHECK(ab.max().item<double>() <= 1.0 + 1e-9);
  auto sum_map = ssim_map(x, y, p, SsimMode::PaperSum);
  CHECK(sum_map.min().item<double>() >= -2.0 - 1e-9);
  CHECK(sum_map.max().item<double>() <= 2.0 + 1e-9);
}

TEST_CASE("ssim_map rescale invariance when Q constants follow the dynamic range") {
  torch::manual_seed(9);
  auto x = rnd({9, 9}, 0.0, 1.0);
  auto y = rnd({9, 9}, 0.0, 1.0);
  const double range = 2.0;
  const auto p1 = SsimParams::make(5, true, 1.5, 0.01, 0.03, 1.0);
  const auto p2 = SsimParams::make(5, true, 1.5, 0.01, 0.03, range);
  auto base = ssim_map(x, y, p1, SsimMode::StandardProduct);
  auto scaled = ssim_map(x * range, y * range, p2, SsimMode::StandardProduct);
  CHECK((base - scaled).abs().max().item<double>() < 1e-6);
}

TEST_CASE("ssim_map matches the windowed-statistics oracle") {
  torch::manual_seed(10);
  for (bool gaussian : {true, false}) {
    const auto p = SsimParams::make(5, gaussian, 1.5, 0.01, 0.03, 2.0);
    oracles::SsimOracleParams op;
    op.window = 5;
    op.gaussian = gaussian;
    op.q1 = p.q1;
    op.q2 = p.q2;
    auto x = rnd({8, 8}, -1, 1);
    auto y = rnd({8, 8}, -1, 1);
    for (bool product : {true, false}) {
      auto mine = ssim_map(x, y, p, product ? SsimMode::StandardProduct : SsimMode::PaperSum);
      auto ref = oracles::ssim_map(x, y, op, product);
      CHECK((mine - ref).abs().max().item<double>() < 1e-9);
    }
  }
}

TEST_CASE("ssim_loss endpoints, bounds, oracle") {
  torch::manual_seed(12);
  const auto p = SsimParams::make(5);
  auto x = rnd({2, 3, 8, 8});
  auto y = rnd({2, 3, 8, 8});
  CHECK(ssim_loss(x, x, y, y, p, SsimMode::StandardProduct).item<double>() ==
        doctest::Approx(0.0).epsilon(1e-9));
  CHECK(ssim_loss(x, x, y, y, p, SsimMode::PaperSum).item<double>() ==
        doctest::Approx(-2.0).epsilon(1e-9));

  auto xo = rnd({2, 3, 8, 8});
  auto yo = rnd({2, 3, 8, 8});
  const double product = ssim_loss(x, xo, y, yo, p, SsimMode::StandardProduct).item<double>();
  CHECK(product >= 0.0);
  CHECK(product <= 4.0);
  const double summed = ssim_loss(x, xo, y, yo, p, SsimMode::PaperSum).item<double>();
  CHECK(summed >= -2.0);
  CHECK(summed <= 6.0);

  oracles::SsimOracleParams op;
  op.window = 5;
  op.q1 = p.q1;
  op.q2 = p.q2;
  const double expected =
      (1 - oracles::ssim_mean(xo, x, op, true)) + (1 - oracles::ssim_mean(yo, y, op, true));
  CHECK(rel_err(product, expected) < 1e-6);
}

TEST_CASE("every loss is nonnegative in default mode on random inputs") {
  torch::manual_seed(13);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = rnd({2, 3, 8, 8});
    auto y = rnd({2, 3, 8, 8});
    auto xr = rnd({2, 3, 8, 8});
    auto yr = rnd({2, 3, 8, 8});
    CHECK(cycle_loss(x, xr, y, yr).item<double>() >= 0.0);
    CHECK(identity_loss(x, xr, y, yr, IdentityMode::SameDomain).item<double>() >= 0.0);
    auto pa = torch::softmax(rnd({3, 8}, -2, 2), 1);
    auto pb = torch::softmax(rnd({3, 8}, -2, 2), 1);
    CHECK(classification_cycle_loss(pa, pb).item<double>() >= 0.0);
    auto logits = rnd({3, 8}, -3, 3);
    CHECK(classifier_loss(logits, torch::tensor({0L, 1L, 2L}, torch::kLong)).item<double>() >= 0.0);
    AdversarialScores s{rnd({2, 1, 4, 4}, -2, 2), rnd({2, 1, 4, 4}, -2, 2),
                        AdversarialMode::LeastSquares};
    CHECK(adversarial_loss_d(s).item<double>() >= 0.0);
    const auto p = SsimParams::make(5);
    CHECK(ssim_loss(x, xr, y, yr, p, SsimMode::StandardProduct).item<double>() >= 0.0);
    CHECK(ssim_loss(x, xr, y, yr, p, SsimMode::PaperSum).item<double>() >= -2.0);
  }
}

}  // TEST_SUITE
