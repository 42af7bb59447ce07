#include "restain/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace restain::train {

namespace fs = std::filesystem;

const char* LossTerms::first_non_finite() const {
  const std::pair<const char*, double> named[] = {
      {"adv_enc", adv_enc}, {"adv_dec", adv_dec}, {"cyc", cyc},   {"id", id},
      {"cls", cls},         {"clcyc", clcyc},     {"ssim", ssim}, {"pho", pho}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) return name;
  return nullptr;
}

double total_objective(const LossTerms& parts, const LossWeights& w) {
  if (const char* bad = parts.first_non_finite())
    throw std::runtime_error(std::string("total_objective: loss term '") + bad + "' is not finite");
  return parts.adv_enc + parts.adv_dec + w.lambda_cyc * parts.cyc + w.delta_id * parts.id +
         w.gamma_cls * parts.cls + w.gamma_cls * parts.clcyc + w.alpha_ssim * parts.ssim +
         w.beta_pho * parts.pho;
}

TrainState init_train_state(const ExperimentConfig& cfg) {
  cfg.validate();
  torch::set_num_threads(cfg.num_threads);
  torch::manual_seed(cfg.seed);

  TrainState st;
  st.cfg = cfg;
  st.bundle = net::build_model_bundle(cfg);
  auto adam_opts = torch::optim::AdamOptions(cfg.learning_rate)
                       .betas(std::make_tuple(cfg.adam_beta1, cfg.adam_beta2));
  st.optim_g = std::make_unique<torch::optim::Adam>(st.bundle.generator_side_parameters(), adam_opts);
  st.optim_d = std::make_unique<torch::optim::Adam>(st.bundle.discriminator_parameters(), adam_opts);
  st.pool_x = ConditionalImagePool(cfg.pool_capacity_per_class, mix_seed(cfg.seed, 1));
  st.pool_y = ConditionalImagePool(cfg.pool_capacity_per_class, mix_seed(cfg.seed, 2));
  st.pho_cache = std::make_unique<matting::LaplacianCache>(cfg.cache_dir, cfg.pho_resolution,
                                                           cfg.pho_window_radius, cfg.pho_eps);
  st.ssim_params = losses::SsimParams::from_config(cfg);
  return st;
}

double lr_at(const ExperimentConfig& cfg, int64_t iteration) {
  const int64_t start = cfg.effective_decay_start();
  if (iteration < start) return cfg.learning_rate;
  const int64_t span = std::max<int64_t>(1, cfg.total_iterations - start);
  const double frac = static_cast<double>(cfg.total_iterations - iteration) / static_cast<double>(span);
  return cfg.learning_rate * std::max(0.0, frac);
}

void set_learning_rate(torch::optim::Adam& optim, double lr) {
  for (auto& group : optim.param_groups()) group.options().set_lr(lr);
}

namespace {

void set_requires_grad(const net::ModelBundle& b, bool d_nets) {
  for (const auto& p : b.discriminator_parameters()) p.set_requires_grad(d_nets);
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

}  // namespace

LossTerms train_step(TrainState& st, const std::vector<LabeledPatch>& x_batch,
                     const std::vector<LabeledPatch>& y_batch) {
  if (x_batch.empty() || x_batch.size() != y_batch.size())
    throw std::invalid_argument("train_step requires nonempty x/y batches of equal size");
  const auto classes = data::batch_classes(x_batch);
  if (classes != data::batch_classes(y_batch))
    throw std::invalid_argument("train_step x/y batches must share one class sequence");

  const auto& cfg = st.cfg;
  auto& b = st.bundle;
  b.set_train(true);

  auto x = data::stack_batch(x_batch);
  auto y = data::stack_batch(y_batch);
  const int C = cfg.num_classes;
  auto gen_in = [&](const torch::Tensor& t) {
    return b.gen_conditioned ? net::with_condition(t, classes, C) : t;
  };
  auto disc_in = [&](const torch::Tensor& t) {
    return b.disc_conditioned ? net::with_condition(t, classes, C) : t;
  };

  LossTerms terms;

  // --- (a) generators + classifiers, discriminators frozen
  set_requires_grad(b, false);
  st.optim_g->zero_grad();

  auto fake_y = b.g_enc->forward(gen_in(x));
  auto rec_x = b.g_dec->forward(gen_in(fake_y));
  auto fake_x = b.g_dec->forward(gen_in(y));
  auto rec_y = b.g_enc->forward(gen_in(fake_x));

  auto adv_g_enc = losses::adversarial_loss_g(b.d_enc->forward(disc_in(fake_y)), cfg.adversarial_mode);
  auto adv_g_dec = losses::adversarial_loss_g(b.d_dec->forward(disc_in(fake_x)), cfg.adversarial_mode);
  auto cyc = losses::cycle_loss(x, rec_x, y, rec_y);

  auto enc_idt = b.g_enc->forward(gen_in(y));
  auto dec_idt = cfg.identity_mode == IdentityMode::SameDomain ? b.g_dec->forward(gen_in(x))
                                                               : b.g_dec->forward(gen_in(y));
  auto id = losses::identity_loss(x, dec_idt, y, enc_idt, cfg.identity_mode);

  auto logits_sx = b.s_enc->forward(x);
  auto logits_sy = b.s_dec->forward(y);
  auto cls = losses::classifier_loss(logits_sx, classes) + losses::classifier_loss(logits_sy, classes);

  torch::Tensor clcyc;
  if (cfg.clcyc_mode == ClcycMode::TranslatedPair) {
    clcyc = losses::classification_cycle_loss(torch::softmax(logits_sx, 1),
                                              torch::softmax(b.s_dec->forward(fake_y), 1)) +
            losses::classification_cycle_loss(torch::softmax(logits_sy, 1),
                                              torch::softmax(b.s_enc->forward(fake_x), 1));
  } else {
    clcyc = losses::classification_cycle_loss(torch::softmax(logits_sx, 1),
                                              torch::softmax(logits_sy, 1));
  }

  auto ssim = losses::ssim_loss(x, fake_y, y, fake_x, st.ssim_params, cfg.ssim_mode);
  auto pho = matting::photorealism_loss(x, fake_y, y, fake_x, data::batch_ids(x_batch),
                                        data::batch_ids(y_batch), *st.pho_cache,
                                        matting::PhotorealismOptions::from_config(cfg));

  terms.cyc = scalar(cyc);
  terms.id = scalar(id);
  terms.cls = scalar(cls);
  terms.clcyc = scalar(clcyc);
  terms.ssim = scalar(ssim);
  terms.pho = scalar(pho);

  auto g_total = adv_g_enc + adv_g_dec + cfg.weights.lambda_cyc * cyc + cfg.weights.delta_id * id +
                 cfg.weights.gamma_cls * cls + cfg.weights.gamma_cls * clcyc +
                 cfg.weights.alpha_ssim * ssim + cfg.weights.beta_pho * pho;
  {
    LossTerms gen_side = terms;
    gen_side.adv_enc = scalar(adv_g_enc);
    gen_side.adv_dec = scalar(adv_g_dec);
    if (const char* bad = gen_side.first_non_finite())
      throw std::runtime_error(std::string("train_step aborted: generator-side loss term '") + bad +
                               "' is not finite at iteration " + std::to_string(st.iteration));
  }
  g_total.backward();
  st.optim_g->step();

  // --- (b) discriminators on real vs pool-queried fakes
  set_requires_grad(b, true);
  st.optim_d->zero_grad();

  std::vector<torch::Tensor> pooled_y, pooled_x;
  pooled_y.reserve(classes.size());
  pooled_x.reserve(classes.size());
  for (size_t i = 0; i < classes.size(); ++i) {
    pooled_y.push_back(st.pool_y.query(fake_y[static_cast<int64_t>(i)].detach(), classes[i]));
    pooled_x.push_back(st.pool_x.query(fake_x[static_cast<int64_t>(i)].detach(), classes[i]));
  }
  auto fake_y_hist = torch::stack(pooled_y);
  auto fake_x_hist = torch::stack(pooled_x);

  losses::AdversarialScores enc_scores{b.d_enc->forward(disc_in(y)),
                                       b.d_enc->forward(disc_in(fake_y_hist)), cfg.adversarial_mode};
  losses::AdversarialScores dec_scores{b.d_dec->forward(disc_in(x)),
                                       b.d_dec->forward(disc_in(fake_x_hist)), cfg.adversarial_mode};
  auto d_enc_loss = losses::adversarial_loss_d(enc_scores);
  auto d_dec_loss = losses::adversarial_loss_d(dec_scores);
  terms.adv_enc = scalar(d_enc_loss);
  terms.adv_dec = scalar(d_dec_loss);
  if (const char* bad = terms.first_non_finite())
    throw std::runtime_error(std::string("train_step aborted: loss term '") + bad +
                             "' is not finite at iteration " + std::to_string(st.iteration));
  (d_enc_loss + d_dec_loss).backward();
  st.optim_d->step();

  st.iteration += 1;
  st.recent.push_back(terms);
  while (st.recent.size() > 256) st.recent.pop_front();
  return terms;
}

std::string format_metrics_line(int64_t iteration, const LossTerms& t, const LossWeights& w) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld\tadv_enc=%.8g\tadv_dec=%.8g\tcyc=%.8g\tid=%.8g\tcls=%.8g\tclcyc=%.8g"
                "\tssim=%.8g\tpho=%.8g\ttotal=%.8g",
                static_cast<long long>(iteration), t.adv_enc, t.adv_dec, t.cyc, t.id, t.cls,
                t.clcyc, t.ssim, t.pho, total_objective(t, w));
  return std::string(buf);
}

std::string find_latest_checkpoint(const std::string& out_dir) {
  if (!fs::exists(out_dir)) return "";
  const std::regex pattern(R"(ckpt_(\d+)\.restain)");
  std::string best;
  int64_t best_iter = -1;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const int64_t iter = std::stoll(m[1].str());
      if (iter > best_iter) {
        best_iter = iter;
        best = entry.path().string();
      }
    }
  }
  return best;
}

namespace {

std::string checkpoint_name(const std::string& out_dir, int64_t iteration) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ckpt_%07lld.restain", static_cast<long long>(iteration));
  return (fs::path(out_dir) / buf).string();
}

// On resume the metrics log is truncated back to the checkpoint iteration so
// the file never contains lines from a discarded tail.
void truncate_metrics(const std::string& path, int64_t max_iteration) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const int64_t iter = std::stoll(line.substr(0, line.find('\t')));
    if (iter <= max_iteration) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

}  // namespace

RunResult run_training(const ExperimentConfig& cfg, const data::DatasetManifest& manifest,
                       const std::string& out_dir, bool resume) {
  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.tsv").string();

  TrainState st;
  if (resume) {
    const std::string latest = find_latest_checkpoint(out_dir);
    if (latest.empty())
      throw std::runtime_error("--resume requested but no checkpoint found in " + out_dir);
    auto loaded = net::load_checkpoint(latest);
    if (!loaded.has_optimizer_state)
      throw std::runtime_error("checkpoint " + latest + " carries no optimizer state; cannot resume");
    // The stored config snapshot is authoritative for a resumed run.
    st = init_train_state(loaded.config);
    st.bundle = std::move(loaded.bundle);
    auto adam_opts = torch::optim::AdamOptions(loaded.config.learning_rate)
                         .betas(std::make_tuple(loaded.config.adam_beta1, loaded.config.adam_beta2));
    st.optim_g =
        std::make_unique<torch::optim::Adam>(st.bundle.generator_side_parameters(), adam_opts);
    st.optim_d =
        std::make_unique<torch::optim::Adam>(st.bundle.discriminator_parameters(), adam_opts);
    net::load_optimizer_state(latest, *st.optim_g, *st.optim_d);
    st.iteration = loaded.iteration;
    truncate_metrics(metrics_path, st.iteration);
  } else {
    st = init_train_state(cfg);
    std::ofstream wipe(metrics_path, std::ios::trunc);
  }

  if (manifest.patch_size() != st.cfg.patch_size)
    throw std::runtime_error("manifest patch size " + std::to_string(manifest.patch_size()) +
                             " does not match config patch_size " + std::to_string(st.cfg.patch_size));
  if (st.cfg.num_classes < static_cast<int>(manifest.classes_present().size()))
    throw std::runtime_error("manifest uses more classes than config num_classes");

  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw std::runtime_error("cannot open metrics log: " + metrics_path);

  RunResult result;
  result.metrics_path = metrics_path;
  while (st.iteration < st.cfg.total_iterations) {
    const int64_t iter = st.iteration;
    const double lr = lr_at(st.cfg, iter);
    set_learning_rate(*st.optim_g, lr);
    set_learning_rate(*st.optim_d, lr);

    // Per-step derived stream: sampling at step i does not depend on how
    // the process reached step i, so resumed runs replay the same data.
    std::mt19937_64 rng(mix_seed(st.cfg.seed, 0x5a11ed + static_cast<uint64_t>(iter)));
    auto [xb, yb] = data::sample_paired_batches(manifest, st.cfg.class_balance,
                                                st.cfg.batch_size, rng);
    const LossTerms terms = train_step(st, xb, yb);
    metrics << format_metrics_line(st.iteration, terms, st.cfg.weights) << '\n';
    metrics.flush();
    result.iterations_run += 1;

    if (st.iteration % st.cfg.checkpoint_every == 0 && st.iteration < st.cfg.total_iterations) {
      net::save_checkpoint(checkpoint_name(out_dir, st.iteration), st.bundle, st.cfg, st.iteration,
                           st.optim_g.get(), st.optim_d.get(), st.pool_x.seed(), st.pool_y.seed());
    }
  }

  result.checkpoint_path = checkpoint_name(out_dir, st.iteration);
  net::save_checkpoint(result.checkpoint_path, st.bundle, st.cfg, st.iteration, st.optim_g.get(),
                       st.optim_d.get(), st.pool_x.seed(), st.pool_y.seed());
  return result;
}

}  // namespace restain::train
