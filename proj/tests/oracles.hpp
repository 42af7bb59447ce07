// Independent brute-force reference implementations used only by tests.
// Everything here is scalar loops over double buffers (or torch::linalg for
// the 3x3 inverses) so it shares no code path with the library.
#pragma once

#include <torch/torch.h>

#include <cmath>
#include <vector>

namespace oracles {

inline std::vector<double> to_vec(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64).contiguous().reshape({-1});
  return std::vector<double>(d.data_ptr<double>(), d.data_ptr<double>() + d.numel());
}

inline double mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  const auto va = to_vec(a);
  const auto vb = to_vec(b);
  double s = 0;
  for (size_t i = 0; i < va.size(); ++i) s += std::fabs(va[i] - vb[i]);
  return s / static_cast<double>(va.size());
}

inline double cycle_loss(const torch::Tensor& x, const torch::Tensor& x_rec,
                         const torch::Tensor& y, const torch::Tensor& y_rec) {
  return mean_abs_diff(x_rec, x) + mean_abs_diff(y_rec, y);
}

inline double identity_same_domain(const torch::Tensor& x, const torch::Tensor& dec_out,
                                   const torch::Tensor& y, const torch::Tensor& enc_out) {
  return mean_abs_diff(enc_out, y) + mean_abs_diff(dec_out, x);
}

inline double softmax_cross_entropy(const torch::Tensor& logits, const std::vector<int>& labels) {
  const auto v = to_vec(logits);
  const int n = static_cast<int>(logits.size(0));
  const int c = static_cast<int>(logits.size(1));
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < c; ++j) mx = std::max(mx, v[static_cast<size_t>(i * c + j)]);
    double denom = 0;
    for (int j = 0; j < c; ++j) denom += std::exp(v[static_cast<size_t>(i * c + j)] - mx);
    const double logit = v[static_cast<size_t>(i * c + labels[static_cast<size_t>(i)])];
    total += -(logit - mx - std::log(denom));
  }
  return total / n;
}

inline double classification_cycle(const torch::Tensor& pa, const torch::Tensor& pb) {
  const auto a = to_vec(pa);
  const auto b = to_vec(pb);
  const int n = static_cast<int>(pa.size(0));
  const int c = static_cast<int>(pa.size(1));
  double total = 0;
  for (int i = 0; i < n; ++i) {
    double row = 0;
    for (int j = 0; j < c; ++j)
      row += std::fabs(a[static_cast<size_t>(i * c + j)] - b[static_cast<size_t>(i * c + j)]);
    total += row;
  }
  return total / n;
}

inline double adversarial_d_least_squares(const torch::Tensor& real, const torch::Tensor& fake) {
  const auto r = to_vec(real);
  const auto f = to_vec(fake);
  double sr = 0, sf = 0;
  for (double v : r) sr += (v - 1) * (v - 1);
  for (double v : f) sf += v * v;
  return 0.5 * (sr / static_cast<double>(r.size()) + sf / static_cast<double>(f.size()));
}

inline double adversarial_d_vanilla(const torch::Tensor& real, const torch::Tensor& fake) {
  const auto r = to_vec(real);
  const auto f = to_vec(fake);
  double sr = 0, sf = 0;
  for (double v : r) sr += std::log(v);
  for (double v : f) sf += std::log(1 - v);
  return -sr / static_cast<double>(r.size()) - sf / static_cast<double>(f.size());
}

inline double adversarial_g_least_squares(const torch::Tensor& fake) {
  const auto f = to_vec(fake);
  double s = 0;
  for (double v : f) s += (v - 1) * (v - 1);
  return s / static_cast<double>(f.size());
}

// --- SSIM -------------------------------------------------------------

struct SsimOracleParams {
  int window = 11;
  bool gaussian = true;
  double sigma = 1.5;
  double q1 = 4e-4;
  double q2 = 3.6e-3;
};

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

// Per-pixel SSIM map via explicit window loops with reflect indexing.
inline torch::Tensor ssim_map(const torch::Tensor& x, const torch::Tensor& y,
                              const SsimOracleParams& p, bool product_mode) {
  const int h = static_cast<int>(x.size(0));
  const int w = static_cast<int>(x.size(1));
  const int k = p.window;
  const int half = k / 2;
  const auto vx = to_vec(x);
  const auto vy = to_vec(y);

  std::vector<double> weights(static_cast<size_t>(k) * k);
  double wsum = 0;
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      double wv = 1.0;
      if (p.gaussian) {
        const double da = a - half, db = b - half;
        wv = std::exp(-(da * da + db * db) / (2 * p.sigma * p.sigma));
      }
      weights[static_cast<size_t>(a * k + b)] = wv;
      wsum += wv;
    }
  }
  for (auto& wv : weights) wv /= wsum;

  auto out = torch::empty({h, w}, torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          const int rr = reflect_index(r + a - half, h);
          const int cc = reflect_index(c + b - half, w);
          const double wv = weights[static_cast<size_t>(a * k + b)];
          const double xv = vx[static_cast<size_t>(rr * w + cc)];
          const double yv = vy[static_cast<size_t>(rr * w + cc)];
          mx += wv * xv;
          my += wv * yv;
          mxx += wv * xv * xv;
          myy += wv * yv * yv;
          mxy += wv * xv * yv;
        }
      }
      const double sxx = mxx - mx * mx;
      const double syy = myy - my * my;
      const double sxy = mxy - mx * my;
      const double lum = (2 * mx * my + p.q1) / (mx * mx + my * my + p.q1);
      const double con = (2 * sxy + p.q2) / (sxx + syy + p.q2);
      acc[r][c] = product_mode ? lum * con : lum + con;
    }
  }
  return out;
}

inline double ssim_mean(const torch::Tensor& a, const torch::Tensor& b,
                        const SsimOracleParams& p, bool product_mode) {
  // a, b: BxCxHxW
  double total = 0;
  int64_t count = 0;
  for (int64_t n = 0; n < a.size(0); ++n) {
    for (int64_t c = 0; c < a.size(1); ++c) {
      auto map = ssim_map(a[n][c], b[n][c], p, product_mode);
      total += map.sum().item<double>();
      count += map.numel();
    }
  }
  return total / static_cast<double>(count);
}

// --- Matting Laplacian --------------------------------------------------

// Dense per-window accumulation with torch::linalg inverses: O(N^2) memory,
// independent of the banded CSR assembly in the library.
inline torch::Tensor dense_matting_laplacian(const torch::Tensor& image, int radius, double eps) {
  const int h = static_cast<int>(image.size(0));
  const int w = static_cast<int>(image.size(1));
  const int side = 2 * radius + 1;
  const int nwin = side * side;
  const int64_t dim = static_cast<int64_t>(h) * w;
  auto img = image.to(torch::kFloat64);
  auto L = torch::zeros({dim, dim}, torch::kFloat64);
  auto acc = L.accessor<double, 2>();

  for (int rc = radius; rc < h - radius; ++rc) {
    for (int cc = radius; cc < w - radius; ++cc) {
      auto colors = torch::empty({nwin, 3}, torch::kFloat64);
      std::vector<int64_t> pix(static_cast<size_t>(nwin));
      int k = 0;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc, ++k) {
          pix[static_cast<size_t>(k)] = static_cast<int64_t>(rc + dr) * w + (cc + dc);
          colors[k] = img[rc + dr][cc + dc];
        }
      }
      auto mu = colors.mean(0);
      auto centered = colors - mu.unsqueeze(0);
      auto cov = centered.t().mm(centered) / nwin;
      auto reg = cov + (eps / nwin) * torch::eye(3, torch::kFloat64);
      auto inv = torch::linalg_inv(reg);
      auto q = centered.mm(inv).mm(centered.t());  // nwin x nwin
      auto qa = q.accessor<double, 2>();
      for (int i = 0; i < nwin; ++i)
        for (int j = 0; j < nwin; ++j)
          acc[pix[static_cast<size_t>(i)]][pix[static_cast<size_t>(j)]] +=
              (i == j ? 1.0 : 0.0) - (1.0 + qa[i][j]) / nwin;
    }
  }
  return L;
}

inline double dense_quadratic_form(const torch::Tensor& L, const torch::Tensor& img_hwc) {
  auto flat = img_hwc.to(torch::kFloat64).permute({2, 0, 1}).reshape({3, -1});
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    auto v = flat[c];
    total += v.dot(L.mv(v)).item<double>();
  }
  return total;
}

}  // namespace oracles
