#include "restain/matting.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace restain::matting {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

double MattingLaplacian::entry(int64_t i, int64_t j) const {
  if (i < 0 || i >= dim() || j < 0 || j >= dim())
    throw std::out_of_range("MattingLaplacian::entry index out of range");
  const auto begin = col_idx.begin() + row_ptr[i];
  const auto end = col_idx.begin() + row_ptr[i + 1];
  auto it = std::lower_bound(begin, end, static_cast<int32_t>(j));
  if (it == end || *it != j) return 0.0;
  return values[static_cast<size_t>(it - col_idx.begin())];
}

double MattingLaplacian::row_sum(int64_t i) const {
  double s = 0.0;
  for (int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += values[static_cast<size_t>(k)];
  return s;
}

torch::Tensor MattingLaplacian::matvec(const torch::Tensor& v) const {
  if (v.dim() != 1 || v.size(0) != dim())
    throw std::invalid_argument("matvec expects a flat vector of length " + std::to_string(dim()));
  auto vd = v.to(torch::kFloat64).contiguous();
  auto out = torch::zeros({dim()}, torch::kFloat64);
  const double* vp = vd.data_ptr<double>();
  double* op = out.data_ptr<double>();
  for (int64_t i = 0; i < dim(); ++i) {
    double acc = 0.0;
    for (int64_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      acc += values[static_cast<size_t>(k)] * vp[col_idx[static_cast<size_t>(k)]];
    op[i] = acc;
  }
  return out;
}

double MattingLaplacian::quadratic_form(const torch::Tensor& v) const {
  auto vd = v.to(torch::kFloat64).contiguous().view({-1});
  return matvec(vd).dot(vd).item<double>();
}

namespace {

// Inverse of a symmetric positive-definite 3x3 matrix via the adjugate.
// m packs the upper triangle: [a b c; b d e; c e f].
struct Sym3 {
  double a, b, c, d, e, f;

  Sym3 inverse() const {
    const double det = a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c);
    const double inv_det = 1.0 / det;
    Sym3 r{};
    r.a = (d * f - e * e) * inv_det;
    r.b = (c * e - b * f) * inv_det;
    r.c = (b * e - c * d) * inv_det;
    r.d = (a * f - c * c) * inv_det;
    r.e = (b * c - a * e) * inv_det;
    r.f = (a * d - b * b) * inv_det;
    return r;
  }

  void apply(const double* v, double* out) const {
    out[0] = a * v[0] + b * v[1] + c * v[2];
    out[1] = b * v[0] + d * v[1] + e * v[2];
    out[2] = c * v[0] + e * v[1] + f * v[2];
  }
};

}  // namespace

MattingLaplacian build_matting_laplacian(const torch::Tensor& image, int window_radius,
                                         double eps) {
  if (image.dim() != 3 || image.size(2) != 3)
    throw std::invalid_argument("build_matting_laplacian expects an HxWx3 image");
  if (window_radius < 1) throw std::invalid_argument("window_radius must be >= 1");
  if (!(eps > 0)) throw std::invalid_argument("eps must be > 0");
  const int h = static_cast<int>(image.size(0));
  const int w = static_cast<int>(image.size(1));
  const int side = 2 * window_radius + 1;
  if (h < side || w < side)
    throw std::invalid_argument("image " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than the " + std::to_string(side) + "x" +
                                std::to_string(side) + " matting window");
  auto img = image.to(torch::kFloat64).contiguous();
  if (!img.isfinite().all().item<bool>())
    throw std::invalid_argument("build_matting_laplacian: image contains non-finite pixels");
  if (img.min().item<double>() < -1e-6 || img.max().item<double>() > 1.0 + 1e-6)
    throw std::invalid_argument("build_matting_laplacian: image values must lie in [0, 1]");

  const double* px = img.data_ptr<double>();
  const int n_win = side * side;
  const int band_half = 2 * window_radius;      // max |dr|, |dc| between co-windowed pixels
  const int band_side = 2 * band_half + 1;
  const int band_width = band_side * band_side;
  const int64_t dim = static_cast<int64_t>(h) * w;

  std::vector<double> band(static_cast<size_t>(dim) * band_width, 0.0);
  std::vector<uint16_t> touched(static_cast<size_t>(dim) * band_width, 0);
  auto band_offset = [&](int dr, int dc) {
    return (dr + band_half) * band_side + (dc + band_half);
  };

  std::vector<int64_t> win_pix(static_cast<size_t>(n_win));
  std::vector<std::array<double, 3>> diff(static_cast<size_t>(n_win));
  std::vector<std::array<double, 3>> adiff(static_cast<size_t>(n_win));

  for (int rc = window_radius; rc < h - window_radius; ++rc) {
    for (int cc = window_radius; cc < w - window_radius; ++cc) {
      double mu[3] = {0, 0, 0};
      double sec[6] = {0, 0, 0, 0, 0, 0};  // upper-triangular second moments
      int k = 0;
      for (int dr = -window_radius; dr <= window_radius; ++dr) {
        for (int dc = -window_radius; dc <= window_radius; ++dc, ++k) {
          const int64_t pix = static_cast<int64_t>(rc + dr) * w + (cc + dc);
          win_pix[static_cast<size_t>(k)] = pix;
          const double* c = px + pix * 3;
          mu[0] += c[0];
          mu[1] += c[1];
          mu[2] += c[2];
          sec[0] += c[0] * c[0];
          sec[1] += c[0] * c[1];
          sec[2] += c[0] * c[2];
          sec[3] += c[1] * c[1];
          sec[4] += c[1] * c[2];
          sec[5] += c[2] * c[2];
        }
      }
      const double inv_n = 1.0 / n_win;
      for (double& m : mu) m *= inv_n;
      Sym3 cov{sec[0] * inv_n - mu[0] * mu[0], sec[1] * inv_n - mu[0] * mu[1],
               sec[2] * inv_n - mu[0] * mu[2], sec[3] * inv_n - mu[1] * mu[1],
               sec[4] * inv_n - mu[1] * mu[2], sec[5] * inv_n - mu[2] * mu[2]};
      cov.a += eps * inv_n;
      cov.d += eps * inv_n;
      cov.f += eps * inv_n;
      const Sym3 inv = cov.inverse();

      for (int i = 0; i < n_win; ++i) {
        const double* c = px + win_pix[static_cast<size_t>(i)] * 3;
        diff[static_cast<size_t>(i)] = {c[0] - mu[0], c[1] - mu[1], c[2] - mu[2]};
        inv.apply(diff[static_cast<size_t>(i)].data(), adiff[static_cast<size_t>(i)].data());
      }

      // Upper-triangle pass keeps the assembled matrix exactly symmetric.
      for (int i = 0; i < n_win; ++i) {
        const int64_t gi = win_pix[static_cast<size_t>(i)];
        const int ri = static_cast<int>(gi / w), ci = static_cast<int>(gi % w);
        for (int j = i; j < n_win; ++j) {
          const int64_t gj = win_pix[static_cast<size_t>(j)];
          const double q = diff[static_cast<size_t>(i)][0] * adiff[static_cast<size_t>(j)][0] +
                           diff[static_cast<size_t>(i)][1] * adiff[static_cast<size_t>(j)][1] +
                           diff[static_cast<size_t>(i)][2] * adiff[static_cast<size_t>(j)][2];
          const double val = (i == j ? 1.0 : 0.0) - (1.0 + q) * inv_n;
          const int rj = static_cast<int>(gj / w), cj = static_cast<int>(gj % w);
          const size_t fwd = static_cast<size_t>(gi) * band_width +
                             static_cast<size_t>(band_offset(rj - ri, cj - ci));
          band[fwd] += val;
          touched[fwd]++;
          if (i != j) {
            const size_t bwd = static_cast<size_t>(gj) * band_width +
                               static_cast<size_t>(band_offset(ri - rj, ci - cj));
            band[bwd] += val;
            touched[bwd]++;
          }
        }
      }
    }
  }

  MattingLaplacian lap;
  lap.height = h;
  lap.width = w;
  lap.window_radius = window_radius;
  lap.eps = eps;
  lap.row_ptr.assign(static_cast<size_t>(dim) + 1, 0);
  for (int64_t i = 0; i < dim; ++i) {
    lap.row_ptr[static_cast<size_t>(i)] = static_cast<int64_t>(lap.values.size());
    const int ri = static_cast<int>(i / w), ci = static_cast<int>(i % w);
    for (int dr = -band_half; dr <= band_half; ++dr) {
      const int rj = ri + dr;
      if (rj < 0 || rj >= h) continue;
      for (int dc = -band_half; dc <= band_half; ++dc) {
        const int cj = ci + dc;
        if (cj < 0 || cj >= w) continue;
        const size_t cell = static_cast<size_t>(i) * band_width +
                            static_cast<size_t>(band_offset(dr, dc));
        if (!touched[cell]) continue;
        lap.col_idx.push_back(static_cast<int32_t>(rj * w + cj));
        lap.values.push_back(band[cell]);
      }
    }
  }
  lap.row_ptr[static_cast<size_t>(dim)] = static_cast<int64_t>(lap.values.size());
  return lap;
}

double photorealism_penalty(const MattingLaplacian& m, const torch::Tensor& img) {
  if (img.dim() != 3 || img.size(2) != 3)
    throw std::invalid_argument("photorealism_penalty expects an HxWx3 image");
  if (img.size(0) != m.height || img.size(1) != m.width)
    throw std::invalid_argument("photorealism_penalty image shape " +
                                std::string(torch::str(img.sizes())) + " does not match Laplacian " +
                                std::to_string(m.height) + "x" + std::to_string(m.width));
  auto channels = img.to(torch::kFloat64).permute({2, 0, 1}).reshape({3, -1});
  double total = 0.0;
  for (int k = 0; k < 3; ++k) total += m.quadratic_form(channels[k]);
  return total;
}

namespace {

struct PhoQuadFunction : public torch::autograd::Function<PhoQuadFunction> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& img,
                               const MattingLaplacian* m) {
    auto flat = img.detach().to(torch::kFloat64).reshape({3, -1});
    auto mv = torch::empty_like(flat);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      auto r = m->matvec(flat[k]);
      mv[k] = r;
      total += flat[k].dot(r).item<double>();
    }
    ctx->save_for_backward({img, mv});
    return torch::scalar_tensor(total, img.options());
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grad_outputs) {
    auto saved = ctx->get_saved_variables();
    const auto& img = saved[0];
    const auto& mv = saved[1];
    auto grad = grad_outputs[0].to(torch::kFloat64) * 2.0 * mv;
    return {grad.reshape(img.sizes()).to(img.scalar_type()), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor photorealism_quadratic(const MattingLaplacian& m, const torch::Tensor& img_chw) {
  if (img_chw.dim() != 3 || img_chw.size(0) != 3)
    throw std::invalid_argument("photorealism_quadratic expects a 3xHxW image");
  if (img_chw.size(1) != m.height || img_chw.size(2) != m.width)
    throw std::invalid_argument("photorealism_quadratic image shape does not match Laplacian");
  return PhoQuadFunction::apply(img_chw, &m);
}

// ---------------------------------------------------------------------------
// Binary Laplacian files: explicit little-endian layout so caches can move
// between machines.
namespace {

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct ByteReader {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("truncated Laplacian file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

constexpr char kMagic[8] = {'R', 'S', 'L', 'A', 'P', '0', '0', '1'};

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void write_laplacian_file(const std::string& path, const std::string& key,
                          const MattingLaplacian& lap) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<uint32_t>(lap.height));
  put_u32(out, static_cast<uint32_t>(lap.width));
  put_u32(out, static_cast<uint32_t>(lap.window_radius));
  put_f64(out, lap.eps);
  put_u64(out, key.size());
  out.append(key);
  put_u64(out, static_cast<uint64_t>(lap.nnz()));
  for (int64_t i = 0; i < lap.dim(); ++i) {
    for (int64_t k = lap.row_ptr[i]; k < lap.row_ptr[i + 1]; ++k) {
      put_u32(out, static_cast<uint32_t>(i));
      put_u32(out, static_cast<uint32_t>(lap.col_idx[static_cast<size_t>(k)]));
      put_f64(out, lap.values[static_cast<size_t>(k)]);
    }
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write Laplacian file: " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
  }
  fs::rename(tmp, path);
}

MattingLaplacian read_laplacian_file(const std::string& path, std::string* key_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open Laplacian file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  ByteReader r{buf};
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw std::runtime_error("bad magic in Laplacian file: " + path);
  MattingLaplacian lap;
  lap.height = static_cast<int>(r.u32());
  lap.width = static_cast<int>(r.u32());
  lap.window_radius = static_cast<int>(r.u32());
  lap.eps = r.f64();
  const std::string key = r.bytes(r.u64());
  if (key_out) *key_out = key;
  const uint64_t nnz = r.u64();
  lap.row_ptr.assign(static_cast<size_t>(lap.dim()) + 1, 0);
  std::vector<std::tuple<uint32_t, uint32_t, double>> triplets;
  triplets.reserve(nnz);
  for (uint64_t k = 0; k < nnz; ++k) {
    const uint32_t row = r.u32();
    const uint32_t col = r.u32();
    const double val = r.f64();
    triplets.emplace_back(row, col, val);
  }
  std::sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
    return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
  });
  std::vector<int64_t> row_count(static_cast<size_t>(lap.dim()), 0);
  lap.col_idx.reserve(nnz);
  lap.values.reserve(nnz);
  for (const auto& [row, col, val] : triplets) {
    if (row >= lap.dim() || col >= lap.dim())
      throw std::runtime_error("Laplacian file index out of range: " + path);
    row_count[row]++;
    lap.col_idx.push_back(static_cast<int32_t>(col));
    lap.values.push_back(val);
  }
  int64_t acc = 0;
  for (int64_t i = 0; i < lap.dim(); ++i) {
    lap.row_ptr[static_cast<size_t>(i)] = acc;
    acc += row_count[static_cast<size_t>(i)];
  }
  lap.row_ptr[static_cast<size_t>(lap.dim())] = acc;
  return lap;
}

// ---------------------------------------------------------------------------

LaplacianCache::LaplacianCache(std::string disk_dir, int resolution, int window_radius, double eps)
    : disk_dir_(std::move(disk_dir)), resolution_(resolution), window_radius_(window_radius), eps_(eps) {
  if (!disk_dir_.empty()) fs::create_directories(disk_dir_);
}

std::string LaplacianCache::key_for(const std::string& source_id) const {
  std::ostringstream os;
  os << source_id << "|r" << resolution_ << "|w" << window_radius_ << "|e";
  os.precision(17);
  os << eps_;
  return os.str();
}

const MattingLaplacian* LaplacianCache::load_from_disk(const std::string& key) {
  if (disk_dir_.empty()) return nullptr;
  const fs::path index = fs::path(disk_dir_) / "index.tsv";
  if (!fs::exists(index)) return nullptr;
  std::ifstream in(index);
  std::string line;
  std::string file;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    if (line.substr(0, tab) == key) {
      file = line.substr(tab + 1);
      break;
    }
  }
  if (file.empty()) return nullptr;
  std::string stored_key;
  auto lap = read_laplacian_file((fs::path(disk_dir_) / file).string(), &stored_key);
  if (stored_key != key)
    throw std::runtime_error("Laplacian cache corruption: key mismatch in " + file);
  auto owned = std::make_unique<MattingLaplacian>(std::move(lap));
  const MattingLaplacian* ptr = owned.get();
  memory_[key] = std::move(owned);
  return ptr;
}

void LaplacianCache::store_to_disk(const std::string& key, const MattingLaplacian& lap) {
  if (disk_dir_.empty()) return;
  char name[32];
  std::snprintf(name, sizeof(name), "%016llx.lap",
                static_cast<unsigned long long>(fnv1a64(key)));
  write_laplacian_file((fs::path(disk_dir_) / name).string(), key, lap);
  std::ofstream idx(fs::path(disk_dir_) / "index.tsv", std::ios::app);
  idx << key << '\t' << name << '\n';
}

const MattingLaplacian& LaplacianCache::get(const std::string& source_id,
                                            const torch::Tensor& image01_hwc) {
  const std::string key = key_for(source_id);
  {
    std::shared_lock lock(mutex_);
    auto it = memory_.find(key);
    if (it != memory_.end()) return *it->second;
  }
  std::unique_lock lock(mutex_);
  auto it = memory_.find(key);
  if (it != memory_.end()) return *it->second;
  if (const MattingLaplacian* disk = load_from_disk(key)) return *disk;

  auto img = image01_hwc;
  if (img.size(0) != resolution_ || img.size(1) != resolution_)
    throw std::invalid_argument("LaplacianCache::get image must already be at the cache resolution " +
                                std::to_string(resolution_));
  auto lap = std::make_unique<MattingLaplacian>(
      build_matting_laplacian(img, window_radius_, eps_));
  const MattingLaplacian* ptr = lap.get();
  memory_[key] = std::move(lap);
  store_to_disk(key, *ptr);
  return *ptr;
}

const MattingLaplacian& LaplacianCache::get_precomputed(const std::string& source_id) {
  const std::string key = key_for(source_id);
  {
    std::shared_lock lock(mutex_);
    auto it = memory_.find(key);
    if (it != memory_.end()) return *it->second;
  }
  std::unique_lock lock(mutex_);
  auto it = memory_.find(key);
  if (it != memory_.end()) return *it->second;
  if (const MattingLaplacian* disk = load_from_disk(key)) return *disk;
  throw std::runtime_error("photorealism Laplacian cache miss for patch '" + source_id +
                           "' (precomputation required but no cached entry found)");
}

bool LaplacianCache::contains(const std::string& source_id) {
  const std::string key = key_for(source_id);
  std::shared_lock lock(mutex_);
  if (memory_.count(key)) return true;
  if (disk_dir_.empty()) return false;
  const fs::path index = fs::path(disk_dir_) / "index.tsv";
  if (!fs::exists(index)) return false;
  std::ifstream in(index);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos && line.substr(0, tab) == key) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

PhotorealismOptions PhotorealismOptions::from_config(const ExperimentConfig& cfg) {
  PhotorealismOptions o;
  o.resolution = cfg.pho_resolution;
  o.window_radius = cfg.pho_window_radius;
  o.eps = cfg.pho_eps;
  o.symmetric = cfg.pho_symmetric;
  return o;
}

namespace {

torch::Tensor to_unit_range(const torch::Tensor& t) { return (t + 1) * 0.5; }

torch::Tensor resize_to(const torch::Tensor& batch, int resolution) {
  if (batch.size(2) == resolution && batch.size(3) == resolution) return batch;
  return F::interpolate(batch, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{resolution, resolution})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
}

}  // namespace

torch::Tensor photorealism_loss(const torch::Tensor& x, const torch::Tensor& g_enc_x,
                                const torch::Tensor& y, const torch::Tensor& g_dec_y,
                                const std::vector<std::string>& x_ids,
                                const std::vector<std::string>& y_ids, LaplacianCache& cache,
                                const PhotorealismOptions& opts) {
  if (x.sizes() != g_enc_x.sizes() || y.sizes() != g_dec_y.sizes())
    throw std::invalid_argument("photorealism_loss real/generated shape mismatch");
  if (x.dim() != 4 || x.size(1) != 3 || y.dim() != 4 || y.size(1) != 3)
    throw std::invalid_argument("photorealism_loss expects Bx3xHxW batches");
  const int64_t batch = x.size(0);
  if (y.size(0) != batch || static_cast<int64_t>(x_ids.size()) != batch ||
      static_cast<int64_t>(y_ids.size()) != batch)
    throw std::invalid_argument("photorealism_loss batch/id count mismatch");
  if (cache.resolution() != opts.resolution || cache.window_radius() != opts.window_radius ||
      cache.eps() != opts.eps)
    throw std::invalid_argument("photorealism_loss cache parameters do not match options");

  auto x01 = resize_to(to_unit_range(x.detach()), opts.resolution);
  auto y01 = resize_to(to_unit_range(y.detach()), opts.resolution);
  auto gx01 = resize_to(to_unit_range(g_enc_x), opts.resolution);
  auto gy01 = resize_to(to_unit_range(g_dec_y), opts.resolution);

  auto loss = torch::zeros({}, x.options());
  double constant_terms = 0.0;
  for (int64_t b = 0; b < batch; ++b) {
    auto get_real = [&](const std::string& id, const torch::Tensor& real_chw) -> const MattingLaplacian& {
      if (opts.build_on_miss) return cache.get(id, real_chw.permute({1, 2, 0}).contiguous());
      return cache.get_precomputed(id);
    };
    const auto& m_x = get_real(x_ids[static_cast<size_t>(b)], x01[b]);
    const auto& m_y = get_real(y_ids[static_cast<size_t>(b)], y01[b]);
    loss = loss + photorealism_quadratic(m_x, gx01[b]);
    loss = loss + photorealism_quadratic(m_y, gy01[b]);
    if (opts.symmetric) {
      // Eq.-as-printed second term: the real image measured against the
      // generated image's Laplacian. Constant w.r.t. the generated pixels.
      auto m_gx = build_matting_laplacian(gx01[b].detach().permute({1, 2, 0}).contiguous(),
                                          opts.window_radius, opts.eps);
      auto m_gy = build_matting_laplacian(gy01[b].detach().permute({1, 2, 0}).contiguous(),
                                          opts.window_radius, opts.eps);
      constant_terms += photorealism_penalty(m_gx, x01[b].permute({1, 2, 0}).contiguous());
      constant_terms += photorealism_penalty(m_gy, y01[b].permute({1, 2, 0}).contiguous());
    }
  }
  loss = loss / static_cast<double>(batch);
  if (constant_terms != 0.0)
    loss = loss + torch::scalar_tensor(constant_terms / static_cast<double>(batch), x.options());
  return loss;
}

}  // namespace restain::matting
