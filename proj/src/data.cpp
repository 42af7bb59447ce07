#include "restain/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace restain::data {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace {

size_t cell_slot(StainDomain d, TissueClass c) {
  return static_cast<size_t>(d == StainDomain::X ? 0 : kNumTissueClasses) +
         static_cast<size_t>(class_index(c));
}

constexpr const char* kMagnificationPrefix = "# magnification: ";

}  // namespace

void DatasetManifest::index_cells() {
  for (auto& cell : cells_) cell.clear();
  for (size_t i = 0; i < entries_.size(); ++i)
    cells_[cell_slot(entries_[i].domain, entries_[i].tissue_class)].push_back(static_cast<int>(i));
}

DatasetManifest make_manifest(std::vector<ManifestEntry> entries, int patch_size,
                              std::string magnification_tag) {
  DatasetManifest m;
  m.entries_ = std::move(entries);
  m.patch_size_ = patch_size;
  m.magnification_tag_ = std::move(magnification_tag);
  m.index_cells();
  return m;
}

DatasetManifest DatasetManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest file: " + path);
  const fs::path base = fs::path(path).parent_path();

  DatasetManifest m;
  std::set<std::string> seen_paths;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind(kMagnificationPrefix, 0) == 0)
        m.magnification_tag_ = line.substr(std::string(kMagnificationPrefix).size());
      continue;
    }
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    const std::string where = "manifest line " + std::to_string(lineno);
    if (fields.size() != 4)
      throw std::runtime_error(where + ": expected 4 tab-separated fields (path, domain, class, source_id), got " +
                               std::to_string(fields.size()));
    ManifestEntry e;
    e.path = fields[0];
    try {
      e.domain = domain_from_token(fields[1]);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error(where + ": " + err.what());
    }
    try {
      e.tissue_class = class_from_token(fields[2]);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error(where + ": " + err.what());
    }
    e.source_id = fields[3];
    const fs::path p(e.path);
    e.resolved = p.is_absolute() ? e.path : (base / p).string();
    if (!seen_paths.insert(e.resolved).second)
      throw std::runtime_error(where + ": duplicate path '" + e.path + "'");
    if (!fs::exists(e.resolved))
      throw std::runtime_error(where + ": missing file '" + e.resolved + "'");
    torch::Tensor img;
    try {
      img = read_image_uint8_hwc(e.resolved);
    } catch (const std::exception& err) {
      throw std::runtime_error(where + ": unreadable image '" + e.resolved + "': " + err.what());
    }
    if (img.size(0) != img.size(1))
      throw std::runtime_error(where + ": patch must be square, got " +
                               std::to_string(img.size(0)) + "x" + std::to_string(img.size(1)));
    if (m.patch_size_ == 0) {
      m.patch_size_ = static_cast<int>(img.size(0));
    } else if (img.size(0) != m.patch_size_) {
      throw std::runtime_error(where + ": patch size " + std::to_string(img.size(0)) +
                               " differs from manifest patch size " + std::to_string(m.patch_size_));
    }
    m.entries_.push_back(std::move(e));
  }

  if (m.count_nolock(StainDomain::X) == 0 || m.count_nolock(StainDomain::Y) == 0)
    throw std::runtime_error("manifest must contain at least one entry per domain: " + path);
  m.index_cells();
  return m;
}

// count before cells are indexed
int DatasetManifest::count_nolock(StainDomain d) const {
  int n = 0;
  for (const auto& e : entries_)
    if (e.domain == d) ++n;
  return n;
}

void DatasetManifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest file: " + path);
  out << kMagnificationPrefix << magnification_tag_ << '\n';
  for (const auto& e : entries_)
    out << e.path << '\t' << domain_token(e.domain) << '\t' << class_token(e.tissue_class) << '\t'
        << e.source_id << '\n';
}

int DatasetManifest::count(StainDomain d) const {
  int n = 0;
  for (const auto& c : kAllTissueClasses) n += count(d, c);
  return n;
}

int DatasetManifest::count(StainDomain d, TissueClass c) const {
  return static_cast<int>(cells_[cell_slot(d, c)].size());
}

const std::vector<int>& DatasetManifest::cell(StainDomain d, TissueClass c) const {
  return cells_[cell_slot(d, c)];
}

std::vector<TissueClass> DatasetManifest::classes_present(StainDomain d) const {
  std::vector<TissueClass> out;
  for (const auto& c : kAllTissueClasses)
    if (count(d, c) > 0) out.push_back(c);
  return out;
}

std::vector<TissueClass> DatasetManifest::classes_present() const {
  std::vector<TissueClass> out;
  for (const auto& c : kAllTissueClasses)
    if (count(StainDomain::X, c) > 0 && count(StainDomain::Y, c) > 0) out.push_back(c);
  return out;
}

LabeledPatch DatasetManifest::load_patch(int entry_index) const {
  if (entry_index < 0 || entry_index >= static_cast<int>(entries_.size()))
    throw std::out_of_range("manifest entry index out of range");
  const auto& e = entries_[static_cast<size_t>(entry_index)];
  return load_patch_file(e.resolved, e.domain, e.tissue_class, e.source_id);
}

torch::Tensor read_image_uint8_hwc(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot decode image: " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  return t.clone();
}

void write_image_uint8_hwc(const std::string& path, const torch::Tensor& img) {
  if (img.dim() != 3 || img.size(2) != 3 || img.scalar_type() != torch::kUInt8)
    throw std::invalid_argument("write_image_uint8_hwc expects an HxWx3 uint8 tensor");
  auto contig = img.contiguous();
  cv::Mat rgb(static_cast<int>(img.size(0)), static_cast<int>(img.size(1)), CV_8UC3,
              contig.data_ptr<uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw std::runtime_error("failed to write image: " + path);
}

LabeledPatch load_patch_file(const std::string& path, StainDomain domain, TissueClass c,
                             const std::string& source_id) {
  auto raw = read_image_uint8_hwc(path);
  LabeledPatch p;
  p.pixels = normalize_image(raw).permute({2, 0, 1}).contiguous();
  p.domain = domain;
  p.tissue_class = c;
  p.source_id = source_id;
  return p;
}

uint64_t draw_index(std::mt19937_64& rng, uint64_t n) {
  if (n == 0) throw std::invalid_argument("draw_index from empty range");
  return rng() % n;
}

std::vector<TissueClass> sample_class_sequence(const DatasetManifest& m, ClassBalance balance,
                                               int n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("sample_class_sequence requires n >= 1");
  std::vector<TissueClass> out;
  out.reserve(static_cast<size_t>(n));
  if (balance == ClassBalance::UniformClass) {
    const auto classes = m.classes_present();
    if (classes.empty())
      throw std::runtime_error("no tissue class is present in both domains");
    for (int i = 0; i < n; ++i) out.push_back(classes[draw_index(rng, classes.size())]);
    return out;
  }
  std::vector<int> x_entries;
  for (size_t i = 0; i < m.entries().size(); ++i)
    if (m.entries()[i].domain == StainDomain::X) x_entries.push_back(static_cast<int>(i));
  for (int i = 0; i < n; ++i) {
    const auto& e = m.entries()[static_cast<size_t>(x_entries[draw_index(rng, x_entries.size())])];
    out.push_back(e.tissue_class);
  }
  return out;
}

std::vector<LabeledPatch> sample_for_classes(const DatasetManifest& m, StainDomain d,
                                             const std::vector<TissueClass>& classes,
                                             std::mt19937_64& rng) {
  std::vector<LabeledPatch> out;
  out.reserve(classes.size());
  for (const auto& c : classes) {
    const auto& cell = m.cell(d, c);
    if (cell.empty())
      throw std::runtime_error("requested class cell is empty: domain " + domain_token(d) +
                               ", class " + class_token(c));
    out.push_back(m.load_patch(cell[draw_index(rng, cell.size())]));
  }
  return out;
}

std::vector<LabeledPatch> sample_conditional_batch(const DatasetManifest& m, StainDomain d,
                                                   ClassBalance balance, int n,
                                                   std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("sample_conditional_batch requires n >= 1");
  if (balance == ClassBalance::UniformClass) {
    const auto classes = m.classes_present(d);
    if (classes.empty()) throw std::runtime_error("domain has no patches");
    std::vector<TissueClass> seq;
    seq.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) seq.push_back(classes[draw_index(rng, classes.size())]);
    return sample_for_classes(m, d, seq, rng);
  }
  std::vector<int> pool;
  for (size_t i = 0; i < m.entries().size(); ++i)
    if (m.entries()[i].domain == d) pool.push_back(static_cast<int>(i));
  if (pool.empty()) throw std::runtime_error("domain has no patches");
  std::vector<LabeledPatch> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(m.load_patch(pool[draw_index(rng, pool.size())]));
  return out;
}

std::pair<std::vector<LabeledPatch>, std::vector<LabeledPatch>> sample_paired_batches(
    const DatasetManifest& m, ClassBalance balance, int n, std::mt19937_64& rng) {
  auto classes = sample_class_sequence(m, balance, n, rng);
  auto xs = sample_for_classes(m, StainDomain::X, classes, rng);
  auto ys = sample_for_classes(m, StainDomain::Y, classes, rng);
  return {std::move(xs), std::move(ys)};
}

torch::Tensor stack_batch(const std::vector<LabeledPatch>& patches) {
  if (patches.empty()) throw std::invalid_argument("stack_batch on empty batch");
  std::vector<torch::Tensor> pix;
  pix.reserve(patches.size());
  for (const auto& p : patches) pix.push_back(p.pixels);
  return torch::stack(pix);
}

std::vector<TissueClass> batch_classes(const std::vector<LabeledPatch>& patches) {
  std::vector<TissueClass> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(p.tissue_class);
  return out;
}

std::vector<std::string> batch_ids(const std::vector<LabeledPatch>& patches) {
  std::vector<std::string> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(p.source_id);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic fixture

namespace {

// Base hue per class in domain X. Classes 0 and 1 sit deliberately close so
// that class identity is not trivially recoverable from color alone, while
// staying comfortably separable for the classifiers.
constexpr std::array<double, kNumTissueClasses> kClassHueDeg = {0.0,   30.0,  130.0, 210.0,
                                                                275.0, 60.0,  330.0, 100.0};

const std::array<ColorAffine, kNumTissueClasses>& class_transforms() {
  static const std::array<ColorAffine, kNumTissueClasses> t = {{
      {{0, 1, 2}, {0.55, 0.45, 0.30}, {0.40, 0.20, 0.05}},  // DAB-like warm brown
      {{2, 1, 0}, {0.55, 0.35, 0.35}, {0.42, 0.08, 0.10}},  // AP-like red from the blue channel
      {{1, 2, 0}, {0.40, 0.35, 0.55}, {0.10, 0.12, 0.40}},
      {{0, 2, 1}, {0.30, 0.50, 0.45}, {0.10, 0.35, 0.30}},
      {{1, 0, 2}, {0.50, 0.30, 0.50}, {0.30, 0.05, 0.30}},
      {{2, 0, 1}, {0.45, 0.45, 0.30}, {0.25, 0.30, 0.08}},
      {{0, 1, 2}, {0.35, 0.55, 0.35}, {0.08, 0.35, 0.35}},
      {{0, 1, 2}, {0.25, 0.25, 0.25}, {0.70, 0.68, 0.66}},  // background: washed out
  }};
  return t;
}

double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Low-frequency value noise: a coarse random grid upsampled bilinearly.
torch::Tensor smooth_field(std::mt19937_64& rng, int size, int grid) {
  auto g = torch::empty({1, 1, grid, grid}, torch::kFloat32);
  auto acc = g.accessor<float, 4>();
  for (int r = 0; r < grid; ++r)
    for (int c = 0; c < grid; ++c) acc[0][0][r][c] = static_cast<float>(unit_draw(rng));
  auto up = F::interpolate(g, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{size, size})
                                  .mode(torch::kBilinear)
                                  .align_corners(true));
  return up.view({size, size});
}

void hsv_to_rgb(double h, double s, double v, double* rgb) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c; g = x;
  } else if (hp < 2) {
    r = x; g = c;
  } else if (hp < 3) {
    g = c; b = x;
  } else if (hp < 4) {
    g = x; b = c;
  } else if (hp < 5) {
    r = x; b = c;
  } else {
    r = c; b = x;
  }
  const double m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

// Textured patch in [0,1], HxWx3 float64, colored around the class hue.
torch::Tensor make_texture(std::mt19937_64& rng, int size, double base_hue) {
  auto hue_f = smooth_field(rng, size, 4);
  auto sat_f = smooth_field(rng, size, 4);
  auto val_f = smooth_field(rng, size, 6);
  auto out = torch::empty({size, size, 3}, torch::kFloat64);
  auto h_acc = hue_f.accessor<float, 2>();
  auto s_acc = sat_f.accessor<float, 2>();
  auto v_acc = val_f.accessor<float, 2>();
  auto o_acc = out.accessor<double, 3>();
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double noise = unit_draw(rng);
      const double h = base_hue + (h_acc[r][c] - 0.5) * 10.0;
      const double s = std::clamp(0.55 + (s_acc[r][c] - 0.5) * 0.25, 0.05, 0.95);
      const double v = std::clamp(0.45 + (v_acc[r][c] - 0.5) * 0.40 + (noise - 0.5) * 0.06, 0.05, 0.95);
      double rgb[3];
      hsv_to_rgb(h, s, v, rgb);
      o_acc[r][c][0] = rgb[0];
      o_acc[r][c][1] = rgb[1];
      o_acc[r][c][2] = rgb[2];
    }
  }
  return out;
}

torch::Tensor to_uint8(const torch::Tensor& img01) {
  return (img01 * 255.0).round().clamp(0, 255).to(torch::kUInt8);
}

}  // namespace

std::array<double, 3> ColorAffine::apply(const std::array<double, 3>& rgb) const {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[static_cast<size_t>(c)] = scale[static_cast<size_t>(c)] *
                                      rgb[static_cast<size_t>(permutation[static_cast<size_t>(c)])] +
                                  offset[static_cast<size_t>(c)];
  return out;
}

std::array<double, 3> ColorAffine::invert(const std::array<double, 3>& rgb) const {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c)
    out[static_cast<size_t>(permutation[static_cast<size_t>(c)])] =
        (rgb[static_cast<size_t>(c)] - offset[static_cast<size_t>(c)]) / scale[static_cast<size_t>(c)];
  return out;
}

ColorAffine synthetic_class_transform(int class_idx) {
  if (class_idx < 0 || class_idx >= kNumTissueClasses)
    throw std::invalid_argument("synthetic_class_transform class index out of range");
  return class_transforms()[static_cast<size_t>(class_idx)];
}

double synthetic_class_hue(int class_idx) {
  if (class_idx < 0 || class_idx >= kNumTissueClasses)
    throw std::invalid_argument("synthetic_class_hue class index out of range");
  return kClassHueDeg[static_cast<size_t>(class_idx)];
}

std::string SyntheticSpec::domain_transform_description() const {
  std::ostringstream os;
  os << "Y = per-class RGB channel permutation * scale + offset of a fresh same-class texture;";
  for (int i = 0; i < num_classes; ++i) {
    const auto t = synthetic_class_transform(i);
    os << " class " << class_token(class_from_index(i)) << ": perm(" << t.permutation[0] << ","
       << t.permutation[1] << "," << t.permutation[2] << ")";
  }
  return os.str();
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
  if (spec.num_classes < 1 || spec.num_classes > kNumTissueClasses)
    throw std::invalid_argument("synthetic num_classes must be in [1, 8]");
  if (spec.patch_size < 8) throw std::invalid_argument("synthetic patch_size must be >= 8");
  if (spec.per_class_count < 1) throw std::invalid_argument("synthetic per_class_count must be >= 1");
  fs::create_directories(out_dir);

  uint64_t counter = 0;
  for (int ci = 0; ci < spec.num_classes; ++ci) {
    const TissueClass tc = class_from_index(ci);
    const double hue = synthetic_class_hue(ci);
    const ColorAffine transform = synthetic_class_transform(ci);
    for (const StainDomain d : {StainDomain::X, StainDomain::Y}) {
      for (int j = 0; j < spec.per_class_count; ++j) {
        std::mt19937_64 rng(mix_seed(spec.seed, counter++));
        auto img = make_texture(rng, spec.patch_size, hue);
        if (d == StainDomain::Y) {
          auto acc = img.accessor<double, 3>();
          for (int r = 0; r < spec.patch_size; ++r) {
            for (int c = 0; c < spec.patch_size; ++c) {
              const auto mapped = transform.apply({acc[r][c][0], acc[r][c][1], acc[r][c][2]});
              acc[r][c][0] = std::clamp(mapped[0], 0.0, 1.0);
              acc[r][c][1] = std::clamp(mapped[1], 0.0, 1.0);
              acc[r][c][2] = std::clamp(mapped[2], 0.0, 1.0);
            }
          }
        }
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%s_%04d.png", domain_token(d).c_str(),
                      class_token(tc).c_str(), j);
        write_image_uint8_hwc((fs::path(out_dir) / name).string(), to_uint8(img));
      }
    }
  }

  std::ofstream manifest(fs::path(out_dir) / "manifest.tsv");
  if (!manifest) throw std::runtime_error("cannot write synthetic manifest in " + out_dir);
  manifest << kMagnificationPrefix << "synthetic" << '\n';
  for (int ci = 0; ci < spec.num_classes; ++ci) {
    const TissueClass tc = class_from_index(ci);
    for (const StainDomain d : {StainDomain::X, StainDomain::Y}) {
      for (int j = 0; j < spec.per_class_count; ++j) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%s_%04d.png", domain_token(d).c_str(),
                      class_token(tc).c_str(), j);
        char sid[80];
        std::snprintf(sid, sizeof(sid), "synth-%llu-%s_%s_%04d",
                      static_cast<unsigned long long>(spec.seed), domain_token(d).c_str(),
                      class_token(tc).c_str(), j);
        manifest << name << '\t' << domain_token(d) << '\t' << class_token(tc) << '\t' << sid << '\n';
      }
    }
  }
  manifest.close();
  return DatasetManifest::load((fs::path(out_dir) / "manifest.tsv").string());
}

double rgb_to_hue_deg(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double d = mx - mn;
  if (d <= 1e-12) return 0.0;
  double h;
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0);
  else if (mx == g)
    h = (b - r) / d + 2.0;
  else
    h = (r - g) / d + 4.0;
  h *= 60.0;
  if (h < 0) h += 360.0;
  return h;
}

}  // namespace restain::data
