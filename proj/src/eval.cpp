#include "restain/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <sstream>
#include <stdexcept>

#include "restain/inference.hpp"
#include "restain/losses.hpp"

namespace restain::eval {

EvalReport evaluate(const net::ModelBundle& bundle, const data::DatasetManifest& manifest,
                    Direction direction, int n_per_class, uint64_t seed) {
  TranslateFn translate = [&bundle](const LabeledPatch& p, Direction d) {
    return infer::translate_patch(bundle, p, d, infer::ClassSource::Given);
  };
  ClassifyFn classify = [&bundle](StainDomain d, const torch::Tensor& pixels) {
    return infer::predict_class(bundle, d, pixels);
  };
  return evaluate_with(translate, classify, manifest, direction, n_per_class, seed);
}

EvalReport evaluate_with(const TranslateFn& translate, const ClassifyFn& classify,
                         const data::DatasetManifest& manifest, Direction direction,
                         int n_per_class, uint64_t seed) {
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  const StainDomain src = source_domain(direction);
  const StainDomain tgt = target_domain(direction);
  const Direction back_dir = direction == Direction::XtoY ? Direction::YtoX : Direction::XtoY;

  const auto classes = manifest.classes_present(src);
  if (classes.empty()) throw std::runtime_error("evaluate: source domain has no patches");
  std::string deficits;
  for (const auto& c : classes) {
    const int have = manifest.count(src, c);
    if (have < n_per_class) {
      if (!deficits.empty()) deficits += ", ";
      deficits += class_token(c) + " has " + std::to_string(have) + " (need " +
                  std::to_string(n_per_class) + ")";
    }
  }
  if (!deficits.empty())
    throw std::runtime_error("evaluate: not enough source patches per class: " + deficits);

  torch::NoGradGuard no_grad;
  const auto ssim_params = losses::SsimParams::make();

  EvalReport report;
  report.direction = direction;
  double sum_ssim = 0, sum_l1 = 0;
  int sum_agree = 0, total = 0;

  for (const auto& c : classes) {
    // Per-class stream: adding patches to one class never reshuffles another.
    std::mt19937_64 rng(mix_seed(seed, 0xe7a1u + static_cast<uint64_t>(class_index(c))));
    auto indices = manifest.cell(src, c);
    for (size_t i = 0; i < static_cast<size_t>(n_per_class); ++i) {
      const size_t j = i + static_cast<size_t>(data::draw_index(rng, indices.size() - i));
      std::swap(indices[i], indices[j]);
    }

    EvalClassRow row;
    row.tissue_class = c;
    row.n_patches = n_per_class;
    double class_ssim = 0, class_l1 = 0;
    int class_agree = 0;
    for (int i = 0; i < n_per_class; ++i) {
      const auto patch = manifest.load_patch(indices[static_cast<size_t>(i)]);
      const auto translated = translate(patch, direction);
      const double s = losses::ssim_mean(translated.pixels.unsqueeze(0), patch.pixels.unsqueeze(0),
                                         ssim_params, SsimMode::StandardProduct)
                           .item<double>();
      const auto round_trip = translate(translated, back_dir);
      const double l1 = (round_trip.pixels - patch.pixels).abs().mean().item<double>();
      const auto predicted = classify(tgt, translated.pixels);
      class_ssim += s;
      class_l1 += l1;
      class_agree += predicted == c ? 1 : 0;
    }
    row.mean_ssim = class_ssim / n_per_class;
    row.mean_cycle_l1 = class_l1 / n_per_class;
    row.agreement = static_cast<double>(class_agree) / n_per_class;
    report.rows.push_back(row);

    sum_ssim += class_ssim;
    sum_l1 += class_l1;
    sum_agree += class_agree;
    total += n_per_class;
  }

  report.overall.n_patches = total;
  report.overall.mean_ssim = sum_ssim / total;
  report.overall.mean_cycle_l1 = sum_l1 / total;
  report.overall.agreement = static_cast<double>(sum_agree) / total;
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return std::string(buf);
}

const EvalClassRow* find_row(const EvalReport& r, TissueClass c) {
  for (const auto& row : r.rows)
    if (row.tissue_class == c) return &row;
  return nullptr;
}

std::vector<std::vector<std::string>> report_cells(const EvalReport& report) {
  std::vector<TissueClass> cols;
  for (const auto& c : kReportClassOrder)
    if (find_row(report, c)) cols.push_back(c);

  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header = {"metric"};
  for (const auto& c : cols) header.push_back(class_token(c));
  header.push_back("Overall");
  cells.push_back(header);

  auto metric_row = [&](const std::string& name, auto getter, bool integer) {
    std::vector<std::string> row = {name};
    for (const auto& c : cols) {
      const auto* r = find_row(report, c);
      row.push_back(integer ? std::to_string(static_cast<long long>(getter(*r))) : fmt(getter(*r)));
    }
    row.push_back(integer ? std::to_string(static_cast<long long>(getter(report.overall)))
                          : fmt(getter(report.overall)));
    cells.push_back(row);
  };
  metric_row("n_patches", [](const EvalClassRow& r) { return static_cast<double>(r.n_patches); }, true);
  metric_row("mean_ssim", [](const EvalClassRow& r) { return r.mean_ssim; }, false);
  metric_row("mean_cycle_l1", [](const EvalClassRow& r) { return r.mean_cycle_l1; }, false);
  metric_row("class_agreement", [](const EvalClassRow& r) { return r.agreement; }, false);
  return cells;
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  const auto cells = report_cells(report);
  std::ostringstream os;
  if (format == ReportFormat::Tsv) {
    for (const auto& row : cells) {
      for (size_t i = 0; i < row.size(); ++i) os << (i ? "\t" : "") << row[i];
      os << '\n';
    }
    return os.str();
  }
  for (size_t r = 0; r < cells.size(); ++r) {
    os << '|';
    for (const auto& cell : cells[r]) os << ' ' << cell << " |";
    os << '\n';
    if (r == 0) {
      os << '|';
      for (size_t i = 0; i < cells[0].size(); ++i) os << " --- |";
      os << '\n';
    }
  }
  return os.str();
}

EvalReport parse_report(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    if (line.front() == '|') {  // markdown row -> cells
      std::string body = line.substr(1);
      if (!body.empty() && body.back() == '|') body.pop_back();
      std::istringstream cells(body);
      std::string cell;
      while (std::getline(cells, cell, '|')) {
        const auto b = cell.find_first_not_of(' ');
        const auto e = cell.find_last_not_of(' ');
        fields.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
      }
      bool separator = !fields.empty();
      for (const auto& f : fields)
        if (f.find_first_not_of('-') != std::string::npos) separator = false;
      if (separator) continue;
    } else {
      std::istringstream cells(line);
      std::string cell;
      while (std::getline(cells, cell, '\t')) fields.push_back(cell);
    }
    rows.push_back(std::move(fields));
  }
  if (rows.size() != 5 || rows[0].size() < 2 || rows[0].front() != "metric")
    throw std::runtime_error("parse_report: not a recognizable report table");

  const auto& header = rows[0];
  const size_t ncols = header.size();
  for (const auto& row : rows)
    if (row.size() != ncols) throw std::runtime_error("parse_report: ragged table");
  if (header.back() != "Overall") throw std::runtime_error("parse_report: missing Overall column");

  auto row_named = [&](const std::string& name) -> const std::vector<std::string>& {
    for (size_t r = 1; r < rows.size(); ++r)
      if (rows[r].front() == name) return rows[r];
    throw std::runtime_error("parse_report: missing metric row '" + name + "'");
  };
  const auto& n_row = row_named("n_patches");
  const auto& ssim_row = row_named("mean_ssim");
  const auto& l1_row = row_named("mean_cycle_l1");
  const auto& agree_row = row_named("class_agreement");

  EvalReport report;
  for (size_t col = 1; col < ncols; ++col) {
    EvalClassRow row;
    row.n_patches = std::stoi(n_row[col]);
    row.mean_ssim = std::stod(ssim_row[col]);
    row.mean_cycle_l1 = std::stod(l1_row[col]);
    row.agreement = std::stod(agree_row[col]);
    if (header[col] == "Overall") {
      report.overall = row;
    } else {
      row.tissue_class = class_from_token(header[col]);
      report.rows.push_back(row);
    }
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
    return class_index(a.tissue_class) < class_index(b.tissue_class);
  });
  return report;
}

}  // namespace restain::eval
