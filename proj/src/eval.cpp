// Copyright 2026 The yolo3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "yolo3d/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace yolo3d
{
namespace
{

std::string fmt(const char * pattern, double v)
{
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), pattern, v);
  return buffer;
}

std::string read_text(const std::filesystem::path & path)
{
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string escape_xml(std::string_view text)
{
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

}  // namespace

std::vector<DetectionSet> parse_detections_text(std::string_view text)
{
  std::vector<DetectionSet> sets;
  std::map<std::string, std::size_t> index;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string frame;
    if (!(fields >> frame) || frame.starts_with('#')) {
      continue;
    }
    std::string cls_name;
    Obb3D box;
    if (!(fields >> cls_name >> box.confidence >> box.cx >> box.cy >> box.cz >> box.w >> box.l >>
          box.h >> box.yaw)) {
      throw FormatError("detection line " + std::to_string(line_no) + " has too few fields");
    }
    const auto cls = parse_class_name(cls_name);
    if (!cls) {
      throw FormatError("detection line " + std::to_string(line_no) + ": unknown class " + cls_name);
    }
    if (!(box.w > 0.0 && box.l > 0.0 && box.h > 0.0) || !(box.confidence >= 0.0 && box.confidence <= 1.0)) {
      throw FormatError("detection line " + std::to_string(line_no) + " is out of range");
    }
    box.class_id = *cls;
    auto [it, inserted] = index.emplace(frame, sets.size());
    if (inserted) {
      sets.push_back({frame, {}});
    }
    sets[it->second].boxes.push_back(box);
  }
  return sets;
}

std::vector<DetectionSet> read_detections(const std::filesystem::path & path)
{
  return parse_detections_text(read_text(path));
}

std::string format_detections(std::span<const DetectionSet> sets)
{
  std::string out;
  char buffer[512];
  for (const DetectionSet & set : sets) {
    for (const Obb3D & b : set.boxes) {
      std::snprintf(
        buffer, sizeof(buffer), "%s %s %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", set.frame.c_str(),
        std::string(class_name(b.class_id)).c_str(), b.confidence, b.cx, b.cy, b.cz, b.w, b.l, b.h,
        b.yaw);
      out += buffer;
    }
  }
  return out;
}

void write_detections(const std::filesystem::path & path, std::span<const DetectionSet> sets)
{
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << format_detections(sets);
}

double box_iou(const Obb3D & a, const Obb3D & b, IouKind kind)
{
  return kind == IouKind::bev ? bev_iou(a, b) : iou_3d(a, b);
}

std::size_t MatchResult::tp_count() const
{
  return static_cast<std::size_t>(std::count(true_positive.begin(), true_positive.end(), true));
}

std::size_t MatchResult::fp_count() const { return true_positive.size() - tp_count(); }

MatchResult match_detections(std::span<const Obb3D> detections, std::span<const Obb3D> labels,
                             double iou_threshold, ClassId cls, IouKind kind)
{
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].class_id == cls) {
      order.push_back(i);
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return detections[i].confidence > detections[j].confidence;
  });
  std::vector<std::size_t> gts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].class_id == cls) {
      gts.push_back(i);
    }
  }

  MatchResult result;
  result.ground_truths = gts.size();
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i : order) {
    double best = -1.0;
    std::size_t best_gt = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) {
        continue;
      }
      const double iou = box_iou(detections[i], labels[gts[g]], kind);
      if (iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    const bool hit = best_gt < gts.size() && best >= iou_threshold;
    if (hit) {
      taken[best_gt] = true;
    }
    result.confidences.push_back(detections[i].confidence);
    result.true_positive.push_back(hit);
  }
  result.false_negatives =
    static_cast<std::size_t>(std::count(taken.begin(), taken.end(), false));
  return result;
}

PRPoint precision_recall(std::size_t tp, std::size_t fp, std::size_t fn)
{
  PRPoint p;
  p.tp = tp;
  p.fp = fp;
  p.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  p.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p;
}

PRPoint precision_recall(std::span<const MatchResult> matches)
{
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (const MatchResult & m : matches) {
    tp += m.tp_count();
    fp += m.fp_count();
    fn += m.false_negatives;
  }
  return precision_recall(tp, fp, fn);
}

std::vector<PRPoint> pr_curve(std::span<const MatchResult> matches)
{
  struct Entry
  {
    double confidence;
    bool tp;
  };
  std::vector<Entry> pooled;
  std::size_t positives = 0;
  for (const MatchResult & m : matches) {
    positives += m.ground_truths;
    for (std::size_t i = 0; i < m.confidences.size(); ++i) {
      pooled.push_back({m.confidences[i], m.true_positive[i]});
    }
  }
  std::stable_sort(pooled.begin(), pooled.end(), [](const Entry & a, const Entry & b) {
    return a.confidence > b.confidence;
  });
  std::vector<PRPoint> curve;
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const Entry & e : pooled) {
    (e.tp ? tp : fp) += 1;
    PRPoint p = precision_recall(tp, fp, positives - tp);
    p.threshold = e.confidence;
    curve.push_back(p);
  }
  return curve;
}

double average_precision(std::span<const PRPoint> curve, int points)
{
  if (points != 11 && points != 40) {
    throw std::invalid_argument("AP interpolation supports 11 or 40 points");
  }
  if (curve.empty()) {
    return 0.0;
  }
  const int first = points == 11 ? 0 : 1;
  const int last = points == 11 ? 10 : 40;
  double sum = 0.0;
  for (int i = first; i <= last; ++i) {
    const double level = static_cast<double>(i) / (last);
    double best = 0.0;
    for (const PRPoint & p : curve) {
      if (p.recall >= level) {
        best = std::max(best, p.precision);
      }
    }
    sum += best;
  }
  return sum / static_cast<double>(last - first + 1);
}

double ApCurves::mean_ap(std::size_t threshold_index) const
{
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (ground_truths[c] > 0) {
      sum += ap[c][threshold_index];
      ++classes;
    }
  }
  return classes == 0 ? 0.0 : sum / classes;
}

ApCurves map_over_thresholds(std::span<const DetectionSet> detections,
                             std::span<const DetectionSet> labels,
                             std::span<const double> thresholds, IouKind kind, int ap_points)
{
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) {
      throw std::invalid_argument("IoU thresholds must lie in (0, 1)");
    }
  }
  // Every frame that appears on either side takes part.
  std::vector<std::string> frames;
  std::map<std::string, const DetectionSet *> det_by_frame;
  std::map<std::string, const DetectionSet *> gt_by_frame;
  for (const DetectionSet & s : labels) {
    if (gt_by_frame.emplace(s.frame, &s).second) {
      frames.push_back(s.frame);
    }
  }
  for (const DetectionSet & s : detections) {
    if (det_by_frame.emplace(s.frame, &s).second && !gt_by_frame.contains(s.frame)) {
      frames.push_back(s.frame);
    }
  }

  ApCurves curves;
  curves.thresholds.assign(thresholds.begin(), thresholds.end());
  for (ClassId cls : kAllClasses) {
    const int c = class_index(cls);
    for (const auto & [frame, set] : gt_by_frame) {
      curves.ground_truths[c] += static_cast<std::size_t>(
        std::count_if(set->boxes.begin(), set->boxes.end(), [cls](const Obb3D & b) {
          return b.class_id == cls;
        }));
    }
    for (double threshold : thresholds) {
      std::vector<MatchResult> matches;
      for (const std::string & frame : frames) {
        const auto d = det_by_frame.find(frame);
        const auto g = gt_by_frame.find(frame);
        const std::span<const Obb3D> dets =
          d == det_by_frame.end() ? std::span<const Obb3D>{} : std::span<const Obb3D>(d->second->boxes);
        const std::span<const Obb3D> gts =
          g == gt_by_frame.end() ? std::span<const Obb3D>{} : std::span<const Obb3D>(g->second->boxes);
        matches.push_back(match_detections(dets, gts, threshold, cls, kind));
      }
      const auto curve = pr_curve(matches);
      curves.ap[c].push_back(average_precision(curve, ap_points));
    }
  }
  return curves;
}

std::string format_ap_csv(const ApCurves & curves)
{
  std::string out = "class,threshold,ap\n";
  for (ClassId cls : kAllClasses) {
    const int c = class_index(cls);
    for (std::size_t t = 0; t < curves.thresholds.size(); ++t) {
      out += std::string(class_name(cls)) + "," + fmt("%.6g", curves.thresholds[t]) + "," +
             fmt("%.9g", curves.ap[c][t]) + "\n";
    }
  }
  return out;
}

std::string render_line_chart(std::string_view title, std::string_view x_label,
                              std::string_view y_label, std::span<const ChartSeries> series)
{
  constexpr double kWidth = 640.0;
  constexpr double kHeight = 420.0;
  constexpr double kLeft = 70.0;
  constexpr double kRight = 150.0;
  constexpr double kTop = 40.0;
  constexpr double kBottom = 55.0;
  static constexpr std::array<const char *, 6> kColors{
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min;
  double y_min = 0.0;
  double y_max = -x_min;
  for (const ChartSeries & s : series) {
    for (double v : s.x) {
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    for (double v : s.y) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (!std::isfinite(x_min)) {
    x_min = 0.0;
    x_max = 1.0;
  }
  if (!std::isfinite(y_max) || y_max <= y_min) {
    y_max = y_min + 1.0;
  }
  if (x_max <= x_min) {
    x_max = x_min + 1.0;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return kTop + plot_h - (y - y_min) / (y_max - y_min) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\""
      << plot_h << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_min + (x_max - x_min) * i / 5.0;
    const double yv = y_min + (y_max - y_min) * i / 5.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\">" << fmt("%.3g", xv) << "</text>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << fmt("%.3g", yv) << "</text>\n";
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << py(yv)
        << "\" y2=\"" << py(yv) << "\" stroke=\"#dddddd\"/>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\">" << escape_xml(x_label) << "</text>\n";
  svg << "<text transform=\"translate(18," << kTop + plot_h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << escape_xml(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char * color = kColors[s % kColors.size()];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    const std::size_t n = std::min(series[s].x.size(), series[s].y.size());
    for (std::size_t i = 0; i < n; ++i) {
      svg << (i ? " " : "") << fmt("%.2f", px(series[s].x[i])) << ","
          << fmt("%.2f", py(series[s].y[i]));
    }
    svg << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      svg << "<circle cx=\"" << fmt("%.2f", px(series[s].x[i])) << "\" cy=\""
          << fmt("%.2f", py(series[s].y[i])) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 14.0 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kLeft + plot_w + 12 << "\" x2=\"" << kLeft + plot_w + 32 << "\" y1=\""
        << ly << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kLeft + plot_w + 38 << "\" y=\"" << ly + 4 << "\">"
        << escape_xml(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string render_ap_chart(const ApCurves & curves)
{
  std::vector<ChartSeries> series;
  for (ClassId cls : kAllClasses) {
    series.push_back({std::string(class_name(cls)), curves.thresholds, curves.ap[class_index(cls)]});
  }
  return render_line_chart("Performance against IoU threshold", "IoU threshold", "AP", series);
}

QuadraticFit fit_inverse_square(std::span<const double> resolutions, std::span<const double> times)
{
  if (resolutions.size() != times.size() || resolutions.size() < 2) {
    throw std::invalid_argument("fit needs at least two (resolution, time) pairs");
  }
  const auto n = static_cast<double>(resolutions.size());
  std::vector<double> x;
  for (double r : resolutions) {
    x.push_back(1.0 / (r * r));
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(times.begin(), times.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (times[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (times[i] - my) * (times[i] - my);
  }
  QuadraticFit fit;
  fit.a = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.c = my - fit.a * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = times[i] - (fit.a * x[i] + fit.c);
    ss_res += e * e;
  }
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return fit;
}

BenchResult bench_resolution_sweep(const PointCloud & cloud, std::span<const double> resolutions,
                                   const GridConfig & base, const NetworkSpec * network, int runs,
                                   int warmup, std::uint64_t seed)
{
  if (runs < 1 || warmup < 0) {
    throw std::invalid_argument("benchmark needs at least one timed run");
  }
  BenchResult result;
  std::vector<double> res;
  std::vector<double> medians;
  for (double r : resolutions) {
    if (!(r > 0.0)) {
      throw std::invalid_argument("resolutions must be positive");
    }
    GridConfig config = base;
    config.resolution = r;
    config.validate();

    std::optional<Network> net;
    if (network != nullptr) {
      NetworkSpec spec = *network;
      spec.input_height = config.rows();
      spec.input_width = config.cols();
      net.emplace(build_network(spec, seed));
    }
    auto once = [&]() {
      const GridMap grid = rasterize(cloud, config);
      if (net) {
        const Tensor3 out = net->forward(grid_to_tensor(grid));
        if (out.data.empty()) {
          throw std::logic_error("empty network output");
        }
      }
    };
    for (int i = 0; i < warmup; ++i) {
      once();
    }
    std::vector<double> samples;
    for (int i = 0; i < runs; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      once();
      const auto t1 = std::chrono::steady_clock::now();
      samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t mid = samples.size() / 2;
    const double median =
      samples.size() % 2 == 1 ? samples[mid] : 0.5 * (samples[mid - 1] + samples[mid]);
    result.records.push_back({r, grid_side(config.x_range, r), median});
    res.push_back(r);
    medians.push_back(median);
  }
  if (res.size() >= 2) {
    const QuadraticFit fit = fit_inverse_square(res, medians);
    result.fit_a = fit.a;
    result.fit_c = fit.c;
    result.r2 = fit.r2;
  }
  return result;
}

std::string format_bench_csv(const BenchResult & result)
{
  std::string out = "resolution,grid_side,median_ms,fit_a,fit_c,r2\n";
  for (const BenchRecord & r : result.records) {
    out += fmt("%.6g", r.resolution) + "," + std::to_string(r.grid_side) + "," +
           fmt("%.6f", r.median_ms) + "," + fmt("%.9g", result.fit_a) + "," +
           fmt("%.9g", result.fit_c) + "," + fmt("%.6f", result.r2) + "\n";
  }
  return out;
}

std::string render_bench_chart(const BenchResult & result)
{
  ChartSeries measured{"median", {}, {}};
  ChartSeries fitted{"a/r^2 + c", {}, {}};
  for (const BenchRecord & r : result.records) {
    measured.x.push_back(r.resolution);
    measured.y.push_back(r.median_ms);
    fitted.x.push_back(r.resolution);
    fitted.y.push_back(result.fit_a / (r.resolution * r.resolution) + result.fit_c);
  }
  const std::array<ChartSeries, 2> series{measured, fitted};
  return render_line_chart("Inference time at different resolutions", "resolution (m/px)",
                           "time (ms)", series);
}

}  // namespace yolo3d
