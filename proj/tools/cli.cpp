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

#include "cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include "yolo3d/bev_rasterizer.hpp"
#include "yolo3d/box_geom.hpp"
#include "yolo3d/eval.hpp"
#include "yolo3d/loss.hpp"
#include "yolo3d/micronet.hpp"
#include "yolo3d/pointcloud_io.hpp"
#include "yolo3d/rng.hpp"
#include "yolo3d/trainer.hpp"

namespace yolo3d::cli
{
namespace
{

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

constexpr const char * kVersion = "0.1.0";

/// Everything a subcommand needs; unset overrides keep the 608 x 608 defaults.
struct RunConfig
{
  std::string subcommand;
  GridConfig grid{};
  std::string anchors_path;
  std::string iou = "bev";
  std::string conf_target = "iou";
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "yolo3d_out";
  LossWeights weights{};

  // rasterize
  std::string scan_path;
  std::string calib_path;
  // anchors
  std::vector<std::string> label_paths;
  // encode-decode
  int roundtrip_count = 1000;
  // train-toy
  int steps = 2000;
  int scenes = 4;
  int objects = 3;
  double lr_scale = 2.0;
  double max_grad_norm = 10.0;
  double conf_threshold = 0.5;
  // eval
  std::string dets_path;
  std::string gts_path;
  std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int ap_points = 11;
  // bench
  std::vector<double> resolutions{0.25, 0.2, 0.15, 0.1};
  std::string bench_net = "toy";
  int runs = 20;
  // shapes
  std::string arch = "table1";
  int toy_input = 64;
};

void write_text(const fs::path & path, const std::string & text)
{
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  out << text;
}

json grid_json(const GridConfig & g)
{
  return json{
    {"x_range", g.x_range}, {"y_half_range", g.y_half_range}, {"resolution", g.resolution},
    {"z_min", g.z_min},     {"z_max", g.z_max},               {"rows", g.rows()},
    {"cols", g.cols()}};
}

void write_manifest(const fs::path & path, const RunConfig & cfg,
                    const std::vector<std::string> & args, const std::vector<std::string> & outputs)
{
  json manifest;
  manifest["tool"] = "yolo3d";
  manifest["version"] = kVersion;
  manifest["compiler"] = __VERSION__;
  manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                      "." + std::to_string(EIGEN_MINOR_VERSION);
  manifest["subcommand"] = cfg.subcommand;
  manifest["argv"] = args;
  manifest["seed"] = cfg.seed;
  manifest["threads"] = cfg.threads;
  manifest["grid"] = grid_json(cfg.grid);
  manifest["loss_weights"] = json{
    {"lambda_coor", cfg.weights.lambda_coor},
    {"lambda_yaw", cfg.weights.lambda_yaw},
    {"lambda_conf_obj", cfg.weights.lambda_conf_obj},
    {"lambda_conf_noobj", cfg.weights.lambda_conf_noobj},
    {"lambda_classes", cfg.weights.lambda_classes}};
  manifest["iou"] = cfg.iou;
  manifest["conf_target"] = cfg.conf_target;
  manifest["outputs"] = outputs;
  write_text(path, manifest.dump(2) + "\n");
}

IouKind parse_iou(const std::string & s) { return s == "3d" ? IouKind::three_d : IouKind::bev; }

ConfTarget parse_conf_target(const std::string & s)
{
  return s == "one" ? ConfTarget::one : ConfTarget::iou;
}

std::vector<Anchor> load_anchors_or_nominal(const RunConfig & cfg)
{
  if (!cfg.anchors_path.empty()) {
    auto anchors = read_anchor_file(cfg.anchors_path);
    if (anchors.empty()) {
      throw FormatError("anchor file " + cfg.anchors_path + " is empty");
    }
    return anchors;
  }
  std::vector<Anchor> anchors;
  for (ClassId cls : kAllClasses) {
    anchors.push_back(nominal_dimensions(cls));
  }
  return anchors;
}

int cmd_rasterize(const RunConfig & cfg, const std::vector<std::string> & args, std::ostream & out)
{
  const ScanReadResult scan = read_velodyne_scan(cfg.scan_path);
  PointCloud cloud = scan.cloud;
  if (!cfg.calib_path.empty()) {
    cloud = filter_to_image_fov(cloud, parse_calibration(cfg.calib_path));
  }
  const GridMap grid = rasterize(cloud, cfg.grid);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_grid_raw(dir / "grid.bin", grid);
  write_grid_png(dir / "grid.png", grid);
  write_manifest(dir / "manifest.json", cfg, args, {"grid.bin", "grid.png"});
  const auto occupied = std::count_if(grid.counts.begin(), grid.counts.end(), [](auto n) { return n > 0; });
  out << "grid " << grid.rows << "x" << grid.cols << "x2, points " << scan.cloud.size() << " read, "
      << cloud.size() << " kept, " << scan.skipped_records << " non-finite skipped, " << occupied
      << " occupied cells\n";
  return kExitOk;
}

int cmd_anchors(const RunConfig & cfg, const std::vector<std::string> & args, std::ostream & out)
{
  const Calibration calib =
    cfg.calib_path.empty() ? axis_remap_calibration() : parse_calibration(cfg.calib_path);
  std::vector<Obb3D> labels;
  std::size_t malformed = 0;
  for (const std::string & path : cfg.label_paths) {
    const LabelParseResult parsed = parse_kitti_labels(path, calib);
    labels.insert(labels.end(), parsed.boxes.begin(), parsed.boxes.end());
    malformed += parsed.malformed_lines;
  }
  const auto anchors = compute_anchors(labels, kAllClasses);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_anchor_file(dir / "anchors.txt", anchors);
  write_manifest(dir / "manifest.json", cfg, args, {"anchors.txt"});
  out << format_anchors(anchors);
  out << labels.size() << " labels, " << malformed << " malformed lines skipped\n";
  return kExitOk;
}

int cmd_encode_decode(const RunConfig & cfg, const std::vector<std::string> & args, std::ostream & out)
{
  const auto anchors = load_anchors_or_nominal(cfg);
  const HeadConfig head{cfg.grid.rows() / 16, static_cast<int>(anchors.size()), 16};
  head.validate(cfg.grid);
  Rng rng = make_stream(cfg.seed, "encode-decode");
  double worst = 0.0;
  for (int i = 0; i < cfg.roundtrip_count; ++i) {
    const Anchor & anchor = anchors[static_cast<std::size_t>(i) % anchors.size()];
    Obb3D box;
    box.cx = uniform(rng, 0.0, cfg.grid.x_range);
    box.cy = uniform(rng, -cfg.grid.y_half_range, cfg.grid.y_half_range);
    box.cz = uniform(rng, cfg.grid.z_min + 0.01, cfg.grid.z_max - 0.01);
    box.w = anchor.w * uniform(rng, 0.5, 2.0);
    box.l = anchor.l * uniform(rng, 0.5, 2.0);
    box.h = anchor.h * uniform(rng, 0.5, 2.0);
    box.yaw = uniform(rng, -kPi, kPi);
    const EncodedBox enc = encode(box, anchor, head, cfg.grid);
    const Obb3D back = decode(enc.raw, enc.cell, anchor, head, cfg.grid);
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
    worst = std::max({worst, rel(back.cx, box.cx), rel(back.cy, box.cy), rel(back.cz, box.cz),
                      rel(back.w, box.w), rel(back.l, box.l), rel(back.h, box.h),
                      rel(back.yaw, box.yaw)});
  }
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_manifest(dir / "manifest.json", cfg, args, {});
  char line[128];
  std::snprintf(line, sizeof(line), "%d boxes, max relative error %.3e\n", cfg.roundtrip_count, worst);
  out << line;
  return worst < 1e-9 ? kExitOk : kExitData;
}

int cmd_train_toy(const RunConfig & cfg, const std::vector<std::string> & args, std::ostream & out)
{
  ToyTrainConfig tc;
  tc.seed = cfg.seed;
  tc.steps = cfg.steps;
  tc.scenes = cfg.scenes;
  tc.objects_per_scene = cfg.objects;
  tc.lr_scale = cfg.lr_scale;
  tc.max_grad_norm = cfg.max_grad_norm;
  tc.weights = cfg.weights;
  tc.conf_target = parse_conf_target(cfg.conf_target);
  tc.threads = cfg.threads;

  fs::path weights_path(cfg.out);
  if (weights_path.extension() != ".bin") {
    weights_path /= "weights.bin";
  }
  const fs::path dir = weights_path.has_parent_path() ? weights_path.parent_path() : fs::path(".");
  const std::string stem = weights_path.stem().string();
  fs::create_directories(dir);

  const ToyTrainResult result = train_toy(tc);
  save_weights(weights_path, result.network);

  std::string csv = loss_csv_header() + "\n";
  for (std::size_t step = 0; step < result.log.size(); ++step) {
    csv += loss_csv_row(step, result.log[step]) + "\n";
  }
  write_text(dir / (stem + "_loss.csv"), csv);

  std::vector<DetectionSet> dets;
  std::vector<DetectionSet> labels;
  std::vector<Obb3D> all_labels;
  std::vector<Obb3D> all_dets;
  double iou_sum = 0.0;
  std::size_t label_count = 0;
  for (std::size_t i = 0; i < result.scenes.size(); ++i) {
    const std::string frame = "scene" + std::to_string(i);
    const Tensor3 head_out = result.network.forward(grid_to_tensor(result.grids[i]));
    const HeadTensor raw = head_from_output(head_out, result.head.anchors_per_cell);
    auto found = detect(raw, result.anchors, result.head, tc.grid, cfg.conf_threshold, 0.3);
    iou_sum += mean_best_iou(result.scenes[i].labels, found) * static_cast<double>(result.scenes[i].labels.size());
    label_count += result.scenes[i].labels.size();
    dets.push_back({frame, found});
    labels.push_back({frame, result.scenes[i].labels});
  }
  write_detections(dir / (stem + "_detections.txt"), dets);
  write_detections(dir / (stem + "_labels.txt"), labels);
  write_manifest(
    dir / (stem + "_manifest.json"), cfg, args,
    {weights_path.filename().string(), stem + "_loss.csv", stem + "_detections.txt", stem + "_labels.txt"});

  const double initial = result.log.front().total;
  const double final_loss = result.log.back().total;
  char line[256];
  std::snprintf(
    line, sizeof(line), "steps %zu, loss %.6g -> %.6g (%.2f%% of initial), mean best bev_iou %.4f over %zu labels\n",
    result.log.size(), initial, final_loss, 100.0 * final_loss / initial,
    label_count ? iou_sum / static_cast<double>(label_count) : 0.0, label_count);
  out << line;
  return kExitOk;
}

int cmd_eval(const RunConfig & cfg, const std::vector<std::string> & args, std::ostream & out)
{
  const auto dets = read_detections(cfg.dets_path);
  const auto gts = read_detections(cfg.gts_path);
  const IouKind kind = parse_iou(cfg.iou);
  const ApCurves curves = map_over_thresholds(dets, gts, cfg.thresholds, kind, cfg.ap_points);

  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_text(dir / "ap.csv", format_ap_csv(curves));
  write_text(dir / "ap.svg", render_ap_chart(curves));
  write_manifest(dir / "manifest.json", cfg, args, {"ap.csv", "ap.svg"});

  for (ClassId cls : kAllClasses) {
    std::vector<MatchResult> matches;
    for (const DetectionSet & g : gts) {
      const auto it = std::find_if(dets.begin(), dets.end(), [&](const DetectionSet & d) { return d.frame == g.frame; });
      const std::span<const Obb3D> frame_dets =
        it == dets.end() ? std::span<const Obb3D>{} : std::span<const Obb3D>(it->boxes);
      matches.push_back(match_detections(frame_dets, g.boxes, 0.5, cls, kind));
    }
    const PRPoint pr = precision_recall(matches);
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s precision %.4f recall %.4f (IoU 0.5, all detections)\n",
                  std::string(class_name(cls)).c_str(), pr.precision, pr.recall);
    out << line;
  }
  for (std::size_t t = 0; t < curves.thresholds.size(); ++t) {
    char line[96];
    std::snprintf(line, sizeof(line), "mAP@%.2f %.4f\n", curves.thresholds[t], curves.mean_ap(t));
    out << line;
  }
  return kExitOk;
}

int cmd_bench(const RunConfig & cfg, const std::vector<std::string> & args, std::ostream & out)
{
  PointCloud cloud;
  if (!cfg.scan_path.empty()) {
    cloud = read_velodyne_scan(cfg.scan_path).cloud;
  } else {
    Rng rng = make_stream(cfg.seed, "bench-scene");
    cloud = generate_synthetic_scene(rng, 12, cfg.grid).cloud;
  }
  std::optional<NetworkSpec> spec;
  if (cfg.bench_net == "toy") {
    spec = toy_spec(cfg.grid.rows());
  } else if (cfg.bench_net != "none") {
    throw std::invalid_argument("unknown --net " + cfg.bench_net);
  }
  const BenchResult result = bench_resolution_sweep(
    cloud, cfg.resolutions, cfg.grid, spec ? &*spec : nullptr, cfg.runs, 2, cfg.seed);
  const fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_text(dir / "bench.csv", format_bench_csv(result));
  write_text(dir / "bench.svg", render_bench_chart(result));
  write_manifest(dir / "manifest.json", cfg, args, {"bench.csv", "bench.svg"});
  out << format_bench_csv(result);
  return kExitOk;
}

int cmd_shapes(const RunConfig & cfg, std::ostream & out)
{
  if (cfg.arch == "table1") {
    out << format_shapes(table1_spec());
  } else if (cfg.arch == "toy") {
    out << format_shapes(toy_spec(cfg.toy_input));
  } else {
    throw std::invalid_argument("unknown --arch " + cfg.arch);
  }
  return kExitOk;
}

int run_replay(const std::string & manifest_path, std::ostream & out, std::ostream & err)
{
  std::ifstream in(manifest_path);
  if (!in) {
    err << "cannot open manifest " << manifest_path << "\n";
    return kExitData;
  }
  json manifest;
  try {
    in >> manifest;
  } catch (const std::exception & e) {
    err << "invalid manifest: " << e.what() << "\n";
    return kExitData;
  }
  if (!manifest.contains("argv") || !manifest["argv"].is_array()) {
    err << "manifest has no argv\n";
    return kExitData;
  }
  const auto replay_args = manifest["argv"].get<std::vector<std::string>>();
  if (!replay_args.empty() && replay_args.front() == "replay") {
    err << "manifest refers to another replay\n";
    return kExitData;
  }
  return run(replay_args, out, err);
}

}  // namespace

int run(const std::vector<std::string> & args, std::ostream & out, std::ostream & err)
{
  RunConfig cfg;
  cfg.threads = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));

  CLI::App app{"yolo3d: BEV LiDAR detection pipeline", "yolo3d"};
  app.fallthrough();
  app.require_subcommand(1);
  app.add_option("--res", cfg.grid.resolution, "grid resolution in meters per pixel")
    ->check(CLI::PositiveNumber);
  app.add_option("--x-range", cfg.grid.x_range, "forward extent in meters")->check(CLI::PositiveNumber);
  app.add_option("--y-half-range", cfg.grid.y_half_range, "lateral half extent in meters")
    ->check(CLI::PositiveNumber);
  app.add_option("--z-min", cfg.grid.z_min, "height clip floor in meters");
  app.add_option("--z-max", cfg.grid.z_max, "height clip ceiling in meters");
  app.add_option("--anchors", cfg.anchors_path, "anchor file (class p_w p_l p_h per line)");
  app.add_option("--iou", cfg.iou, "IoU used for evaluation")->check(CLI::IsMember({"bev", "3d"}));
  app.add_option("--conf-target", cfg.conf_target, "objectness target for responsible slots")
    ->check(CLI::IsMember({"iou", "one"}));
  app.add_option("--seed", cfg.seed, "run seed");
  app.add_option("--threads", cfg.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", cfg.out, "output directory (train-toy: weights file or directory)");
  app.add_option("--lambda-coor", cfg.weights.lambda_coor)->check(CLI::NonNegativeNumber);
  app.add_option("--lambda-yaw", cfg.weights.lambda_yaw)->check(CLI::NonNegativeNumber);
  app.add_option("--lambda-conf-obj", cfg.weights.lambda_conf_obj)->check(CLI::NonNegativeNumber);
  app.add_option("--lambda-conf-noobj", cfg.weights.lambda_conf_noobj)->check(CLI::NonNegativeNumber);
  app.add_option("--lambda-classes", cfg.weights.lambda_classes)->check(CLI::NonNegativeNumber);

  auto * rasterize_cmd = app.add_subcommand("rasterize", "rasterize a velodyne scan into a BEV grid");
  rasterize_cmd->add_option("--scan", cfg.scan_path, "velodyne .bin scan")->required();
  rasterize_cmd->add_option("--calib", cfg.calib_path, "KITTI calibration; enables FOV filtering");

  auto * anchors_cmd = app.add_subcommand("anchors", "per-class mean box dimensions from KITTI labels");
  anchors_cmd->add_option("--labels", cfg.label_paths, "KITTI label files")->required();
  anchors_cmd->add_option("--calib", cfg.calib_path, "KITTI calibration");

  auto * roundtrip_cmd = app.add_subcommand("encode-decode", "encode/decode round-trip self-test");
  roundtrip_cmd->add_option("--count", cfg.roundtrip_count, "random boxes")->check(CLI::PositiveNumber);

  auto * train_cmd = app.add_subcommand("train-toy", "overfit the toy network on synthetic scenes");
  train_cmd->add_option("--steps", cfg.steps, "SGD steps")->check(CLI::PositiveNumber);
  train_cmd->add_option("--scenes", cfg.scenes, "synthetic scenes (1-16)")->check(CLI::Range(1, 16));
  train_cmd->add_option("--objects", cfg.objects, "objects per scene")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--lr-scale", cfg.lr_scale, "multiplier on the learning-rate schedule")
    ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--max-grad-norm", cfg.max_grad_norm, "gradient norm clip (0 disables)")
    ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--conf-threshold", cfg.conf_threshold, "detection threshold for the report");

  auto * eval_cmd = app.add_subcommand("eval", "AP over IoU thresholds");
  eval_cmd->add_option("--dets", cfg.dets_path, "detections file")->required();
  eval_cmd->add_option("--gts", cfg.gts_path, "ground-truth file (same format)")->required();
  eval_cmd->add_option("--thresholds", cfg.thresholds, "IoU thresholds in (0, 1)")
    ->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--ap-points", cfg.ap_points, "interpolation points")
    ->check(CLI::IsMember({11, 40}));

  auto * bench_cmd = app.add_subcommand("bench", "resolution vs latency sweep");
  bench_cmd->add_option("--scan", cfg.scan_path, "velodyne scan (synthetic scene if omitted)");
  bench_cmd->add_option("--resolutions", cfg.resolutions, "meters per pixel")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--net", cfg.bench_net, "network timed after rasterization")
    ->check(CLI::IsMember({"toy", "none"}));
  bench_cmd->add_option("--runs", cfg.runs, "timed runs per resolution")->check(CLI::Range(20, 100000));

  auto * shapes_cmd = app.add_subcommand("shapes", "print the layer shape chain");
  shapes_cmd->add_option("--arch", cfg.arch, "table1 or toy")->check(CLI::IsMember({"table1", "toy"}));
  shapes_cmd->add_option("--input", cfg.toy_input, "toy input side")->check(CLI::PositiveNumber);

  std::string manifest_path;
  auto * replay_cmd = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay_cmd->add_option("manifest", manifest_path, "manifest.json")->required();

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError & e) {
    err << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (replay_cmd->parsed()) {
      return run_replay(manifest_path, out, err);
    }
    cfg.grid.validate();
    if (rasterize_cmd->parsed()) {
      cfg.subcommand = "rasterize";
      return cmd_rasterize(cfg, args, out);
    }
    if (anchors_cmd->parsed()) {
      cfg.subcommand = "anchors";
      return cmd_anchors(cfg, args, out);
    }
    if (roundtrip_cmd->parsed()) {
      cfg.subcommand = "encode-decode";
      return cmd_encode_decode(cfg, args, out);
    }
    if (train_cmd->parsed()) {
      cfg.subcommand = "train-toy";
      return cmd_train_toy(cfg, args, out);
    }
    if (eval_cmd->parsed()) {
      cfg.subcommand = "eval";
      return cmd_eval(cfg, args, out);
    }
    if (bench_cmd->parsed()) {
      cfg.subcommand = "bench";
      return cmd_bench(cfg, args, out);
    }
    if (shapes_cmd->parsed()) {
      cfg.subcommand = "shapes";
      return cmd_shapes(cfg, out);
    }
  } catch (const std::exception & e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace yolo3d::cli
