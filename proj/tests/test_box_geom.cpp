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


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_support.hpp"
#include "yolo3d/box_geom.hpp"

namespace yolo3d
{
namespace
{

const GridConfig kGrid{};
const HeadConfig kHead{};

Obb3D box(double cx, double cy, double w, double l, double yaw = 0.0)
{
  Obb3D b;
  b.cx = cx;
  b.cy = cy;
  b.w = w;
  b.l = l;
  b.yaw = yaw;
  return b;
}

// At yaw 0 the length runs along x and the width along y.
double axis_aligned_iou(const Obb3D & a, const Obb3D & b)
{
  auto overlap = [](double c0, double e0, double c1, double e1) {
    return std::max(0.0, std::min(c0 + e0 / 2, c1 + e1 / 2) - std::max(c0 - e0 / 2, c1 - e1 / 2));
  };
  const double inter = overlap(a.cx, a.l, b.cx, b.l) * overlap(a.cy, a.w, b.cy, b.w);
  return inter / (a.w * a.l + b.w * b.l - inter);
}

bool inside(const Obb3D & b, double x, double y)
{
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double along = dx * std::cos(b.yaw) + dy * std::sin(b.yaw);
  const double across = -dx * std::sin(b.yaw) + dy * std::cos(b.yaw);
  return std::abs(along) <= b.l / 2 && std::abs(across) <= b.w / 2;
}

// Jittered-grid sampling of a's footprint: side x side strata, one point each.
double monte_carlo_iou(const Obb3D & a, const Obb3D & b, int side, Rng & rng)
{
  const double c = std::cos(a.yaw);
  const double s = std::sin(a.yaw);
  std::size_t hits = 0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double u = ((i + uniform(rng, 0.0, 1.0)) / side - 0.5) * a.l;
      const double v = ((j + uniform(rng, 0.0, 1.0)) / side - 0.5) * a.w;
      hits += inside(b, a.cx + u * c - v * s, a.cy + u * s + v * c);
    }
  }
  const double area_a = a.w * a.l;
  const double inter = area_a * static_cast<double>(hits) / (static_cast<double>(side) * side);
  return inter / (area_a + b.w * b.l - inter);
}

TEST(Anchors, TwoCarMean)
{
  std::vector<Obb3D> labels{box(0, 0, 1.6, 4.0), box(0, 0, 1.5, 3.8)};
  labels[0].h = 1.5;
  labels[1].h = 1.4;
  const auto anchors = compute_anchors(labels, std::vector{ClassId::car});
  ASSERT_EQ(anchors.size(), 1U);
  EXPECT_DOUBLE_EQ(anchors[0].w, 1.55);
  EXPECT_DOUBLE_EQ(anchors[0].l, 3.9);
  EXPECT_DOUBLE_EQ(anchors[0].h, 1.45);
}

TEST(Anchors, SinglePedestrianIsIdentity)
{
  Obb3D p = box(0, 0, 0.6, 0.8);
  p.h = 1.73;
  p.class_id = ClassId::pedestrian;
  const auto anchors = compute_anchors(std::vector{p}, std::vector{ClassId::pedestrian});
  EXPECT_EQ(anchors[0].w, 0.6);
  EXPECT_EQ(anchors[0].l, 0.8);
  EXPECT_EQ(anchors[0].h, 1.73);
  EXPECT_EQ(anchors[0].class_id, ClassId::pedestrian);
}

TEST(Anchors, MissingClassNamesIt)
{
  try {
    compute_anchors(std::vector{box(0, 0, 1, 1)}, kAllClasses);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument & e) {
    EXPECT_NE(std::string(e.what()).find("pedestrian"), std::string::npos) << e.what();
  }
}

TEST(Anchors, FileRoundTrip)
{
  const std::vector<Anchor> anchors{
    {1.6, 3.9, 1.56, ClassId::car}, {0.6, 0.8, 1.73, ClassId::pedestrian},
    {0.6, 1.76, 1.73, ClassId::cyclist}};
  const auto back = parse_anchors_text(format_anchors(anchors));
  ASSERT_EQ(back.size(), 3U);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].w, anchors[i].w);
    EXPECT_EQ(back[i].l, anchors[i].l);
    EXPECT_EQ(back[i].h, anchors[i].h);
    EXPECT_EQ(back[i].class_id, anchors[i].class_id);
  }
  EXPECT_THROW(parse_anchors_text("car 1.6 3.9\n"), FormatError);
  EXPECT_THROW(parse_anchors_text("truck 1 1 1\n"), FormatError);
  EXPECT_THROW(parse_anchors_text("car 1 -1 1\n"), FormatError);
}

TEST(Yaw, NormalizeExamples)
{
  EXPECT_EQ(normalize_yaw(kPi), 1.0);
  EXPECT_EQ(normalize_yaw(0.0), 0.0);
  EXPECT_EQ(normalize_yaw(-kPi / 2), -0.5);
  EXPECT_EQ(denormalize_yaw(-0.5), -kPi / 2);
}

TEST(Decode, ZeroRawGivesAnchorAtCellCenter)
{
  const Anchor anchor{1.6, 3.9, 1.56, ClassId::car};
  const CellIndex cell{5, 9, 0};
  const Obb3D b = decode(RawPrediction{}, cell, anchor, kHead, kGrid);
  // Cell size 1.6 m; column 5 center is 5.5 cells right of -30.4, row 9
  // center is 9.5 cells back from 60.8.
  EXPECT_NEAR(b.cy, -30.4 + 5.5 * 1.6, 1e-12);
  EXPECT_NEAR(b.cx, 60.8 - 9.5 * 1.6, 1e-12);
  EXPECT_NEAR(b.cz, 0.0, 1e-12);
  EXPECT_EQ(b.w, 1.6);
  EXPECT_EQ(b.l, 3.9);
  EXPECT_EQ(b.h, 1.56);
  EXPECT_EQ(b.yaw, 0.0);
  EXPECT_EQ(b.confidence, 0.5);
}

TEST(Decode, ExponentialAndClampedYaw)
{
  const Anchor anchor{1.6, 3.9, 1.56, ClassId::car};
  RawPrediction raw;
  raw.t_w = std::log(2.0);
  raw.t_phi = 2.0;
  const Obb3D b = decode(raw, CellIndex{}, anchor, kHead, kGrid);
  EXPECT_NEAR(b.w, 3.2, 1e-15);
  EXPECT_EQ(b.yaw, kPi);
  raw.t_phi = -7.0;
  EXPECT_EQ(decode(raw, CellIndex{}, anchor, kHead, kGrid).yaw, -kPi);
}

TEST(Decode, ClassIsSoftmaxArgmax)
{
  RawPrediction raw;
  raw.class_logits = {0.1, 2.0, -1.0};
  EXPECT_EQ(decode(raw, CellIndex{}, Anchor{}, kHead, kGrid).class_id, ClassId::pedestrian);
  const auto p = softmax(raw.class_logits);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  const auto big = softmax({1000.0, 999.0, -1000.0});
  EXPECT_NEAR(big[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Decode, YawInRangeAndDimsPositive)
{
  Rng rng = make_stream(3, "decode-range");
  for (int i = 0; i < 2000; ++i) {
    RawPrediction raw;
    raw.t_x = uniform(rng, -50, 50);
    raw.t_y = uniform(rng, -50, 50);
    raw.t_w = uniform(rng, -30, 30);
    raw.t_l = uniform(rng, -30, 30);
    raw.t_h = uniform(rng, -30, 30);
    raw.t_phi = uniform(rng, -100, 100);
    const Obb3D b = decode(raw, CellIndex{3, 4, 0}, Anchor{}, kHead, kGrid);
    EXPECT_GE(b.yaw, -kPi);
    EXPECT_LE(b.yaw, kPi);
    EXPECT_GT(b.w, 0.0);
    EXPECT_GT(b.l, 0.0);
    EXPECT_GT(b.h, 0.0);
  }
}

TEST(Sigmoid, StableAtExtremes)
{
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_EQ(sigmoid(-1000.0), 0.0);
  EXPECT_EQ(sigmoid(1000.0), 1.0);
  EXPECT_NEAR(logit(sigmoid(3.0)), 3.0, 1e-12);
}

TEST(Encode, CellCenterAnchorBoxIsAllZero)
{
  const Anchor anchor{1.6, 3.9, 1.56, ClassId::car};
  Obb3D b = box(60.8 - 9.5 * 1.6, -30.4 + 5.5 * 1.6, 1.6, 3.9);
  b.h = 1.56;
  b.cz = 0.0;
  const EncodedBox e = encode(b, anchor, kHead, kGrid);
  EXPECT_EQ(e.cell, (CellIndex{5, 9, 0}));
  for (double v : {e.raw.t_x, e.raw.t_y, e.raw.t_z, e.raw.t_w, e.raw.t_l, e.raw.t_h, e.raw.t_phi}) {
    EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(Encode, RoundTripThousandRandomBoxes)
{
  Rng rng = make_stream(4, "encode-roundtrip");
  const Anchor anchor{1.6, 3.9, 1.56, ClassId::car};
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Obb3D b;
    b.cx = uniform(rng, 0.0, 60.8);
    b.cy = uniform(rng, -30.4, 30.4);
    b.cz = uniform(rng, -1.99, 1.99);
    b.w = uniform(rng, 0.3, 3.0);
    b.l = uniform(rng, 0.3, 6.0);
    b.h = uniform(rng, 0.5, 3.0);
    b.yaw = uniform(rng, -kPi, kPi);
    const EncodedBox e = encode(b, anchor, kHead, kGrid);
    const Obb3D d = decode(e.raw, e.cell, anchor, kHead, kGrid);
    for (auto [x, y] : {std::pair{d.cx, b.cx}, {d.cy, b.cy}, {d.cz, b.cz}, {d.w, b.w},
                        {d.l, b.l}, {d.h, b.h}, {d.yaw, b.yaw}}) {
      worst = std::max(worst, std::abs(x - y) / std::max(1.0, std::abs(y)));
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Encode, OutsideGridAndBadDimsThrow)
{
  const Anchor anchor{};
  EXPECT_THROW(encode(box(-5.0, 0.0, 1, 1), anchor, kHead, kGrid), std::out_of_range);
  EXPECT_THROW(encode(box(10.0, 40.0, 1, 1), anchor, kHead, kGrid), std::out_of_range);
  EXPECT_THROW(encode(box(10.0, 0.0, 0, 1), anchor, kHead, kGrid), std::invalid_argument);
}

TEST(Encode, CellEdgeOffsetIsClamped)
{
  // A center exactly on a cell boundary has fractional offset 0.
  const Obb3D b = box(60.8 - 3 * 1.6, -30.4 + 2 * 1.6, 1, 1);
  const EncodedBox e = encode(b, Anchor{}, kHead, kGrid);
  EXPECT_TRUE(std::isfinite(e.raw.t_x));
  EXPECT_TRUE(std::isfinite(e.raw.t_y));
  EXPECT_GE(e.frac_x, 1e-6);
  EXPECT_GE(e.frac_y, 1e-6);
}

TEST(BevIou, Examples)
{
  EXPECT_EQ(bev_iou(box(1, 2, 1.6, 3.9, 0.7), box(1, 2, 1.6, 3.9, 0.7)), 1.0);
  EXPECT_EQ(bev_iou(box(0, 0, 2, 4), box(100, 0, 2, 4)), 0.0);
  EXPECT_NEAR(bev_iou(box(0, 0, 2, 2), box(1, 0, 2, 2)), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(bev_iou(box(0, 0, 0, 2), box(0, 0, 2, 2)), 0.0);
}

TEST(BevIou, AxisAlignedPairsMatchRectangleFormula)
{
  Rng rng = make_stream(5, "axis-aligned");
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Obb3D a = box(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0.5, 4), uniform(rng, 0.5, 4));
    const Obb3D b = box(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0.5, 4), uniform(rng, 0.5, 4));
    worst = std::max(worst, std::abs(bev_iou(a, b) - axis_aligned_iou(a, b)));
    // A quarter turn swaps the footprint axes.
    Obb3D turned = b;
    std::swap(turned.w, turned.l);
    turned.yaw = kPi / 2;
    worst = std::max(worst, std::abs(bev_iou(a, turned) - axis_aligned_iou(a, b)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(BevIou, RotatedPairsMatchMonteCarlo)
{
  Rng rng = make_stream(6, "monte-carlo");
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Obb3D a = test::random_box(rng, 1.0);
    Obb3D b = test::random_box(rng, 1.0);
    worst = std::max(worst, std::abs(bev_iou(a, b) - monte_carlo_iou(a, b, 1000, rng)));
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(BevIou, SymmetricBoundedAndRigidInvariant)
{
  Rng rng = make_stream(7, "iou-props");
  for (int i = 0; i < 500; ++i) {
    const Obb3D a = test::random_box(rng, 1.5);
    const Obb3D b = test::random_box(rng, 1.5);
    const double iou = bev_iou(a, b);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_NEAR(iou, bev_iou(b, a), 1e-9);

    const double dx = uniform(rng, -50, 50);
    const double dy = uniform(rng, -50, 50);
    const double th = uniform(rng, -kPi, kPi);
    auto move = [&](Obb3D o) {
      const double x = o.cx * std::cos(th) - o.cy * std::sin(th) + dx;
      const double y = o.cx * std::sin(th) + o.cy * std::cos(th) + dy;
      o.cx = x;
      o.cy = y;
      o.yaw = wrap_angle(o.yaw + th);
      return o;
    };
    EXPECT_NEAR(bev_iou(move(a), move(b)), iou, 1e-9);
    EXPECT_EQ(bev_iou(a, a), 1.0);
  }
}

TEST(Iou3d, Examples)
{
  Obb3D a = box(0, 0, 2, 4, 0.3);
  a.h = 2.0;
  EXPECT_EQ(iou_3d(a, a), 1.0);
  Obb3D b = a;
  b.cz = 5.0;
  EXPECT_EQ(iou_3d(a, b), 0.0);
  // Equal heights overlapping by half: intersection h/2, union 3h/2.
  b.cz = 1.0;
  EXPECT_NEAR(iou_3d(a, b), 1.0 / 3.0, 1e-12);
}

TEST(Nms, Examples)
{
  Obb3D hi = box(0, 0, 2, 4);
  hi.confidence = 0.9;
  Obb3D lo = hi;
  lo.confidence = 0.8;
  auto kept = nms(std::vector{lo, hi}, 0.5, true);
  ASSERT_EQ(kept.size(), 1U);
  EXPECT_EQ(kept[0].confidence, 0.9);

  Obb3D far = box(50, 0, 2, 4);
  far.confidence = 0.7;
  EXPECT_EQ(nms(std::vector{hi, far}, 0.5, true).size(), 2U);

  // A overlaps B, B overlaps C, A and C are disjoint: B goes, C stays.
  Obb3D a = box(0, 0, 2, 2);
  Obb3D b = box(1, 0, 2, 2);
  Obb3D c = box(2.2, 0, 2, 2);
  a.confidence = 0.9;
  b.confidence = 0.8;
  c.confidence = 0.7;
  ASSERT_EQ(bev_iou(a, c), 0.0);
  kept = nms(std::vector{c, b, a}, 0.3, true);
  ASSERT_EQ(kept.size(), 2U);
  EXPECT_EQ(kept[0].cx, 0.0);
  EXPECT_EQ(kept[1].cx, 2.2);
}

TEST(Nms, PerClassKeepsOtherClasses)
{
  Obb3D car = box(0, 0, 2, 4);
  car.confidence = 0.9;
  Obb3D ped = car;
  ped.class_id = ClassId::pedestrian;
  ped.confidence = 0.6;
  EXPECT_EQ(nms(std::vector{car, ped}, 0.5, true).size(), 2U);
  EXPECT_EQ(nms(std::vector{car, ped}, 0.5, false).size(), 1U);
}

TEST(Nms, OutputSortedAndSurvivorsSeparated)
{
  Rng rng = make_stream(8, "nms-props");
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Obb3D> dets;
    for (int i = 0; i < 40; ++i) {
      Obb3D b = test::random_box(rng, 4.0);
      b.confidence = uniform(rng, 0, 1);
      b.class_id = kAllClasses[static_cast<std::size_t>(i % 3)];
      dets.push_back(b);
    }
    const auto kept = nms(dets, 0.3, true);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (i > 0) {
        EXPECT_GE(kept[i - 1].confidence, kept[i].confidence);
      }
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].class_id == kept[j].class_id) {
          EXPECT_LE(bev_iou(kept[i], kept[j]), 0.3);
        }
      }
    }
  }
}

TEST(Nms, TiesKeepEarlierInput)
{
  Obb3D first = box(0, 0, 2, 4);
  first.confidence = 0.5;
  Obb3D second = box(0.1, 0, 2, 4);
  second.confidence = 0.5;
  const auto kept = nms(std::vector{first, second}, 0.3, true);
  ASSERT_EQ(kept.size(), 1U);
  EXPECT_EQ(kept[0].cx, 0.0);
}

TEST(HeadConfigCheck, DefaultsMatchGrid)
{
  EXPECT_EQ(kHead.channels(), 33);
  EXPECT_NEAR(kHead.cell_size(kGrid), 1.6, 1e-15);
  EXPECT_NO_THROW(kHead.validate(kGrid));
  EXPECT_THROW((HeadConfig{37, 3, 16}).validate(kGrid), std::invalid_argument);
}

}  // namespace
}  // namespace yolo3d
