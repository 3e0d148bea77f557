// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "molmix/multitask.hpp"
#include "oracles.hpp"

namespace molmix::mt {
namespace {

using V = ad::Var<double>;
using testing::brute_ap;
using testing::brute_auroc;
using testing::filtered_loss;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

MaskedTargets targets(std::size_t rows, std::size_t cols,
                      std::vector<double> v) {
  Matrix m(rows, cols);
  m.data = std::move(v);
  return { m };
}

TEST(MaskedLoss, WorkedExample) {
  ad::Tape<double> t;
  const V pred = t.leaf({ 1, 4 }, { 0.2, 0.4, 5.0, 0.6 });
  const auto loss = masked_loss(pred, targets(1, 4, { 0, 0, kNan, 0 }),
                                LossKind::kMae);
  ASSERT_TRUE(loss);
  EXPECT_NEAR(loss->item(), 0.4, 1e-15);
}

TEST(MaskedLoss, NoMissingIsPlainMean) {
  ad::Tape<double> t;
  const V pred = t.leaf({ 2, 2 }, { 1, 2, 3, 4 });
  const auto loss = masked_loss(pred, targets(2, 2, { 0, 0, 0, 0 }),
                                LossKind::kMae);
  EXPECT_DOUBLE_EQ(loss->item(), 2.5);
}

TEST(MaskedLoss, BceAtClampBoundaryIsZero) {
  ad::Tape<double> t;
  const V pred = t.leaf({ 1, 2 }, { 1.0, 0.0 });
  const auto loss = masked_loss(pred, targets(1, 2, { 1, 0 }), LossKind::kBce);
  EXPECT_EQ(loss->item(), 0.0);
  t.backward(*loss);
  EXPECT_TRUE(std::isfinite(pred.grad()[0]));
}

TEST(MaskedLoss, AllMissingIsSkipped) {
  ad::Tape<double> t;
  const V pred = t.leaf({ 1, 2 }, { 1.0, 0.0 });
  EXPECT_FALSE(masked_loss(pred, targets(1, 2, { kNan, kNan }), LossKind::kMae));
  EXPECT_THROW(masked_loss(pred, targets(2, 1, { 0, 0 }), LossKind::kMae),
               ShapeError);
}

TEST(MaskedLoss, EqualsFilteredLossOnRandomPatterns) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto kind: { LossKind::kMae, LossKind::kBce }) {
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t rows = 1 + rng() % 6;
      const std::size_t cols = 1 + rng() % 5;
      const double sparsity = u(rng);
      std::vector<double> p(rows * cols), y(rows * cols);
      bool any = false;
      for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = kind == LossKind::kBce ? 0.02 + 0.96 * u(rng) : 4 * u(rng) - 2;
        y[i] = kind == LossKind::kBce ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng);
        if (u(rng) < sparsity) {
          y[i] = kNan;
        } else {
          any = true;
        }
      }
      if (!any) {
        y[0] = 1.0;
      }
      ad::Tape<double> t;
      const V pred = t.leaf({ rows, cols }, p);
      const auto loss = masked_loss(pred, targets(rows, cols, y), kind);
      ASSERT_TRUE(loss);
      ASSERT_NEAR(loss->item(), filtered_loss(p, y, kind), 1e-12);
      t.backward(*loss);
      for (std::size_t i = 0; i < y.size(); ++i) {
        if (std::isnan(y[i])) {
          ASSERT_EQ(pred.grad()[i], 0.0);
        }
      }
    }
  }
}

TEST(MaskedLoss, Gradcheck) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto kind: { LossKind::kMae, LossKind::kBce }) {
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t rows = 1 + rng() % 4;
      const std::size_t cols = 1 + rng() % 4;
      std::vector<double> p(rows * cols), y(rows * cols);
      for (std::size_t i = 0; i < p.size(); ++i) {
        y[i] = i == 0 || u(rng) < 0.7 ? (u(rng) < 0.5 ? 0.0 : 1.0) : kNan;
        p[i] = 0.05 + 0.9 * u(rng);
        if (kind == LossKind::kMae && std::abs(p[i] - y[i]) < 0.05) {
          p[i] += 0.1;
        }
      }
      const auto tg = targets(rows, cols, y);
      const auto report = ad::gradcheck(
          [&](ad::Tape<double> &, std::span<const V> x) {
            return *masked_loss(x[0], tg, kind);
          },
          { { { rows, cols }, p } });
      ASSERT_TRUE(report.passed) << report.max_rel_error;
    }
  }
}

TEST(HybridLoss, WorkedValue) {
  const std::vector<double> x { 0, 0, 0.5, 0.5, 0 };
  EXPECT_NEAR(hybrid_loss(x, 2, { 5, 0.5 }), 0.471574, 1e-6);
  EXPECT_NEAR(hybrid_loss(x, 2, { 5, 0.5 }),
              0.5 * std::log(2.0) + 0.5 * 0.25, 1e-15);
}

TEST(HybridLoss, Endpoints) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(rng() % 6);
    std::vector<double> x(c);
    double s = 0.0;
    for (auto &v: x) {
      v = u(rng);
      s += v;
    }
    for (auto &v: x) {
      v /= s;
    }
    const int y = static_cast<int>(rng() % c);
    double expected = 0.0;
    for (int i = 0; i < c; ++i) {
      expected += x[i] * i;
    }
    EXPECT_EQ(hybrid_loss(x, y, { c, 1.0 }), -std::log(x[y]));
    EXPECT_EQ(hybrid_loss(x, y, { c, 0.0 }),
              (expected - y) * (expected - y));
    EXPECT_GE(hybrid_loss(x, y, { c, u(rng) }), 0.0);
  }
}

TEST(HybridLoss, OneHotIsZeroAndRankingMonotone) {
  const int c = 5;
  auto onehot_loss = [c](int j, int y, double alpha) {
    std::vector<double> x(c, 0.0);
    x[j] = 1.0;
    return hybrid_loss(x, y, { c, alpha });
  };
  for (int y = 0; y < c; ++y) {
    EXPECT_EQ(onehot_loss(y, y, 0.0), 0.0);
    EXPECT_EQ(onehot_loss(y, y, 0.7), 0.0);
    for (int j = 0; j < c; ++j) {
      for (int k = 0; k < c; ++k) {
        if (std::abs(j - y) < std::abs(k - y)) {
          EXPECT_LT(onehot_loss(j, y, 0.0), onehot_loss(k, y, 0.0));
        }
      }
    }
  }
  EXPECT_THROW(hybrid_loss(std::vector<double>(5, 0.2), 5, { 5, 0.5 }),
               DataError);
  EXPECT_THROW(hybrid_loss(std::vector<double>(5, 0.2), 1, { 5, 1.5 }),
               ConfigError);
}

TEST(HybridLoss, TapeMatchesScalarAndGradchecks) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng() % 4;
    const HybridLossConfig cfg { 2 + static_cast<int>(rng() % 4),
                                 std::uniform_real_distribution<double>(0, 1)(rng) };
    const auto c = static_cast<std::size_t>(cfg.num_classes);
    std::vector<double> logits(rows * c), y(rows);
    for (auto &v: logits) {
      v = g(rng);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      y[r] = r > 0 && rng() % 4 == 0 ? kNan : static_cast<double>(rng() % c);
    }
    const auto tg = targets(rows, 1, y);

    ad::Tape<double> t;
    const V probs = ad::row_softmax(t.leaf({ rows, c }, logits));
    const auto loss = masked_hybrid_loss(probs, tg, cfg);
    double s = 0.0;
    int n = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::isnan(y[r])) {
        const auto row = probs.value().subspan(r * c, c);
        s += hybrid_loss(row, static_cast<int>(y[r]), cfg);
        ++n;
      }
    }
    ASSERT_NEAR(loss->item(), s / n, 1e-12);

    const auto report = ad::gradcheck(
        [&](ad::Tape<double> &, std::span<const V> x) {
          return *masked_hybrid_loss(ad::row_softmax(x[0]), tg, cfg);
        },
        { { { rows, c }, logits } });
    ASSERT_TRUE(report.passed) << report.max_rel_error;
  }
}

TEST(TotalLoss, WeightsAndSkips) {
  ad::Tape<double> t;
  const V a = t.leaf({ 1, 1 }, { 2.0 });
  const V b = t.leaf({ 1, 1 }, { 3.0 });
  const std::vector<std::optional<V>> one { a };
  EXPECT_EQ(total_loss(t, one, {}).item(), 2.0);
  const std::vector<std::optional<V>> two { a, b, std::nullopt };
  const std::vector<double> w { 1.0, 0.0, 5.0 };
  const V total = total_loss(t, two, w);
  EXPECT_EQ(total.item(), 2.0);
  t.backward(total);
  EXPECT_EQ(a.grad()[0], 1.0);
  EXPECT_EQ(b.grad()[0], 0.0);

  ad::Tape<double> u;
  const std::vector<std::optional<V>> none { std::nullopt };
  EXPECT_EQ(total_loss(u, none, {}).item(), 0.0);

  const auto report = ad::gradcheck(
      [](ad::Tape<double> &tape, std::span<const V> x) {
        const std::vector<std::optional<V>> parts {
          ad::reduce_sum(ad::square(x[0])), ad::reduce_mean(ad::exp(x[1])) };
        const std::vector<double> ws { 0.3, 2.0 };
        return total_loss(tape, parts, ws);
      },
      { { { 2, 2 }, { 0.1, -0.4, 1.2, 0.7 } }, { { 1, 3 }, { 0.5, -1, 2 } } });
  EXPECT_TRUE(report.passed);
}

TEST(Metrics, AurocWorkedExample) {
  const std::vector<double> p { 0.1, 0.4, 0.35, 0.8 };
  const std::vector<double> y { 0, 0, 1, 1 };
  EXPECT_DOUBLE_EQ(*metric_auroc(p, y), 0.75);
  const std::vector<double> sep { 0.1, 0.2, 0.8, 0.9 };
  EXPECT_EQ(*metric_auroc(sep, y), 1.0);
  EXPECT_EQ(*metric_ap(sep, y), 1.0);
  const std::vector<double> single { 1, 1, 1, 1 };
  EXPECT_FALSE(metric_auroc(p, single));
  EXPECT_FALSE(metric_ap(p, single));
}

TEST(Metrics, MatchBruteForce) {
  std::mt19937_64 rng(5);
  int checked = 0;
  while (checked < 200) {
    const std::size_t n = 2 + rng() % 63;
    std::vector<double> p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse scores force ties.
      p[i] = static_cast<double>(rng() % 12) / 11.0;
      y[i] = static_cast<double>(rng() % 2);
    }
    const auto a = metric_auroc(p, y);
    const auto ap = metric_ap(p, y);
    const bool both = std::count(y.begin(), y.end(), 1.0) > 0
                      && std::count(y.begin(), y.end(), 0.0) > 0;
    ASSERT_EQ(a.has_value(), both);
    if (!both) {
      continue;
    }
    ASSERT_NEAR(*a, brute_auroc(p, y), 1e-12);
    ASSERT_NEAR(*ap, brute_ap(p, y), 1e-12);
    // Strictly increasing transforms keep the ranks.
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = std::exp(3.0 * p[i]) - 7.0;
    }
    ASSERT_EQ(*metric_auroc(q, y), *a);
    ++checked;
  }
}

TEST(Metrics, MissingLabelsAreDropped) {
  const std::vector<double> p { 0.1, 0.9, 0.4, 0.35, 0.8 };
  const std::vector<double> y { 0, kNan, 0, 1, 1 };
  const std::vector<double> pf { 0.1, 0.4, 0.35, 0.8 };
  const std::vector<double> yf { 0, 0, 1, 1 };
  EXPECT_EQ(*metric_auroc(p, y), *metric_auroc(pf, yf));
  EXPECT_EQ(*metric_ap(p, y), *metric_ap(pf, yf));
  EXPECT_EQ(*metric_mae(p, y), *metric_mae(pf, yf));
}

TEST(Metrics, PearsonAndR2) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> y(50), affine(50), neg(50), noisy(50);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = g(rng);
    affine[i] = 3.5 * y[i] - 2.0;
    neg[i] = -y[i];
    noisy[i] = y[i] + 0.3 * g(rng);
  }
  EXPECT_EQ(*metric_pearson(y, y), 1.0);
  EXPECT_EQ(*metric_r2(y, y), 1.0);
  EXPECT_EQ(*metric_pearson(neg, y), -1.0);
  EXPECT_NEAR(*metric_pearson(affine, y), 1.0, 1e-12);

  // Same affine map on both sides.
  std::vector<double> ty(50), tn(50);
  for (std::size_t i = 0; i < y.size(); ++i) {
    ty[i] = 0.25 * y[i] + 10.0;
    tn[i] = 0.25 * noisy[i] + 10.0;
  }
  EXPECT_NEAR(*metric_r2(tn, ty), *metric_r2(noisy, y), 1e-12);
  EXPECT_NEAR(*metric_pearson(tn, ty), *metric_pearson(noisy, y), 1e-12);

  const std::vector<double> flat(5, 1.0), some { 1, 2, 3, 4, 5 };
  EXPECT_FALSE(metric_pearson(some, flat));
  EXPECT_FALSE(metric_r2(some, flat));
  const std::vector<double> one { 1.0 };
  EXPECT_FALSE(metric_pearson(one, one));
}

TEST(BinZscores, Examples) {
  const std::vector<double> v { 0.0, 2.5, -5.0, 4.0, kNan, 10.0 };
  const auto c = bin_zscores(v);
  EXPECT_EQ(c[0], 2.0);
  EXPECT_EQ(c[1], 3.0);
  EXPECT_EQ(c[2], 0.0);
  EXPECT_EQ(c[3], 3.0);
  EXPECT_TRUE(std::isnan(c[4]));
  EXPECT_EQ(c[5], 4.0);
  const std::vector<double> bad { 1.0, 1.0 };
  EXPECT_THROW(bin_zscores(v, bad), ConfigError);
}

TEST(EvaluateTask, AveragesIgnoreColumnOrder) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TaskSpec task { "tox", "tox", Level::kGraph, LossKind::kBce,
                  { "a", "b", "c" } };
  Matrix p(40, 3), y(40, 3);
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    p.data[i] = u(rng);
    y.data[i] = u(rng) < 0.2 ? kNan : (u(rng) < 0.3 ? 1.0 : 0.0);
  }
  for (std::size_t r = 0; r < 40; ++r) {
    y(r, 2) = r == 0 ? kNan : 0.0;  // single class: skipped
  }
  const auto m = evaluate_task(task, p, y);
  EXPECT_EQ(m.skipped.at("auroc"), 1);
  EXPECT_EQ(m.per_label.size(), 7u);  // auroc, ap on a and b; accuracy on all three

  TaskSpec swapped = task;
  swapped.labels = { "c", "b", "a" };
  Matrix ps(40, 3), ys(40, 3);
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      ps(r, c) = p(r, 2 - c);
      ys(r, c) = y(r, 2 - c);
    }
  }
  const auto ms = evaluate_task(swapped, ps, ys);
  for (const auto &[metric, value]: m.averages) {
    EXPECT_NEAR(ms.averages.at(metric), value, 1e-15);
  }
}

TEST(EvaluateTask, RankedAndReports) {
  TaskSpec task { "l1000", "l1000", Level::kGraph, LossKind::kHybrid,
                  { "g1" }, 3 };
  Matrix p(4, 3), y(4, 1);
  p.data = { 0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.2, 0.2, 0.6, 0.5, 0.4, 0.1 };
  y.data = { 0, 1, 2, 1 };
  const auto m = evaluate_task(task, p, y);
  EXPECT_DOUBLE_EQ(m.averages.at("accuracy"), 0.75);
  EXPECT_TRUE(m.averages.count("auroc_c1"));

  const std::vector<MetricReport> reports { { 3, "val", { m } } };
  const std::string csv = to_csv(reports);
  EXPECT_NE(csv.find("3,val,l1000,g1,accuracy,0.75"), std::string::npos);
  EXPECT_NE(csv.find("3,val,l1000,average,accuracy,0.75"), std::string::npos);
  const auto j = nlohmann::json::parse(to_json(reports));
  EXPECT_EQ(j[0]["tasks"][0]["average"]["accuracy"], 0.75);
}

}  // namespace
}  // namespace molmix::mt
