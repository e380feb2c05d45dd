#include "redf/evalmetrics.hpp"
#include "redf/errors.hpp"
#include "redf/rng.hpp"

#include "affiliation_oracle.hpp"

#include <doctest.h>

using namespace redf;

TEST_CASE("extract_events: runs, empty, full, validation") {
  auto e = extract_events({0, 1, 1, 0, 1});
  REQUIRE(e.events.size() == 2);
  CHECK(e.events[0] == std::pair<long, long>{1, 3});
  CHECK(e.events[1] == std::pair<long, long>{4, 5});

  CHECK(extract_events({0, 0, 0}).events.empty());
  auto full = extract_events(std::vector<int>(7, 1));
  REQUIRE(full.events.size() == 1);
  CHECK(full.events[0] == std::pair<long, long>{0, 7});
  CHECK_THROWS_AS(extract_events({0, 2, 1}), DataError);
}

TEST_CASE("affiliation zones split gaps at midpoints, earlier event keeps ties") {
  std::vector<std::pair<long, long>> events = {{2, 5}, {9, 11}};
  auto cuts = affiliation_zones(events, 20);
  REQUIRE(cuts.size() == 3);
  CHECK(cuts[0] == 0);
  CHECK(cuts[2] == 20);
  // gap is t in [5, 9); dist to e0: t-4, to e1: 9-t; t=6 ties -> stays left
  CHECK(cuts[1] == 7);
}

TEST_CASE("affiliation: exact match scores 1/1/1") {
  std::vector<int> labels(30, 0);
  for (int t = 10; t < 14; ++t) labels[t] = 1;
  auto ev = extract_events(labels);
  auto rep = affiliation_metrics(ev, ev, 30);
  CHECK(rep.aff_precision == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.aff_recall == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.aff_f1 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("affiliation: no predictions yields zero F1 with undefined precision") {
  std::vector<int> truth(20, 0);
  truth[5] = 1;
  auto rep = affiliation_metrics(extract_events(std::vector<int>(20, 0)), extract_events(truth), 20);
  CHECK(!rep.precision_defined);
  CHECK(rep.aff_f1 == 0.0);
  CHECK(rep.aff_recall == 0.0);

  // no truth events: recall undefined, flagged
  auto rep2 = affiliation_metrics(extract_events(truth), extract_events(std::vector<int>(20, 0)), 20);
  CHECK(!rep2.recall_defined);
  CHECK(rep2.aff_f1 == 0.0);
}

TEST_CASE("affiliation agrees with the brute-force oracle on the worked example") {
  std::vector<int> truth(30, 0), pred(30, 0);
  truth[10] = truth[11] = 1;  // [10, 12)
  pred[11] = 1;               // [11, 12)
  auto rep = affiliation_metrics(extract_events(pred), extract_events(truth), 30);
  auto oracle = testing::affiliation_brute(pred, truth, 30);
  CHECK(rep.aff_precision == doctest::Approx(oracle.precision).epsilon(1e-12));
  CHECK(rep.aff_recall == doctest::Approx(oracle.recall).epsilon(1e-12));
  CHECK(rep.aff_f1 == doctest::Approx(oracle.f1).epsilon(1e-12));
  CHECK(rep.aff_precision == doctest::Approx(1.0).epsilon(1e-12));  // prediction inside the event
}

TEST_CASE("affiliation matches the oracle on random label pairs") {
  Rng rng(404);
  for (int trial = 0; trial < 300; ++trial) {
    long T = 5 + static_cast<long>(rng.uniform_index(26));
    std::vector<int> pred(T, 0), truth(T, 0);
    for (long t = 0; t < T; ++t) {
      pred[t] = rng.uniform() < 0.25 ? 1 : 0;
      truth[t] = rng.uniform() < 0.2 ? 1 : 0;
    }
    auto rep = affiliation_metrics(extract_events(pred), extract_events(truth), T);
    auto oracle = testing::affiliation_brute(pred, truth, T);
    CHECK(std::fabs(rep.aff_precision - oracle.precision) < 1e-9);
    CHECK(std::fabs(rep.aff_recall - oracle.recall) < 1e-9);
    CHECK(std::fabs(rep.aff_f1 - oracle.f1) < 1e-9);
    CHECK(rep.aff_precision >= 0.0);
    CHECK(rep.aff_precision <= 1.0);
    CHECK(rep.aff_recall >= 0.0);
    CHECK(rep.aff_recall <= 1.0);
    CHECK(rep.aff_f1 <= 1.0);
  }
}

TEST_CASE("affiliation is invariant under interior time shifts") {
  // configurations that keep all events well clear of the array bounds
  std::vector<int> truth(60, 0), pred(60, 0);
  for (int t = 20; t < 24; ++t) truth[t] = 1;
  for (int t = 27; t < 29; ++t) pred[t] = 1;
  auto base = affiliation_metrics(extract_events(pred), extract_events(truth), 60);
  for (int shift : {-3, 2, 5}) {
    std::vector<int> t2(60, 0), p2(60, 0);
    for (int t = 0; t < 60; ++t) {
      if (truth[t]) t2[t + shift] = 1;
      if (pred[t]) p2[t + shift] = 1;
    }
    auto rep = affiliation_metrics(extract_events(p2), extract_events(t2), 60);
    CHECK(rep.aff_precision == doctest::Approx(base.aff_precision).epsilon(1e-12));
    CHECK(rep.aff_recall == doctest::Approx(base.aff_recall).epsilon(1e-12));
  }
}

TEST_CASE("affiliation precision never drops as a lone prediction approaches the event") {
  std::vector<int> truth(50, 0);
  for (int t = 24; t < 26; ++t) truth[t] = 1;
  double prev = -1.0;
  for (int pos = 45; pos >= 25; --pos) {
    std::vector<int> pred(50, 0);
    pred[pos] = 1;
    auto rep = affiliation_metrics(extract_events(pred), extract_events(truth), 50);
    CHECK(rep.aff_precision >= prev);
    prev = rep.aff_precision;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-12));  // pos=25 lands on the event
}

TEST_CASE("pointwise metrics: identical, disjoint, half overlap") {
  std::vector<int> a = {1, 1, 0, 0};
  auto same = pointwise_metrics(a, a);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);

  std::vector<int> b = {0, 0, 1, 1};
  auto disj = pointwise_metrics(a, b);
  CHECK(disj.precision == 0.0);
  CHECK(disj.recall == 0.0);
  CHECK(disj.f1 == 0.0);

  std::vector<int> truth = {1, 0, 1, 0};
  auto half = pointwise_metrics(a, truth);
  CHECK(half.precision == doctest::Approx(0.5));
  CHECK(half.recall == doctest::Approx(0.5));
  CHECK(half.f1 == doctest::Approx(0.5));

  CHECK_THROWS_AS(pointwise_metrics({1, 0}, {1}), DataError);
}
