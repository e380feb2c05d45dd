#include "redf/evalmetrics.hpp"

#include "redf/errors.hpp"

#include <algorithm>
#include <cmath>

namespace redf {

EventLabels extract_events(const std::vector<int>& labels) {
  EventLabels out;
  out.labels = labels;
  long start = -1;
  for (long i = 0; i < static_cast<long>(labels.size()); ++i) {
    int v = labels[i];
    if (v != 0 && v != 1) throw DataError("labels must be 0/1");
    if (v == 1 && start < 0) start = i;
    if (v == 0 && start >= 0) {
      out.events.emplace_back(start, i);
      start = -1;
    }
  }
  if (start >= 0) out.events.emplace_back(start, static_cast<long>(labels.size()));
  return out;
}

long event_distance(long t, const std::pair<long, long>& event) {
  if (t < event.first) return event.first - t;
  if (t >= event.second) return t - (event.second - 1);
  return 0;
}

std::vector<long> affiliation_zones(const std::vector<std::pair<long, long>>& events, long total) {
  std::vector<long> cuts;
  cuts.push_back(0);
  for (size_t k = 0; k + 1 < events.size(); ++k) {
    // first t where the next event is strictly nearer; ties stay left
    long cut = (events[k].second + events[k + 1].first - 1) / 2 + 1;
    cuts.push_back(cut);
  }
  cuts.push_back(total);
  return cuts;
}

namespace {

// fraction of zone positions whose distance to the event is >= d
double outperform_probability(long zone_begin, long zone_end, const std::pair<long, long>& event,
                              double d) {
  long count = 0;
  for (long t = zone_begin; t < zone_end; ++t)
    if (static_cast<double>(event_distance(t, event)) >= d) ++count;
  return static_cast<double>(count) / static_cast<double>(zone_end - zone_begin);
}

}  // namespace

AffiliationReport affiliation_metrics(const EventLabels& pred, const EventLabels& truth, long total) {
  if (total < 1) throw DataError("affiliation_metrics: empty timeline");
  AffiliationReport rep;
  rep.n_pred_events = static_cast<long>(pred.events.size());
  rep.n_truth_events = static_cast<long>(truth.events.size());
  rep.recall_defined = !truth.events.empty();
  if (truth.events.empty()) return rep;

  std::vector<long> pred_points;
  for (const auto& e : pred.events)
    for (long t = e.first; t < e.second; ++t) pred_points.push_back(t);

  std::vector<long> cuts = affiliation_zones(truth.events, total);
  double precision_sum = 0.0;
  long precision_zones = 0;
  double recall_sum = 0.0;
  for (size_t k = 0; k < truth.events.size(); ++k) {
    long zb = cuts[k], ze = cuts[k + 1];
    const auto& event = truth.events[k];
    std::vector<long> in_zone;
    for (long q : pred_points)
      if (q >= zb && q < ze) in_zone.push_back(q);

    if (!in_zone.empty()) {
      double d_sum = 0.0;
      for (long q : in_zone) d_sum += static_cast<double>(event_distance(q, event));
      precision_sum += outperform_probability(zb, ze, event, d_sum / in_zone.size());
      ++precision_zones;
    }

    double zone_recall = 0.0;
    if (!in_zone.empty()) {
      double d_sum = 0.0;
      for (long y = event.first; y < event.second; ++y) {
        long best = std::numeric_limits<long>::max();
        for (long q : in_zone) best = std::min(best, std::labs(y - q));
        d_sum += static_cast<double>(best);
      }
      zone_recall = outperform_probability(zb, ze, event, d_sum / (event.second - event.first));
    }
    rep.event_recall.push_back(zone_recall);
    recall_sum += zone_recall;
  }

  rep.precision_defined = precision_zones > 0;
  if (rep.precision_defined) rep.aff_precision = precision_sum / precision_zones;
  rep.aff_recall = recall_sum / static_cast<double>(truth.events.size());
  if (rep.precision_defined && rep.aff_precision + rep.aff_recall > 0)
    rep.aff_f1 = 2.0 * rep.aff_precision * rep.aff_recall / (rep.aff_precision + rep.aff_recall);
  return rep;
}

PointwiseReport pointwise_metrics(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) throw DataError("pointwise_metrics: length mismatch");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != 0 && pred[i] != 1) throw DataError("labels must be 0/1");
    if (truth[i] != 0 && truth[i] != 1) throw DataError("labels must be 0/1");
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    if (pred[i] == 1 && truth[i] == 0) ++fp;
    if (pred[i] == 0 && truth[i] == 1) ++fn;
  }
  PointwiseReport r;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

}  // namespace redf
