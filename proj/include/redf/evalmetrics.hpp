#pragma once

#include <utility>
#include <vector>

namespace redf {

// Binary per-timestep labels plus the maximal [start, end) runs of 1s.
struct EventLabels {
  std::vector<int> labels;
  std::vector<std::pair<long, long>> events;
};

// Rejects non-binary values.
EventLabels extract_events(const std::vector<int>& labels);

struct AffiliationReport {
  double aff_precision = 0.0;
  double aff_recall = 0.0;
  double aff_f1 = 0.0;
  bool precision_defined = false;  // false when there are no predicted points
  bool recall_defined = false;     // false when there are no truth events
  std::vector<double> event_recall;  // per truth-event recall contribution
  long n_pred_events = 0;
  long n_truth_events = 0;
};

// Event-based affiliation metrics on [0, T):
//  - the timeline is partitioned into zones, one per truth event, each zone
//    owning the timesteps nearest to its event (ties split at midpoints,
//    earlier event wins);
//  - precision direction: per zone with predictions, the mean distance from
//    predicted points to the event, converted to the fraction of zone
//    positions at least that far from the event (outperform-random
//    probability, exact summation);
//  - recall direction: per zone, the mean distance from event timesteps to
//    the nearest prediction inside the zone, converted the same way; zones
//    without predictions contribute 0;
//  - aff_precision averages over zones containing predictions, aff_recall
//    over all zones, aff_f1 is their harmonic mean (0 when undefined).
AffiliationReport affiliation_metrics(const EventLabels& pred, const EventLabels& truth, long total);

struct PointwiseReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Plain confusion-matrix scores; no point adjustment.
PointwiseReport pointwise_metrics(const std::vector<int>& pred, const std::vector<int>& truth);

// distance from timestep t to event interval [start, end)
long event_distance(long t, const std::pair<long, long>& event);

// zone boundaries for the given truth events over [0, total): returns K+1
// cut points c_0=0 <= ... <= c_K=total; zone k is [c_k, c_{k+1})
std::vector<long> affiliation_zones(const std::vector<std::pair<long, long>>& events, long total);

}  // namespace redf
