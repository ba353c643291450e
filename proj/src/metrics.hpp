#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace uhdn {

// Fixed sweep grid shared by the ODS and OIS computations:
// t = 0.001, 0.002, ..., 0.999.
inline constexpr int kThresholdCount = 999;

std::vector<double> threshold_grid();

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

// Exact squared Euclidean distance from every pixel to the nearest nonzero
// pixel of a (1,1,h,w) mask, row-major h*w.  Pixels of an empty mask get a
// sentinel larger than any squared image distance.
std::vector<std::int64_t> squared_distance_transform(const Tensor4& mask);

// Set-distance confusion with an inclusive Euclidean tolerance:
//   tp = predicted pixels within `margin` of some ground-truth pixel
//   fp = predicted pixels farther than `margin` from every ground-truth pixel
//   fn = ground-truth pixels farther than `margin` from every predicted pixel
// Nonzero mask values count as crack.  No one-to-one matching is performed.
Confusion tolerant_confusion(const Tensor4& pred, const Tensor4& gt,
                             int margin = 2);

// tp/(tp+fp) and tp/(tp+fn); an empty denominator is vacuously perfect (1).
double precision(const Confusion& c);
double recall(const Confusion& c);

// Harmonic mean; 0 when pr + re == 0.
double f1(double pr, double re);

struct OdsResult {
  double threshold = 0.0;
  double f1 = 0.0;
};

// Best dataset-level F1 over the fixed grid.  Counts are aggregated over all
// images before computing F1; ties break toward the smallest threshold.
OdsResult ods(const std::vector<Tensor4>& probs,
              const std::vector<Tensor4>& gts, int margin = 2);

// Mean over images of each image's best F1 over the same grid.
double ois(const std::vector<Tensor4>& probs, const std::vector<Tensor4>& gts,
           int margin = 2);

struct ImageScores {
  std::string id;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  // fixed-threshold scores, one entry per image
  std::vector<ImageScores> per_image;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  // same threshold, counts pooled over the dataset before dividing
  double aggregate_precision = 0.0;
  double aggregate_recall = 0.0;
  double aggregate_f1 = 0.0;
  double ods_threshold = 0.0;
  double ods = 0.0;
  double ois = 0.0;
  std::vector<double> thresholds;
};

// Full evaluation pass: per-image and pooled scores at `threshold`
// (inclusive >=) plus the ODS/OIS sweeps.  `ids` may be empty, in which case
// images are labeled by index.
MetricsReport evaluate(const std::vector<Tensor4>& probs,
                       const std::vector<Tensor4>& gts,
                       const std::vector<std::string>& ids, int margin = 2,
                       double threshold = 0.5);

std::string report_json(const MetricsReport& r);
std::string report_csv_header();
std::string report_csv_row(const MetricsReport& r);

}  // namespace uhdn
