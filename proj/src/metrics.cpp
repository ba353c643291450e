#include "metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "error.hpp"
#include "json.hpp"

namespace uhdn {

namespace {

// larger than any squared distance inside an image, far from overflow
constexpr std::int64_t kFar = std::int64_t(1) << 46;

void check_mask_shape(const Tensor4& m, const char* what) {
  const Shape4 s = m.shape();
  if (s.n != 1 || s.c != 1)
    fail(ErrorCode::usage, std::string(what) +
                               ": expected a (1,1,h,w) mask, got " + s.str());
}

// nearest-site squared distance along one row of a binary mask
void row_pass(const float* mask, std::int64_t w, std::int64_t* out) {
  std::int64_t last = -1;
  for (std::int64_t x = 0; x < w; ++x) {
    if (mask[x] != 0.0f) {
      last = x;
      out[x] = 0;
    } else {
      out[x] = last >= 0 ? (x - last) * (x - last) : kFar;
    }
  }
  std::int64_t next = -1;
  for (std::int64_t x = w - 1; x >= 0; --x) {
    if (mask[x] != 0.0f) next = x;
    else if (next >= 0) out[x] = std::min(out[x], (next - x) * (next - x));
  }
}

// lower envelope of parabolas (q - x)^2 + f[q] over sites with finite f;
// exact for integer f because parabola values at integer x are integers
void column_pass(const std::int64_t* f, std::int64_t n,
                 std::vector<std::int64_t>& v, std::vector<double>& z,
                 std::int64_t* out, std::int64_t out_stride) {
  v.clear();
  z.clear();
  for (std::int64_t q = 0; q < n; ++q) {
    const std::int64_t fq = f[q];
    if (fq >= kFar) continue;
    double s = 0.0;
    while (!v.empty()) {
      const std::int64_t p = v.back();
      s = double((fq + q * q) - (f[p] + p * p)) / double(2 * (q - p));
      if (s <= z.back()) {
        v.pop_back();
        z.pop_back();
      } else {
        break;
      }
    }
    z.push_back(v.empty() ? -1.0e300 : s);
    v.push_back(q);
  }
  if (v.empty()) {
    for (std::int64_t q = 0; q < n; ++q) out[q * out_stride] = kFar;
    return;
  }
  std::size_t k = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (k + 1 < v.size() && z[k + 1] < double(q)) ++k;
    const std::int64_t p = v[k];
    out[q * out_stride] = (q - p) * (q - p) + f[p];
  }
}

std::vector<std::pair<int, int>> disk_offsets(int margin) {
  std::vector<std::pair<int, int>> offs;
  for (int dy = -margin; dy <= margin; ++dy)
    for (int dx = -margin; dx <= margin; ++dx)
      if (dy * dy + dx * dx <= margin * margin) offs.emplace_back(dy, dx);
  return offs;
}

void check_margin(int margin) {
  if (margin < 0)
    fail(ErrorCode::usage,
         "tolerance margin must be non-negative, got " + std::to_string(margin));
}

// per-image predicted/covered counts for every grid threshold at once
struct GridCounts {
  std::vector<std::int64_t> tp, fp, fn;  // kThresholdCount entries each
};

// #grid thresholds t with t <= p; pixel is predicted at grid index k
// exactly when this count is at least k + 1
std::int64_t grid_rank(const std::vector<double>& grid, double p) {
  return std::upper_bound(grid.begin(), grid.end(), p) - grid.begin();
}

GridCounts threshold_counts(const Tensor4& prob, const Tensor4& gt, int margin,
                            const std::vector<double>& grid) {
  const Shape4 s = prob.shape();
  const std::int64_t m2 = std::int64_t(margin) * margin;
  const std::vector<std::int64_t> dt_gt = squared_distance_transform(gt);

  std::vector<std::int64_t> near_hist(grid.size() + 1, 0);
  std::vector<std::int64_t> far_hist(grid.size() + 1, 0);
  std::vector<std::int64_t> cover_hist(grid.size() + 1, 0);
  for (std::int64_t i = 0; i < prob.count(); ++i) {
    const double p = prob[i];
    if (!(p >= 0.0 && p <= 1.0))
      fail(ErrorCode::usage, "probability out of [0,1]: " + std::to_string(p));
    const std::int64_t r = grid_rank(grid, p);
    (dt_gt[std::size_t(i)] <= m2 ? near_hist : far_hist)[std::size_t(r)] += 1;
  }

  // a ground-truth pixel is covered at threshold t when some pixel within
  // the margin disk has probability >= t
  const auto offs = disk_offsets(margin);
  std::int64_t gt_total = 0;
  for (std::int64_t y = 0; y < s.h; ++y)
    for (std::int64_t x = 0; x < s.w; ++x) {
      if (gt(0, 0, y, x) == 0.0f) continue;
      ++gt_total;
      double best = -1.0;
      for (const auto [dy, dx] : offs) {
        const std::int64_t yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
        best = std::max(best, double(prob(0, 0, yy, xx)));
      }
      cover_hist[std::size_t(grid_rank(grid, best))] += 1;
    }

  GridCounts out;
  out.tp.assign(grid.size(), 0);
  out.fp.assign(grid.size(), 0);
  out.fn.assign(grid.size(), 0);
  std::int64_t tp_run = 0, fp_run = 0, cover_run = 0;
  for (std::size_t j = grid.size(); j >= 1; --j) {
    tp_run += near_hist[j];
    fp_run += far_hist[j];
    cover_run += cover_hist[j];
    out.tp[j - 1] = tp_run;
    out.fp[j - 1] = fp_run;
    out.fn[j - 1] = gt_total - cover_run;
  }
  return out;
}

void check_pairs(const std::vector<Tensor4>& probs,
                 const std::vector<Tensor4>& gts) {
  if (probs.empty()) fail(ErrorCode::usage, "empty evaluation dataset");
  if (probs.size() != gts.size())
    fail(ErrorCode::mismatch,
         "probability/ground-truth count mismatch: " +
             std::to_string(probs.size()) + " vs " + std::to_string(gts.size()));
  for (std::size_t i = 0; i < probs.size(); ++i) {
    check_mask_shape(probs[i], "evaluate");
    check_mask_shape(gts[i], "evaluate");
    if (!(probs[i].shape() == gts[i].shape()))
      fail(ErrorCode::mismatch, "image " + std::to_string(i) +
                                    ": probability map " +
                                    probs[i].shape().str() +
                                    " does not match ground truth " +
                                    gts[i].shape().str());
  }
}

double best_f1_of(const GridCounts& g) {
  double best = 0.0;
  for (int k = 0; k < kThresholdCount; ++k) {
    const Confusion c{g.tp[std::size_t(k)], g.fp[std::size_t(k)],
                      g.fn[std::size_t(k)]};
    best = std::max(best, f1(precision(c), recall(c)));
  }
  return best;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<double> threshold_grid() {
  std::vector<double> grid(kThresholdCount);
  for (int k = 0; k < kThresholdCount; ++k) grid[std::size_t(k)] = (k + 1) * 0.001;
  return grid;
}

std::vector<std::int64_t> squared_distance_transform(const Tensor4& mask) {
  check_mask_shape(mask, "squared_distance_transform");
  const Shape4 s = mask.shape();
  std::vector<std::int64_t> d(std::size_t(s.h * s.w));
  for (std::int64_t y = 0; y < s.h; ++y)
    row_pass(&mask(0, 0, y, 0), s.w, d.data() + y * s.w);
  std::vector<std::int64_t> col(std::size_t(s.h));
  std::vector<std::int64_t> v;
  std::vector<double> z;
  v.reserve(std::size_t(s.h));
  z.reserve(std::size_t(s.h));
  for (std::int64_t x = 0; x < s.w; ++x) {
    for (std::int64_t y = 0; y < s.h; ++y) col[std::size_t(y)] = d[std::size_t(y * s.w + x)];
    column_pass(col.data(), s.h, v, z, d.data() + x, s.w);
  }
  return d;
}

Confusion tolerant_confusion(const Tensor4& pred, const Tensor4& gt,
                             int margin) {
  check_mask_shape(pred, "tolerant_confusion");
  check_mask_shape(gt, "tolerant_confusion");
  check_margin(margin);
  if (!(pred.shape() == gt.shape()))
    fail(ErrorCode::mismatch, "prediction " + pred.shape().str() +
                                  " does not match ground truth " +
                                  gt.shape().str());
  const std::int64_t m2 = std::int64_t(margin) * margin;
  const std::vector<std::int64_t> dt_gt = squared_distance_transform(gt);
  const std::vector<std::int64_t> dt_pred = squared_distance_transform(pred);
  Confusion c;
  for (std::int64_t i = 0; i < pred.count(); ++i) {
    if (pred[i] != 0.0f) (dt_gt[std::size_t(i)] <= m2 ? c.tp : c.fp) += 1;
    if (gt[i] != 0.0f && dt_pred[std::size_t(i)] > m2) c.fn += 1;
  }
  return c;
}

double precision(const Confusion& c) {
  return c.tp + c.fp == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fp);
}

double recall(const Confusion& c) {
  return c.tp + c.fn == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fn);
}

double f1(double pr, double re) {
  return pr + re == 0.0 ? 0.0 : 2.0 * pr * re / (pr + re);
}

OdsResult ods(const std::vector<Tensor4>& probs,
              const std::vector<Tensor4>& gts, int margin) {
  check_pairs(probs, gts);
  check_margin(margin);
  const std::vector<double> grid = threshold_grid();
  std::vector<std::int64_t> tp(grid.size(), 0), fp(grid.size(), 0),
      fn(grid.size(), 0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const GridCounts g = threshold_counts(probs[i], gts[i], margin, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      tp[k] += g.tp[k];
      fp[k] += g.fp[k];
      fn[k] += g.fn[k];
    }
  }
  OdsResult best{grid[0], -1.0};
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const Confusion c{tp[k], fp[k], fn[k]};
    const double score = f1(precision(c), recall(c));
    if (score > best.f1) best = {grid[k], score};
  }
  return best;
}

double ois(const std::vector<Tensor4>& probs, const std::vector<Tensor4>& gts,
           int margin) {
  check_pairs(probs, gts);
  check_margin(margin);
  const std::vector<double> grid = threshold_grid();
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    sum += best_f1_of(threshold_counts(probs[i], gts[i], margin, grid));
  return sum / double(probs.size());
}

MetricsReport evaluate(const std::vector<Tensor4>& probs,
                       const std::vector<Tensor4>& gts,
                       const std::vector<std::string>& ids, int margin,
                       double threshold) {
  check_pairs(probs, gts);
  check_margin(margin);
  if (!ids.empty() && ids.size() != probs.size())
    fail(ErrorCode::usage, "id list length " + std::to_string(ids.size()) +
                               " does not match image count " +
                               std::to_string(probs.size()));
  if (!(threshold >= 0.0 && threshold <= 1.0))
    fail(ErrorCode::usage,
         "threshold out of [0,1]: " + std::to_string(threshold));

  MetricsReport r;
  r.thresholds = threshold_grid();
  Confusion pooled;
  std::vector<std::int64_t> tp(r.thresholds.size(), 0),
      fp(r.thresholds.size(), 0), fn(r.thresholds.size(), 0);
  double ois_sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    Tensor4 mask(probs[i].shape());
    for (std::int64_t j = 0; j < probs[i].count(); ++j)
      mask[j] = probs[i][j] >= threshold ? 1.0f : 0.0f;
    const Confusion c = tolerant_confusion(mask, gts[i], margin);
    pooled.tp += c.tp;
    pooled.fp += c.fp;
    pooled.fn += c.fn;
    ImageScores s;
    s.id = ids.empty() ? std::to_string(i) : ids[i];
    s.precision = precision(c);
    s.recall = recall(c);
    s.f1 = f1(s.precision, s.recall);
    r.mean_precision += s.precision;
    r.mean_recall += s.recall;
    r.mean_f1 += s.f1;
    r.per_image.push_back(std::move(s));

    const GridCounts g = threshold_counts(probs[i], gts[i], margin, r.thresholds);
    for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
      tp[k] += g.tp[k];
      fp[k] += g.fp[k];
      fn[k] += g.fn[k];
    }
    ois_sum += best_f1_of(g);
  }
  const double n = double(probs.size());
  r.mean_precision /= n;
  r.mean_recall /= n;
  r.mean_f1 /= n;
  r.aggregate_precision = precision(pooled);
  r.aggregate_recall = recall(pooled);
  r.aggregate_f1 = f1(r.aggregate_precision, r.aggregate_recall);
  OdsResult best{r.thresholds[0], -1.0};
  for (std::size_t k = 0; k < r.thresholds.size(); ++k) {
    const Confusion c{tp[k], fp[k], fn[k]};
    const double score = f1(precision(c), recall(c));
    if (score > best.f1) best = {r.thresholds[k], score};
  }
  r.ods_threshold = best.threshold;
  r.ods = best.f1;
  r.ois = ois_sum / n;
  return r;
}

std::string report_json(const MetricsReport& r) {
  nlohmann::json j;
  j["per_image"] = nlohmann::json::array();
  for (const ImageScores& s : r.per_image)
    j["per_image"].push_back({{"id", s.id},
                              {"precision", s.precision},
                              {"recall", s.recall},
                              {"f1", s.f1}});
  j["mean_precision"] = r.mean_precision;
  j["mean_recall"] = r.mean_recall;
  j["mean_f1"] = r.mean_f1;
  j["aggregate_precision"] = r.aggregate_precision;
  j["aggregate_recall"] = r.aggregate_recall;
  j["aggregate_f1"] = r.aggregate_f1;
  j["ods_threshold"] = r.ods_threshold;
  j["ods"] = r.ods;
  j["ois"] = r.ois;
  j["thresholds"] = r.thresholds;
  return j.dump(2);
}

std::string report_csv_header() {
  return "mean_precision,mean_recall,mean_f1,aggregate_precision,"
         "aggregate_recall,aggregate_f1,ods_threshold,ods,ois";
}

std::string report_csv_row(const MetricsReport& r) {
  return fmt6(r.mean_precision) + "," + fmt6(r.mean_recall) + "," +
         fmt6(r.mean_f1) + "," + fmt6(r.aggregate_precision) + "," +
         fmt6(r.aggregate_recall) + "," + fmt6(r.aggregate_f1) + "," +
         fmt6(r.ods_threshold) + "," + fmt6(r.ods) + "," + fmt6(r.ois);
}

}  // namespace uhdn
