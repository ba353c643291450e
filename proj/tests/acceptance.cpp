// Release gate: one PASS/FAIL line per criterion, exit code = failure count.
// Each criterion is self-contained and uses independent reference
// computations (finite differences, zero-stuffed kernels, all-pairs scans,
// hand-derived optimizer traces) rather than the production code paths it
// judges.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <unistd.h>

#include "dataio.hpp"
#include "gradcheck.hpp"
#include "metrics.hpp"
#include "net.hpp"
#include "rng.hpp"
#include "tensor.hpp"
#include "train.hpp"
#include "uhdn.h"

namespace fs = std::filesystem;
using namespace uhdn;

namespace {

#define ACCEPT(cond, msg)                 \
  do {                                    \
    if (!(cond)) return {false, (msg)};   \
  } while (0)

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("uhdn_accept_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// 96x64 color image with a dark 16-pixel band and its binary label
void write_stripe_pair(const fs::path& root, const std::string& id, int lo,
                       int hi, bool horizontal) {
  fs::create_directories(root / "image");
  fs::create_directories(root / "groundtruth");
  cv::Mat img(64, 96, CV_8UC3, cv::Scalar(200, 200, 200));
  cv::Mat mask(64, 96, CV_8UC1, cv::Scalar(0));
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 96; ++x) {
      const int axis = horizontal ? y : x;
      if (axis >= lo && axis < hi) {
        img.at<cv::Vec3b>(y, x) = cv::Vec3b(30, 30, 30);
        mask.at<std::uint8_t>(y, x) = 255;
      }
    }
  cv::imwrite((root / "image" / (id + ".png")).string(), img);
  cv::imwrite((root / "groundtruth" / (id + ".png")).string(), mask);
}

// ---- criterion 1: reverse-mode gradients vs central finite differences ----

Outcome run_gradient_oracle() {
  const std::vector<GradCheckResult> results = gradcheck_all(5, 2026);
  ACCEPT(results.size() >= 9, "expected at least nine checked operations");
  for (const GradCheckResult& r : results)
    ACCEPT(r.pass, r.op + " worst relative error " + num(r.worst_rel) +
                       " at " + r.worst_where);
  return {true, ""};
}

// ---- criterion 2: output shapes and the parameter plan at full width ------

Outcome run_shape_coverage() {
  const NetworkConfig cfg;  // stock width: 64 base channels, rates 2/4/8/16
  const std::vector<ParamSpec> specs = Network::expected_parameters(cfg);
  std::map<std::string, Shape4> plan;
  for (const ParamSpec& s : specs) plan[s.name] = s.shape;

  auto shaped = [&](const std::string& name, Shape4 want) {
    auto it = plan.find(name);
    return it != plan.end() && it->second.n == want.n &&
           it->second.c == want.c && it->second.h == want.h &&
           it->second.w == want.w;
  };
  ACCEPT(shaped("enc1.conv1.weight", {64, 3, 3, 3}), "enc1.conv1 shape");
  ACCEPT(shaped("enc4.conv2.weight", {512, 512, 3, 3}), "enc4.conv2 shape");
  for (int r : {2, 4, 8, 16})
    ACCEPT(shaped("mdm.branch_r" + std::to_string(r) + ".weight",
                  {512, 512, 3, 3}),
           "dilation branch shape, rate " + std::to_string(r));
  ACCEPT(shaped("mdm.project.weight", {1024, 2560, 1, 1}),
         "multi-dilation projection must map 2560 concatenated channels to "
         "1024");
  ACCEPT(shaped("side2.weight", {1, 1024, 1, 1}), "side2 tap width");
  ACCEPT(shaped("fuse.weight", {1, 5, 1, 1}), "fusion over five side maps");

  Network net(cfg);
  ACCEPT(net.param_names().size() == specs.size(),
         "constructed parameter set differs from the documented plan");
  for (const ParamSpec& s : specs) {
    const Shape4 got = net.param(s.name).shape();
    ACCEPT(got.n == s.shape.n && got.c == s.shape.c && got.h == s.shape.h &&
               got.w == s.shape.w,
           "parameter shape mismatch: " + s.name);
  }

  Rng rng(7);
  for (const auto& [h, w] :
       std::vector<std::pair<int, int>>{{64, 96}, {320, 480}, {312, 464}}) {
    Tensor4 x({1, 3, h, w});
    for (std::int64_t i = 0; i < x.count(); ++i)
      x.data()[i] = float(rng.next_uniform());
    const SideBundle out = net.forward(x);
    ACCEPT(out.sides.size() == 5,
           "expected five side outputs at " + std::to_string(w) + "x" +
               std::to_string(h));
    for (const Tensor4& s : out.sides) {
      const Shape4 ss = s.shape();
      ACCEPT(ss.n == 1 && ss.c == 1 && ss.h == h && ss.w == w,
             "side output off-resolution at " + std::to_string(w) + "x" +
                 std::to_string(h));
    }
    const Shape4 fs_ = out.fused.shape();
    ACCEPT(fs_.n == 1 && fs_.c == 1 && fs_.h == h && fs_.w == w,
           "fused output off-resolution at " + std::to_string(w) + "x" +
               std::to_string(h));
  }
  return {true, ""};
}

// ---- criterion 3: dilation semantics --------------------------------------

// taps spread out with r-1 zeros between them
Tensor4 zero_stuffed(const Tensor4& w, int r) {
  const Shape4 s = w.shape();
  const std::int64_t ke = (s.h - 1) * r + 1;
  Tensor4 out({s.n, s.c, ke, ke});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < s.c; ++c)
      for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
          out(n, c, y * r, x * r) = w(n, c, y, x);
  return out;
}

Outcome run_dilation_invariants() {
  for (int k : {1, 3, 5})
    for (int r = 1; r <= 16; ++r)
      ACCEPT(effective_kernel_size(k, r) == k + (k - 1) * (r - 1),
             "effective kernel size wrong for k=" + std::to_string(k) +
                 " r=" + std::to_string(r));

  Rng rng(11);
  auto randt = [&](Shape4 s, float scale = 1.0f) {
    Tensor4 t(s);
    for (std::int64_t i = 0; i < t.count(); ++i)
      t.data()[i] = scale * float(rng.next_gaussian());
    return t;
  };

  const Tensor4 probe = randt({1, 4, 40, 40});
  const Tensor4 w = randt({8, 4, 3, 3});
  const Tensor4 b = randt({1, 8, 1, 1});
  for (int r : {1, 2, 3, 4, 8, 16}) {
    const Tensor4 y = conv2d(probe, w, b, {r, same_padding(3, r)});
    const Shape4 s = y.shape();
    ACCEPT(s.h == 40 && s.w == 40,
           "size not preserved at rate " + std::to_string(r));
    const Shape4 ws = w.shape();
    ACCEPT(ws.n == 8 && ws.c == 4 && ws.h == 3 && ws.w == 3,
           "weight shape must not depend on the rate");
  }

  // modest magnitudes keep single-precision rounding far below the tolerance
  for (int trial = 0; trial < 6; ++trial) {
    const int r = 2 + trial % 3;
    const Tensor4 x = randt({1, 2, 8, 8}, 0.25f);
    const Tensor4 wd = randt({3, 2, 3, 3}, 0.25f);
    const Tensor4 bd = randt({1, 3, 1, 1}, 0.25f);
    const Tensor4 dilated = conv2d(x, wd, bd, {r, same_padding(3, r)});
    const int ke = effective_kernel_size(3, r);
    const Tensor4 stuffed =
        conv2d(x, zero_stuffed(wd, r), bd, {1, same_padding(ke, 1)});
    ACCEPT(dilated.shape().count() == stuffed.shape().count(),
           "zero-stuffing changed the output size");
    for (std::int64_t i = 0; i < dilated.count(); ++i)
      ACCEPT(std::abs(double(dilated.data()[i]) - double(stuffed.data()[i])) <
                 1e-6,
             "dilated conv diverges from its zero-stuffed equivalent at rate " +
                 std::to_string(r));
  }
  return {true, ""};
}

// ---- criterion 4: two-image overfit with the stock recipe -----------------

Outcome run_overfit_smoke() {
  TempDir dir;
  const fs::path root = dir.path / "ds";
  write_stripe_pair(root, "a", 24, 40, true);
  write_stripe_pair(root, "b", 40, 56, false);

  const std::vector<Sample> samples = load_dataset(root, Layout::generic, 3);
  ACCEPT(samples.size() == 2, "fixture dataset failed to load");
  std::vector<TrainSample> data;
  std::vector<Tensor4> gts;
  std::vector<std::string> ids;
  for (const Sample& s : samples) {
    data.push_back({s.image, s.mask, s.id});
    gts.push_back(s.mask);
    ids.push_back(s.id);
  }

  NetworkConfig ncfg;
  ncfg.base_channels = 8;
  ncfg.seed = 21;
  Network net(ncfg);

  TrainConfig tcfg;  // stock recipe: adam at 1e-3, plateau 10 @ 0.95
  tcfg.max_epochs = 500;
  tcfg.batch_size = 2;
  tcfg.seed = 4;

  int reached_at = 0;
  double best_f1 = 0.0;
  auto probe = [&](const EpochLog& log) {
    if (log.epoch % 5 != 0 && log.epoch < 490) return true;
    std::vector<Tensor4> probs;
    for (const TrainSample& s : data)
      probs.push_back(net.predict_probability(s.image));
    const double f1 = evaluate(probs, gts, ids, 2, 0.5).mean_f1;
    best_f1 = std::max(best_f1, f1);
    if (f1 > 0.95) {
      reached_at = log.epoch;
      return false;
    }
    return true;
  };
  train(net, data, tcfg, probe);
  ACCEPT(reached_at > 0, "training-set F1 stalled at " + num(best_f1) +
                             " after 500 epochs");

  // same checkpoint through the public pipeline: files in, files out
  const fs::path ckpt = dir.path / "smoke.uhdn";
  save_checkpoint(net, ckpt.string());
  uhdn_config* cfg = uhdn_config_create();
  uhdn_metrics* m = nullptr;
  const fs::path out = dir.path / "pred";
  const bool pipeline_ok =
      uhdn_predict(cfg, ckpt.string().c_str(),
                   (root / "image").string().c_str(), out.string().c_str(),
                   1) == UHDN_OK &&
      uhdn_evaluate_dirs(cfg, out.string().c_str(),
                         (root / "groundtruth").string().c_str(),
                         &m) == UHDN_OK;
  const double end_to_end_f1 = pipeline_ok ? uhdn_metrics_mean_f1(m) : -1.0;
  uhdn_metrics_destroy(m);
  uhdn_config_destroy(cfg);
  ACCEPT(pipeline_ok, std::string("predict/eval pipeline failed: ") +
                          uhdn_last_error());
  ACCEPT(end_to_end_f1 > 0.95,
         "pipeline F1 " + num(end_to_end_f1) + " (converged at epoch " +
             std::to_string(reached_at) + ")");
  return {true, "F1 > 0.95 at epoch " + std::to_string(reached_at) +
                    ", pipeline F1 " + num(end_to_end_f1)};
}

// ---- criterion 5: sweep scores vs a naive re-binarizing evaluator ---------

struct BruteCounts {
  std::int64_t tp = 0, fp = 0, fn = 0;
};

// all-pairs distance scan, no transforms
BruteCounts brute_confusion(const Tensor4& pred, const Tensor4& gt,
                            int margin) {
  const Shape4 s = pred.shape();
  const std::int64_t m2 = std::int64_t(margin) * margin;
  std::vector<std::pair<int, int>> pred_px, gt_px;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      if (pred(0, 0, y, x) != 0.0f) pred_px.push_back({y, x});
      if (gt(0, 0, y, x) != 0.0f) gt_px.push_back({y, x});
    }
  auto near = [&](int y, int x, const std::vector<std::pair<int, int>>& px) {
    for (const auto& [py, qx] : px) {
      const std::int64_t dy = py - y, dx = qx - x;
      if (dy * dy + dx * dx <= m2) return true;
    }
    return false;
  };
  BruteCounts c;
  for (const auto& [y, x] : pred_px) near(y, x, gt_px) ? ++c.tp : ++c.fp;
  for (const auto& [y, x] : gt_px)
    if (!near(y, x, pred_px)) ++c.fn;
  return c;
}

double brute_f1(const BruteCounts& c) {
  const double pr =
      c.tp + c.fp == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fp);
  const double re =
      c.tp + c.fn == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fn);
  return pr + re == 0.0 ? 0.0 : 2.0 * pr * re / (pr + re);
}

Tensor4 brute_binarize(const Tensor4& prob, double t) {
  Tensor4 out(prob.shape());
  for (std::int64_t i = 0; i < prob.count(); ++i)
    out.data()[i] = double(prob.data()[i]) >= t ? 1.0f : 0.0f;
  return out;
}

Outcome run_metrics_oracle() {
  Rng rng(404);
  const std::vector<double> grid = threshold_grid();
  ACCEPT(grid.size() == 999, "threshold grid must have 999 steps");

  std::vector<Tensor4> probs, gts;
  for (int i = 0; i < 20; ++i) {
    Tensor4 p({1, 1, 16, 16}), g({1, 1, 16, 16});
    for (std::int64_t j = 0; j < p.count(); ++j) {
      const double u = rng.next_uniform();
      if (u < 0.15)
        p.data()[j] = float(grid[rng.next_index(grid.size())]);
      else if (u < 0.25)
        p.data()[j] = rng.next_uniform() < 0.5 ? 0.0f : 1.0f;
      else if (u < 0.35)
        p.data()[j] = 0.5f;
      else
        p.data()[j] = float(rng.next_uniform());
      g.data()[j] = rng.next_uniform() < 0.1 ? 1.0f : 0.0f;
    }
    probs.push_back(p);
    gts.push_back(g);
  }

  // pooled best threshold by exhaustive re-binarization
  double naive_t = grid[0], naive_best = -1.0;
  for (double t : grid) {
    BruteCounts pool;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      const BruteCounts c = brute_confusion(brute_binarize(probs[i], t),
                                            gts[i], 2);
      pool.tp += c.tp;
      pool.fp += c.fp;
      pool.fn += c.fn;
    }
    const double score = brute_f1(pool);
    if (score > naive_best) {
      naive_best = score;
      naive_t = t;
    }
  }
  const OdsResult got = ods(probs, gts, 2);
  ACCEPT(got.threshold == naive_t,
         "best dataset threshold " + num(got.threshold) + " vs naive " +
             num(naive_t));
  ACCEPT(got.f1 == naive_best,
         "dataset F1 " + num(got.f1) + " vs naive " + num(naive_best));

  // per-image best, then mean
  double naive_ois_sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double best = -1.0;
    for (double t : grid)
      best = std::max(
          best, brute_f1(brute_confusion(brute_binarize(probs[i], t), gts[i], 2)));
    naive_ois_sum += best;
  }
  const double naive_ois = naive_ois_sum / double(probs.size());
  const double got_ois = ois(probs, gts, 2);
  ACCEPT(got_ois == naive_ois,
         "OIS " + num(got_ois) + " vs naive " + num(naive_ois));

  // transform-based tolerant counts vs the all-pairs scan
  for (int trial = 0; trial < 12; ++trial) {
    const int h = trial % 2 ? 16 : 23;
    const int w = trial % 2 ? 16 : 17;
    Tensor4 pred({1, 1, h, w}), gt({1, 1, h, w});
    for (std::int64_t j = 0; j < pred.count(); ++j) {
      pred.data()[j] = rng.next_uniform() < 0.08 ? 1.0f : 0.0f;
      gt.data()[j] = rng.next_uniform() < 0.08 ? 1.0f : 0.0f;
    }
    for (int margin : {0, 1, 2, 3}) {
      const Confusion fast = tolerant_confusion(pred, gt, margin);
      const BruteCounts slow = brute_confusion(pred, gt, margin);
      ACCEPT(fast.tp == slow.tp && fast.fp == slow.fp && fast.fn == slow.fn,
             "tolerant counts diverge from the all-pairs scan at margin " +
                 std::to_string(margin));
    }
  }
  return {true, ""};
}

// ---- criterion 6: scheduler and optimizer hand-derivations ----------------

Outcome run_optimizer_contracts() {
  TrainConfig cfg;  // lr 1e-3, patience 10, factor 0.95, floor 1e-6
  PlateauState ps(cfg);
  ps.step(1.0, cfg);
  for (int i = 0; i < 10; ++i) {
    ps.step(1.0, cfg);
    ACCEPT(ps.lr == 0.001f,
           "rate decayed early, after " + std::to_string(i + 1) +
               " stagnant epochs");
  }
  ps.step(1.0, cfg);  // 11th stagnant epoch crosses the patience
  ACCEPT(ps.lr == 0.001f * 0.95f,
         "rate after the patience window is " + num(double(ps.lr)));

  TrainConfig low = cfg;
  low.learning_rate = 1.02e-6f;
  PlateauState floor_ps(low);
  floor_ps.step(1.0, low);
  for (int i = 0; i < 23; ++i) floor_ps.step(1.0, low);
  ACCEPT(floor_ps.lr == 1e-6f,
         "decay must clamp at the floor, got " + num(double(floor_ps.lr)));

  Tensor4 theta({1, 1, 1, 1}), grad({1, 1, 1, 1}), m({1, 1, 1, 1}),
      v({1, 1, 1, 1});
  grad.data()[0] = 1.0f;
  adam_update(theta, grad, m, v, 1, 0.001f);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double mi = (1.0 - b1) * 1.0;
  const double vi = (1.0 - b2) * 1.0;
  const double hand =
      -double(0.001f) * (mi / (1.0 - std::pow(b1, 1.0))) /
      (std::sqrt(vi / (1.0 - std::pow(b2, 1.0))) + eps);
  ACCEPT(std::abs(double(theta.data()[0]) - float(hand)) <= 1e-12,
         "first step deviates from the scalar derivation by " +
             num(std::abs(double(theta.data()[0]) - float(hand))));
  ACCEPT(std::abs(double(theta.data()[0]) + double(0.001f)) <= 1e-9,
         "first unit-gradient step must be about -lr, got " +
             num(double(theta.data()[0])));
  return {true, ""};
}

// ---- criterion 7: rate-ablation harness and the four variants -------------

Outcome run_ablation_harness() {
  std::map<std::string, std::set<std::string>> variants;
  for (const auto& [label, mdm, hf] :
       std::vector<std::tuple<std::string, bool, bool>>{
           {"plain", false, false},
           {"sides", false, true},
           {"dilated", true, false},
           {"full", true, true}}) {
    NetworkConfig c;
    c.base_channels = 4;
    c.with_mdm = mdm;
    c.with_hf = hf;
    std::set<std::string> names;
    for (const ParamSpec& s : Network::expected_parameters(c))
      names.insert(s.name);
    Network built(c);
    std::set<std::string> actual(built.param_names().begin(),
                                 built.param_names().end());
    ACCEPT(actual == names, "constructed names diverge for " + label);
    const bool has_mdm = names.count("mdm.project.weight") > 0;
    const bool has_bottleneck = names.count("bottleneck.conv1.weight") > 0;
    const bool has_fuse = names.count("fuse.weight") > 0;
    const bool has_side1 = names.count("side1.weight") > 0;
    ACCEPT(has_mdm == mdm && has_bottleneck == !mdm,
           "1/8-scale block wrong for " + label);
    ACCEPT(has_fuse == hf && has_side1 == hf,
           "side-output head wrong for " + label);
    ACCEPT(names.count("side5.weight") == 1,
           "full-resolution tap missing for " + label);
    variants[label] = names;
  }
  for (auto a = variants.begin(); a != variants.end(); ++a)
    for (auto b = std::next(a); b != variants.end(); ++b)
      ACCEPT(a->second != b->second,
             "parameter sets must differ: " + a->first + " vs " + b->first);

  TempDir dir;
  const fs::path root = dir.path / "ds";
  write_stripe_pair(root, "p", 8, 24, true);
  write_stripe_pair(root, "q", 32, 48, true);
  write_stripe_pair(root, "r", 16, 32, false);
  write_stripe_pair(root, "s", 56, 72, false);

  uhdn_config* cfg = uhdn_config_create();
  uhdn_config_set(cfg, "base_channels", "4");
  uhdn_config_set(cfg, "batch_size", "2");
  uhdn_config_set(cfg, "seed", "5");
  const char* csv = nullptr;
  const uhdn_status s = uhdn_ablate(cfg, root.string().c_str(),
                                    "1,2,3,4|1,2,4,8|2,4,8,16", 2, &csv);
  const std::string table = csv ? csv : "";
  uhdn_config_destroy(cfg);
  ACCEPT(s == UHDN_OK, std::string("ablation failed: ") + uhdn_last_error());

  std::istringstream in(table);
  std::string line;
  ACCEPT(std::getline(in, line) && line == "rates,precision,recall,f1",
         "missing or wrong CSV header");
  const std::vector<std::string> groups{"\"1,2,3,4\"", "\"1,2,4,8\"",
                                        "\"2,4,8,16\""};
  for (const std::string& group : groups) {
    ACCEPT(std::getline(in, line), "missing CSV row for " + group);
    ACCEPT(line.rfind(group, 0) == 0, "row out of order: " + line);
    std::istringstream cells(line.substr(group.size() + 1));
    std::string cell;
    int n = 0;
    while (std::getline(cells, cell, ',')) {
      ++n;
      const double v = std::stod(cell);
      ACCEPT(v >= 0.0 && v <= 1.0,
             "metric out of range in row " + group + ": " + cell);
    }
    ACCEPT(n == 3, "row must carry precision, recall, and F1: " + line);
  }
  ACCEPT(!std::getline(in, line) || line.empty(), "trailing rows in the CSV");
  return {true, ""};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;  // 0 = no cap
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient oracle", 60.0, run_gradient_oracle},
      {"shape coverage", 30.0, run_shape_coverage},
      {"dilation invariants", 0.0, run_dilation_invariants},
      {"overfit smoke", 900.0, run_overfit_smoke},
      {"metrics oracle", 120.0, run_metrics_oracle},
      {"optimizer contracts", 0.0, run_optimizer_contracts},
      {"ablation harness", 0.0, run_ablation_harness},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (out.pass && c.budget_s > 0.0 && secs >= c.budget_s)
      out = {false, "over the " + num(c.budget_s) + " s budget"};
    failures += out.pass ? 0 : 1;
    std::printf("%s: %s (%.1f s)%s%s\n", out.pass ? "PASS" : "FAIL", c.name,
                secs, out.detail.empty() ? "" : " - ", out.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
