#include "uhdn.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dataio.hpp"
#include "error.hpp"
#include "gradcheck.hpp"
#include "metrics.hpp"
#include "net.hpp"
#include "runconfig.hpp"
#include "train.hpp"

namespace fs = std::filesystem;

struct uhdn_config {
  uhdn::RunConfig rc;
  std::string dump_cache;
};

struct uhdn_metrics {
  uhdn::MetricsReport report;
  std::string json;
  std::string csv;
};

namespace {

thread_local std::string t_error;
thread_local std::string t_text;  // gradcheck / ablate output storage

uhdn_status status_of(uhdn::ErrorCode code) {
  switch (code) {
    case uhdn::ErrorCode::usage:
      return UHDN_ERR_USAGE;
    case uhdn::ErrorCode::mismatch:
      return UHDN_ERR_MISMATCH;
    case uhdn::ErrorCode::numeric:
      return UHDN_ERR_NUMERIC;
    default:
      return UHDN_ERROR;
  }
}

template <typename F>
uhdn_status guarded(F&& body) {
  try {
    body();
    return UHDN_OK;
  } catch (const uhdn::Error& e) {
    t_error = e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    t_error = e.what();
    return UHDN_ERROR;
  } catch (...) {
    t_error = "unknown failure";
    return UHDN_ERROR;
  }
}

uhdn::RunConfig finalized(const uhdn_config* cfg) {
  if (!cfg) uhdn::fail(uhdn::ErrorCode::usage, "null config handle");
  uhdn::RunConfig rc = cfg->rc;
  rc.finalize();
  return rc;
}

// explicit argument beats the config key; both empty is an error
std::string resolve_path(const char* arg, const std::string& from_config,
                         const char* what) {
  std::string v = (arg && *arg) ? std::string(arg) : from_config;
  if (v.empty())
    uhdn::fail(uhdn::ErrorCode::usage, std::string("no ") + what + " given");
  return v;
}

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return e;
}

std::map<std::string, fs::path> files_by_stem(const std::string& dir,
                                              bool probability_maps) {
  if (!fs::is_directory(dir))
    uhdn::fail(uhdn::ErrorCode::usage, "not a directory: " + dir);
  std::map<std::string, fs::path> out;
  for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = lower_ext(e.path());
    const bool hit = probability_maps ? ext == ".pfm"
                                      : uhdn::image_extensions().count(ext) > 0;
    if (hit) out[e.path().stem().string()] = e.path();
  }
  return out;
}

std::vector<uhdn::TrainSample> pick_samples(
    const std::vector<uhdn::Sample>& samples,
    const std::vector<std::string>& ids) {
  std::map<std::string, const uhdn::Sample*> by_id;
  for (const uhdn::Sample& s : samples) by_id[s.id] = &s;
  std::vector<uhdn::TrainSample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids)
    out.push_back({by_id.at(id)->image, by_id.at(id)->mask, id});
  return out;
}

uhdn::Tensor4 binarize(const uhdn::Tensor4& prob, double threshold) {
  uhdn::Tensor4 out(prob.shape());
  for (std::int64_t i = 0; i < prob.count(); ++i)
    out.data()[i] = double(prob.data()[i]) >= threshold ? 1.0f : 0.0f;
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) uhdn::fail(uhdn::ErrorCode::usage, "cannot write: " + path);
  out << text;
  if (!out) uhdn::fail(uhdn::ErrorCode::usage, "short write: " + path);
}

std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::vector<int>> parse_rate_groups(const std::string& text) {
  std::vector<std::vector<int>> groups;
  std::string group;
  std::stringstream ss(text);
  while (std::getline(ss, group, '|')) {
    std::vector<int> rates;
    std::string item;
    std::stringstream gs(group);
    while (std::getline(gs, item, ',')) {
      try {
        std::size_t used = 0;
        const int r = std::stoi(item, &used);
        if (used != item.size() || r < 1) throw std::invalid_argument(item);
        rates.push_back(r);
      } catch (const std::logic_error&) {
        uhdn::fail(uhdn::ErrorCode::usage,
                   "malformed rate list '" + text + "': bad entry '" + item +
                       "'");
      }
    }
    if (rates.empty())
      uhdn::fail(uhdn::ErrorCode::usage,
                 "malformed rate list '" + text + "': empty group");
    groups.push_back(rates);
  }
  if (groups.empty())
    uhdn::fail(uhdn::ErrorCode::usage, "malformed rate list '" + text + "'");
  return groups;
}

}  // namespace

extern "C" {

const char* uhdn_last_error(void) { return t_error.c_str(); }

const char* uhdn_version(void) { return "1.0.0"; }

uhdn_config* uhdn_config_create(void) { return new uhdn_config(); }

void uhdn_config_destroy(uhdn_config* cfg) { delete cfg; }

uhdn_status uhdn_config_load_file(uhdn_config* cfg, const char* path) {
  return guarded([&] {
    if (!cfg) uhdn::fail(uhdn::ErrorCode::usage, "null config handle");
    if (!path) uhdn::fail(uhdn::ErrorCode::usage, "null config path");
    cfg->rc.load_file(path);
  });
}

uhdn_status uhdn_config_set(uhdn_config* cfg, const char* key,
                            const char* value) {
  return guarded([&] {
    if (!cfg) uhdn::fail(uhdn::ErrorCode::usage, "null config handle");
    if (!key || !value)
      uhdn::fail(uhdn::ErrorCode::usage, "null config key or value");
    cfg->rc.set(key, value);
  });
}

const char* uhdn_config_dump(uhdn_config* cfg) {
  const uhdn_status s = guarded([&] {
    cfg->dump_cache = finalized(cfg).dump();
  });
  return s == UHDN_OK ? cfg->dump_cache.c_str() : nullptr;
}

uhdn_status uhdn_train(uhdn_config* cfg, const char* dataset_root,
                       const char* checkpoint_out, const char* log_csv_out,
                       uhdn_epoch_callback callback, void* user) {
  return guarded([&] {
    const uhdn::RunConfig rc = finalized(cfg);
    const std::string root =
        resolve_path(dataset_root, rc.dataset, "dataset directory");
    const std::string ckpt =
        resolve_path(checkpoint_out, rc.out, "checkpoint output path");
    const std::string log_path =
        (log_csv_out && *log_csv_out) ? log_csv_out : ckpt + ".log.csv";

    const std::vector<uhdn::Sample> samples =
        uhdn::load_dataset(root, rc.layout, rc.net.in_channels);
    if (samples.empty())
      uhdn::fail(uhdn::ErrorCode::usage, "no training data in " + root);
    const uhdn::DatasetSplit sp = uhdn::split(samples, rc.layout, rc.train.seed);
    const std::vector<uhdn::TrainSample> data = pick_samples(samples, sp.train);

    uhdn::Network net(rc.net);
    uhdn::EpochCallback cb;
    if (callback)
      cb = [&](const uhdn::EpochLog& e) {
        return callback(e.epoch, e.mean_loss, double(e.lr), user) != 0;
      };
    const uhdn::TrainResult result = uhdn::train(net, data, rc.train, cb);

    uhdn::save_checkpoint(net, ckpt);
    write_text_file(log_path, uhdn::log_csv(result.log));
  });
}

uhdn_status uhdn_predict(uhdn_config* cfg, const char* checkpoint,
                         const char* input_path, const char* out_dir,
                         int save_probability_maps) {
  return guarded([&] {
    const uhdn::RunConfig rc = finalized(cfg);
    if (!checkpoint || !*checkpoint)
      uhdn::fail(uhdn::ErrorCode::usage, "no checkpoint given");
    const std::string out = resolve_path(out_dir, rc.out, "output directory");
    if (!input_path || !*input_path)
      uhdn::fail(uhdn::ErrorCode::usage, "no input path given");

    const uhdn::Network net = uhdn::load_network(checkpoint);

    std::vector<fs::path> inputs;
    if (fs::is_directory(input_path)) {
      for (const auto& [stem, path] : files_by_stem(input_path, false))
        inputs.push_back(path);
    } else if (fs::is_regular_file(input_path)) {
      inputs.push_back(input_path);
    } else {
      uhdn::fail(uhdn::ErrorCode::usage,
                 std::string("input path not found: ") + input_path);
    }
    if (inputs.empty())
      uhdn::fail(uhdn::ErrorCode::usage,
                 std::string("no images in ") + input_path);

    fs::create_directories(out);
    for (const fs::path& p : inputs) {
      const uhdn::Tensor4 raw =
          uhdn::load_image(p.string(), net.config().in_channels);
      const uhdn::PaddedTensor padded = uhdn::pad_to_multiple(raw);
      const uhdn::Tensor4 prob = net.predict_probability(padded.tensor);
      const std::string stem = p.stem().string();
      uhdn::save_mask_png(binarize(prob, rc.threshold), padded.pad,
                          (fs::path(out) / (stem + ".png")).string());
      if (save_probability_maps)
        uhdn::save_probmap(prob, padded.pad,
                           (fs::path(out) / (stem + ".pfm")).string());
    }
  });
}

uhdn_status uhdn_evaluate_dirs(uhdn_config* cfg, const char* pred_dir,
                               const char* gt_dir, uhdn_metrics** out) {
  if (out) *out = nullptr;
  return guarded([&] {
    const uhdn::RunConfig rc = finalized(cfg);
    if (!pred_dir || !gt_dir || !out)
      uhdn::fail(uhdn::ErrorCode::usage,
                 "prediction dir, ground-truth dir, and output handle are "
                 "all required");

    const std::map<std::string, fs::path> preds = files_by_stem(pred_dir, true);
    const std::map<std::string, fs::path> gts = files_by_stem(gt_dir, false);
    if (preds.empty())
      uhdn::fail(uhdn::ErrorCode::usage,
                 std::string("no .pfm probability maps in ") + pred_dir);

    std::string missing_pred, missing_gt;
    for (const auto& [stem, path] : gts)
      if (!preds.count(stem)) missing_pred += " " + stem;
    for (const auto& [stem, path] : preds)
      if (!gts.count(stem)) missing_gt += " " + stem;
    if (!missing_pred.empty() || !missing_gt.empty())
      uhdn::fail(uhdn::ErrorCode::usage,
                 "prediction/ground-truth stems misaligned; missing "
                 "predictions:" +
                     (missing_pred.empty() ? " none" : missing_pred) +
                     "; missing ground truths:" +
                     (missing_gt.empty() ? " none" : missing_gt));

    std::vector<uhdn::Tensor4> probs, masks;
    std::vector<std::string> ids;
    for (const auto& [stem, path] : preds) {
      probs.push_back(uhdn::load_probmap(path.string()));
      masks.push_back(uhdn::load_mask(gts.at(stem).string()));
      ids.push_back(stem);
    }

    auto* m = new uhdn_metrics();
    m->report = uhdn::evaluate(probs, masks, ids, rc.margin, rc.threshold);
    m->json = uhdn::report_json(m->report);
    m->csv = uhdn::report_csv_header() + "\n" + uhdn::report_csv_row(m->report) +
             "\n";
    *out = m;
  });
}

const char* uhdn_metrics_json(const uhdn_metrics* m) {
  return m ? m->json.c_str() : nullptr;
}

const char* uhdn_metrics_csv(const uhdn_metrics* m) {
  return m ? m->csv.c_str() : nullptr;
}

double uhdn_metrics_mean_precision(const uhdn_metrics* m) {
  return m ? m->report.mean_precision : std::numeric_limits<double>::quiet_NaN();
}

double uhdn_metrics_mean_recall(const uhdn_metrics* m) {
  return m ? m->report.mean_recall : std::numeric_limits<double>::quiet_NaN();
}

double uhdn_metrics_mean_f1(const uhdn_metrics* m) {
  return m ? m->report.mean_f1 : std::numeric_limits<double>::quiet_NaN();
}

double uhdn_metrics_ods(const uhdn_metrics* m) {
  return m ? m->report.ods : std::numeric_limits<double>::quiet_NaN();
}

double uhdn_metrics_ois(const uhdn_metrics* m) {
  return m ? m->report.ois : std::numeric_limits<double>::quiet_NaN();
}

void uhdn_metrics_destroy(uhdn_metrics* m) { delete m; }

uhdn_status uhdn_gradcheck(const char* op, int trials, uint64_t seed,
                           const char** report_out) {
  if (report_out) *report_out = nullptr;
  bool all_pass = false;
  const uhdn_status s = guarded([&] {
    const std::string which = (op && *op) ? op : "all";
    std::vector<uhdn::GradCheckResult> results;
    if (which == "all")
      results = uhdn::gradcheck_all(trials, seed);
    else
      results = {uhdn::gradcheck_op(which, trials, seed)};
    t_text = uhdn::gradcheck_report(results);
    if (report_out) *report_out = t_text.c_str();
    all_pass = true;
    for (const uhdn::GradCheckResult& r : results) all_pass &= r.pass;
    if (!all_pass) t_error = "gradient check failed; see report";
  });
  if (s != UHDN_OK) return s;
  return all_pass ? UHDN_OK : UHDN_ERR_NUMERIC;
}

uhdn_status uhdn_ablate(uhdn_config* cfg, const char* dataset_root,
                        const char* rate_groups, int epochs,
                        const char** csv_out) {
  if (csv_out) *csv_out = nullptr;
  return guarded([&] {
    uhdn::RunConfig rc = finalized(cfg);
    if (!rate_groups || !*rate_groups)
      uhdn::fail(uhdn::ErrorCode::usage, "no dilation-rate groups given");
    const std::vector<std::vector<int>> groups = parse_rate_groups(rate_groups);
    const std::string root =
        resolve_path(dataset_root, rc.dataset, "dataset directory");
    if (epochs > 0) rc.train.max_epochs = epochs;

    const std::vector<uhdn::Sample> samples =
        uhdn::load_dataset(root, rc.layout, rc.net.in_channels);
    if (samples.empty())
      uhdn::fail(uhdn::ErrorCode::usage, "no data in " + root);
    const uhdn::DatasetSplit sp = uhdn::split(samples, rc.layout, rc.train.seed);
    if (sp.test.empty())
      uhdn::fail(uhdn::ErrorCode::usage,
                 "dataset too small to hold out a test split");
    const std::vector<uhdn::TrainSample> data = pick_samples(samples, sp.train);
    std::map<std::string, const uhdn::Sample*> by_id;
    for (const uhdn::Sample& s : samples) by_id[s.id] = &s;

    std::string csv = "rates,precision,recall,f1\n";
    for (const std::vector<int>& rates : groups) {
      uhdn::NetworkConfig nc = rc.net;
      nc.dilation_rates = rates;
      nc.validate();
      uhdn::Network net(nc);
      uhdn::train(net, data, rc.train);

      std::vector<uhdn::Tensor4> probs, masks;
      std::vector<std::string> ids;
      for (const std::string& id : sp.test) {
        const uhdn::Sample& s = *by_id.at(id);
        probs.push_back(
            uhdn::crop_pad(net.predict_probability(s.image), s.pad));
        masks.push_back(uhdn::crop_pad(s.mask, s.pad));
        ids.push_back(id);
      }
      const uhdn::MetricsReport report =
          uhdn::evaluate(probs, masks, ids, rc.margin, rc.threshold);

      std::string joined;
      for (std::size_t i = 0; i < rates.size(); ++i)
        joined += (i ? "," : "") + std::to_string(rates[i]);
      csv += "\"" + joined + "\"," + fmt_metric(report.mean_precision) + "," +
             fmt_metric(report.mean_recall) + "," +
             fmt_metric(report.mean_f1) + "\n";
    }
    t_text = csv;
    if (csv_out) *csv_out = t_text.c_str();
  });
}

}  // extern "C"
