#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uhdn.h"

namespace {

// RAII over the C handle so every exit path releases it
struct ConfigHandle {
  uhdn_config* p = uhdn_config_create();
  ~ConfigHandle() { uhdn_config_destroy(p); }
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
  ConfigHandle() = default;
};

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_file,
                  "key=value config file ('#' comments)");
  cmd->add_option("--set", c.sets,
                  "override one config key (key=value, repeatable; wins over "
                  "the file)");
}

int report_failure(uhdn_status s) {
  std::fprintf(stderr, "error: %s\n", uhdn_last_error());
  return int(s);
}

// file first, then overrides in command-line order
int apply_common(uhdn_config* cfg, const CommonOpts& c) {
  if (!c.config_file.empty()) {
    const uhdn_status s = uhdn_config_load_file(cfg, c.config_file.c_str());
    if (s != UHDN_OK) return report_failure(s);
  }
  for (const std::string& kv : c.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return int(UHDN_ERR_USAGE);
    }
    const uhdn_status s = uhdn_config_set(cfg, kv.substr(0, eq).c_str(),
                                          kv.substr(eq + 1).c_str());
    if (s != UHDN_OK) return report_failure(s);
  }
  return 0;
}

int set_key(uhdn_config* cfg, const char* key, const std::string& value) {
  const uhdn_status s = uhdn_config_set(cfg, key, value.c_str());
  return s == UHDN_OK ? 0 : report_failure(s);
}

std::string real_repr(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct LastEpoch {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

int print_epoch(int epoch, double mean_loss, double lr, void* user) {
  auto* last = static_cast<LastEpoch*>(user);
  *last = {epoch, mean_loss, lr};
  std::printf("epoch %4d  loss %.6f  lr %g\n", epoch, mean_loss, lr);
  std::fflush(stdout);
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uhdn: pavement-crack segmentation (train / predict / eval)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", uhdn_version());

  CommonOpts train_c, predict_c, eval_c, ablate_c, echo_c;
  std::string train_dataset, train_layout, train_out;
  CLI::App* cmd_train = app.add_subcommand("train", "train on a dataset split");
  add_common(cmd_train, train_c);
  cmd_train->add_option("--dataset", train_dataset,
                        "dataset root (image/ + groundtruth/)");
  cmd_train->add_option("--layout", train_layout,
                        "dataset layout: cfd, aiglern, or generic");
  cmd_train->add_option("--out", train_out, "checkpoint output path");

  std::string pr_checkpoint, pr_input, pr_out;
  double pr_threshold = 0.5;
  bool pr_save_prob = false;
  CLI::App* cmd_predict =
      app.add_subcommand("predict", "write crack masks for images");
  add_common(cmd_predict, predict_c);
  cmd_predict->add_option("--checkpoint", pr_checkpoint, "trained checkpoint")
      ->required();
  cmd_predict->add_option("--input", pr_input, "one image or a directory")
      ->required();
  cmd_predict->add_option("--out", pr_out, "output directory");
  cmd_predict->add_option("--threshold", pr_threshold,
                          "probability cutoff for the binary masks");
  cmd_predict->add_flag("--save-prob", pr_save_prob,
                        "also write .pfm probability maps");

  std::string ev_pred, ev_gt;
  int ev_margin = 2;
  double ev_threshold = 0.5;
  CLI::App* cmd_eval =
      app.add_subcommand("eval", "score probability maps against ground truth");
  add_common(cmd_eval, eval_c);
  cmd_eval->add_option("--pred", ev_pred, "directory of .pfm maps")->required();
  cmd_eval->add_option("--gt", ev_gt, "directory of ground-truth masks")
      ->required();
  cmd_eval->add_option("--margin", ev_margin,
                       "tolerance margin in pixels for matching");
  cmd_eval->add_option("--threshold", ev_threshold,
                       "fixed-threshold operating point");

  std::string gc_ops = "all";
  int gc_trials = 5;
  std::uint64_t gc_seed = 0;
  CLI::App* cmd_gradcheck = app.add_subcommand(
      "gradcheck", "compare gradients against finite differences");
  cmd_gradcheck->add_option("--ops", gc_ops, "operation name or 'all'");
  cmd_gradcheck->add_option("--trials", gc_trials, "random instances per op");
  cmd_gradcheck->add_option("--seed", gc_seed, "random seed");

  std::string ab_dataset, ab_rates, ab_out;
  int ab_epochs = 0;
  CLI::App* cmd_ablate = app.add_subcommand(
      "ablate", "train and score one model per dilation-rate group");
  add_common(cmd_ablate, ablate_c);
  cmd_ablate->add_option("--dataset", ab_dataset,
                         "dataset root (image/ + groundtruth/)");
  cmd_ablate
      ->add_option("--rates", ab_rates,
                   "'|'-separated groups, e.g. \"1,2,3,4|1,2,4,8|2,4,8,16\"")
      ->required();
  cmd_ablate->add_option("--epochs", ab_epochs,
                         "epoch budget per group (0 = config max_epochs)");
  cmd_ablate->add_option("--out", ab_out, "also write the CSV to this file");

  CLI::App* cmd_echo =
      app.add_subcommand("echo", "print the effective configuration");
  add_common(cmd_echo, echo_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return int(UHDN_ERR_USAGE);
  }

  if (*cmd_train) {
    ConfigHandle cfg;
    if (int rc = apply_common(cfg.p, train_c)) return rc;
    if (!train_layout.empty())
      if (int rc = set_key(cfg.p, "layout", train_layout)) return rc;
    LastEpoch last;
    const uhdn_status s = uhdn_train(
        cfg.p, train_dataset.empty() ? nullptr : train_dataset.c_str(),
        train_out.empty() ? nullptr : train_out.c_str(), nullptr, print_epoch,
        &last);
    if (s != UHDN_OK) return report_failure(s);
    std::printf("done: %d epochs, final loss %.6f, final lr %g\n", last.epoch,
                last.loss, last.lr);
    return 0;
  }

  if (*cmd_predict) {
    ConfigHandle cfg;
    if (int rc = apply_common(cfg.p, predict_c)) return rc;
    if (cmd_predict->count("--threshold"))
      if (int rc = set_key(cfg.p, "threshold", real_repr(pr_threshold)))
        return rc;
    const uhdn_status s =
        uhdn_predict(cfg.p, pr_checkpoint.c_str(), pr_input.c_str(),
                     pr_out.empty() ? nullptr : pr_out.c_str(),
                     pr_save_prob ? 1 : 0);
    return s == UHDN_OK ? 0 : report_failure(s);
  }

  if (*cmd_eval) {
    ConfigHandle cfg;
    if (int rc = apply_common(cfg.p, eval_c)) return rc;
    if (cmd_eval->count("--margin"))
      if (int rc = set_key(cfg.p, "margin", std::to_string(ev_margin)))
        return rc;
    if (cmd_eval->count("--threshold"))
      if (int rc = set_key(cfg.p, "threshold", real_repr(ev_threshold)))
        return rc;
    uhdn_metrics* m = nullptr;
    const uhdn_status s =
        uhdn_evaluate_dirs(cfg.p, ev_pred.c_str(), ev_gt.c_str(), &m);
    if (s != UHDN_OK) return report_failure(s);
    std::printf("%s\n", uhdn_metrics_json(m));
    uhdn_metrics_destroy(m);
    return 0;
  }

  if (*cmd_gradcheck) {
    const char* report = nullptr;
    const uhdn_status s =
        uhdn_gradcheck(gc_ops.c_str(), gc_trials, gc_seed, &report);
    if (report) std::printf("%s", report);
    if (s == UHDN_OK) return 0;
    if (!report) return report_failure(s);
    std::fprintf(stderr, "error: %s\n", uhdn_last_error());
    return int(s);
  }

  if (*cmd_ablate) {
    ConfigHandle cfg;
    if (int rc = apply_common(cfg.p, ablate_c)) return rc;
    const char* csv = nullptr;
    const uhdn_status s = uhdn_ablate(
        cfg.p, ab_dataset.empty() ? nullptr : ab_dataset.c_str(),
        ab_rates.c_str(), ab_epochs, &csv);
    if (s != UHDN_OK) return report_failure(s);
    std::printf("%s", csv);
    if (!ab_out.empty()) {
      std::ofstream out(ab_out, std::ios::binary);
      out << csv;
      if (!out) {
        std::fprintf(stderr, "error: cannot write %s\n", ab_out.c_str());
        return int(UHDN_ERR_USAGE);
      }
    }
    return 0;
  }

  if (*cmd_echo) {
    ConfigHandle cfg;
    if (int rc = apply_common(cfg.p, echo_c)) return rc;
    const char* dump = uhdn_config_dump(cfg.p);
    if (!dump) return report_failure(UHDN_ERR_USAGE);
    std::printf("%s", dump);
    return 0;
  }

  return int(UHDN_ERR_USAGE);
}
