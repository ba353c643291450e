#ifndef UHDN_H
#define UHDN_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Crack segmentation library: a U-net-style encoder/decoder with a
 * multi-dilation block and hierarchical side outputs, plus training,
 * prediction, and tolerance-margin evaluation.  All functions are
 * synchronous; handles are not thread-safe, but distinct handles may be
 * used from distinct threads. */

/* Status values double as process exit codes. */
typedef enum uhdn_status {
  UHDN_OK = 0,
  UHDN_ERROR = 1,        /* unexpected internal failure */
  UHDN_ERR_USAGE = 2,    /* bad arguments or unreadable input */
  UHDN_ERR_MISMATCH = 3, /* data or checkpoint shape/format mismatch */
  UHDN_ERR_NUMERIC = 4   /* numerical check failed */
} uhdn_status;

/* Message for the most recent failing call on the calling thread.
 * Valid until that thread's next library call. */
const char* uhdn_last_error(void);

const char* uhdn_version(void);

/* ---- configuration -----------------------------------------------------
 * A config is a flat key=value store covering the network architecture,
 * training hyperparameters, evaluation knobs, and default paths.  Keys are
 * validated on assignment; the last write to a key wins.  The full schema
 * is printed by uhdn_config_dump on a fresh config. */

typedef struct uhdn_config uhdn_config;

uhdn_config* uhdn_config_create(void);
void uhdn_config_destroy(uhdn_config* cfg);

/* Flat key=value file; '#' starts a comment. */
uhdn_status uhdn_config_load_file(uhdn_config* cfg, const char* path);
uhdn_status uhdn_config_set(uhdn_config* cfg, const char* key,
                            const char* value);

/* Effective configuration (defaults filled in, validated), one key=value
 * per line.  Owned by cfg; valid until the next dump or destroy.
 * NULL on invalid configs. */
const char* uhdn_config_dump(uhdn_config* cfg);

/* ---- training ---------------------------------------------------------- */

/* Called after every epoch (1-based).  Return 0 to stop training after the
 * current epoch, nonzero to continue. */
typedef int (*uhdn_epoch_callback)(int epoch, double mean_loss,
                                   double learning_rate, void* user);

/* Trains on the train side of the dataset's seeded split and writes the
 * checkpoint plus a CSV epoch log (epoch,mean_loss,learning_rate).
 * dataset_root / checkpoint_out fall back to the config's `dataset` / `out`
 * keys when NULL or empty; log_csv_out defaults to "<checkpoint>.log.csv".
 * callback may be NULL.  Nothing is written if training fails. */
uhdn_status uhdn_train(uhdn_config* cfg, const char* dataset_root,
                       const char* checkpoint_out, const char* log_csv_out,
                       uhdn_epoch_callback callback, void* user);

/* ---- prediction -------------------------------------------------------- */

/* Runs a checkpoint over one image file or every image in a directory and
 * writes per-image binary masks "<stem>.png" (crack = white) into out_dir,
 * thresholding probabilities at the config's `threshold`.  When
 * save_probability_maps is nonzero, raw probabilities are also written as
 * "<stem>.pfm".  Outputs are cropped to each input's original size.
 * The network architecture comes from the checkpoint, not the config. */
uhdn_status uhdn_predict(uhdn_config* cfg, const char* checkpoint,
                         const char* input_path, const char* out_dir,
                         int save_probability_maps);

/* ---- evaluation -------------------------------------------------------- */

typedef struct uhdn_metrics uhdn_metrics;

/* Scores "<stem>.pfm" probability maps in pred_dir against same-stem mask
 * images in gt_dir with the config's tolerance `margin` and fixed-threshold
 * `threshold`.  Stems must align one-to-one; on success *out owns the
 * report. */
uhdn_status uhdn_evaluate_dirs(uhdn_config* cfg, const char* pred_dir,
                               const char* gt_dir, uhdn_metrics** out);

/* Full report (per-image and dataset precision/recall/F1, ODS, OIS) as a
 * JSON object, or as a one-row CSV with a header line.  Owned by the
 * metrics object. */
const char* uhdn_metrics_json(const uhdn_metrics* m);
const char* uhdn_metrics_csv(const uhdn_metrics* m);

/* Dataset means at the fixed threshold, and the two sweep scores.
 * NaN on a NULL handle. */
double uhdn_metrics_mean_precision(const uhdn_metrics* m);
double uhdn_metrics_mean_recall(const uhdn_metrics* m);
double uhdn_metrics_mean_f1(const uhdn_metrics* m);
double uhdn_metrics_ods(const uhdn_metrics* m);
double uhdn_metrics_ois(const uhdn_metrics* m);

void uhdn_metrics_destroy(uhdn_metrics* m);

/* ---- verification ------------------------------------------------------ */

/* Compares reverse-mode gradients against central finite differences on
 * random small instances.  op is one differentiated operation's name or
 * "all" (NULL means "all").  *report_out (optional) receives a per-op
 * summary table, valid until the calling thread's next library call.
 * Returns UHDN_ERR_NUMERIC if any op exceeds the error budget. */
uhdn_status uhdn_gradcheck(const char* op, int trials, uint64_t seed,
                           const char** report_out);

/* ---- ablation ---------------------------------------------------------- */

/* Trains one fresh model per '|'-separated dilation-rate group (e.g.
 * "1,2,3,4|1,2,4,8|2,4,8,16") with a shared seed and epoch budget, scores
 * each on the dataset's held-out test split, and hands back a CSV with
 * columns rates,precision,recall,f1.  epochs > 0 overrides the config's
 * max_epochs.  *csv_out is valid until the calling thread's next library
 * call. */
uhdn_status uhdn_ablate(uhdn_config* cfg, const char* dataset_root,
                        const char* rate_groups, int epochs,
                        const char** csv_out);

#ifdef __cplusplus
}
#endif

#endif /* UHDN_H */
