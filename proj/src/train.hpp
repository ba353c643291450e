#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "net.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace uhdn {

struct TrainConfig {
  float learning_rate = 0.001f;
  float min_learning_rate = 1e-6f;
  int patience = 10;
  float factor = 0.95f;
  int batch_size = 4;
  int max_epochs = 60;
  std::array<float, 5> side_weights{1.0f, 1.0f, 1.0f, 1.0f, 1.0f};
  // auto_balance: per batch, the crack term is weighted by the non-crack pixel
  // fraction and vice versa, so the rare class dominates the loss.
  bool auto_balance = true;
  float beta = 1.0f;   // crack-term weight when auto_balance is off
  float gamma = 1.0f;  // non-crack-term weight when auto_balance is off
  float epsilon_clamp = 1e-7f;
  std::uint64_t seed = 0;

  void validate() const;
};

// beta = non-crack fraction, gamma = crack fraction of the batch target
std::pair<float, float> balance_weights(const Tensor4& target);

// Deeply supervised objective: side_weights[m] * bce(side_m) summed over the
// bundle's sides plus bce(fused) at weight 1. A single-side bundle (no
// hierarchical head) pairs with the last side weight.
NodeRef total_loss_on_tape(Tape& tape, const Network::TapedBundle& bundle,
                           const Tensor4* target, const TrainConfig& cfg);

// One tensor's update at (already incremented) step t. m and v must be
// zero-initialized to the parameter shape before the first call.
void adam_update(Tensor4& theta, const Tensor4& grad, Tensor4& m, Tensor4& v,
                 std::int64_t t, float lr);

class AdamState {
 public:
  // Applies one optimization step over named gradients; missing entries in
  // grads are treated as zero (their moments still decay).
  void step(Network& net, const std::map<std::string, Tensor4>& grads, float lr);
  std::int64_t steps() const { return t_; }

 private:
  std::map<std::string, std::pair<Tensor4, Tensor4>> mv_;
  std::int64_t t_ = 0;
};

struct PlateauState {
  float lr = 0.0f;
  double best = 0.0;
  int stagnant = 0;
  bool seen_any = false;

  explicit PlateauState(const TrainConfig& cfg) : lr(cfg.learning_rate) {}
  // Strict improvement resets the counter; once the counter passes patience
  // the rate decays by factor, floored at min_learning_rate.
  void step(double epoch_loss, const TrainConfig& cfg);
};

struct TrainSample {
  Tensor4 image;   // (1, c, h, w)
  Tensor4 target;  // (1, 1, h, w) of {0,1}
  std::string id;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  float lr = 0.0f;
};

// Return false to stop after the current epoch.
using EpochCallback = std::function<bool(const EpochLog&)>;

struct TrainResult {
  std::vector<EpochLog> log;
};

// Shuffled mini-batch epochs (batches group equal-sized consecutive samples);
// per batch: forward, total loss, backward, one Adam step; per epoch: plateau
// update on the mean sample loss.
TrainResult train(Network& net, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, const EpochCallback& callback = {});

std::string log_csv(const std::vector<EpochLog>& log);

}  // namespace uhdn
