#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

#include "error.hpp"
#include "rng.hpp"

namespace uhdn {

void TrainConfig::validate() const {
  if (!(factor > 0.0f && factor < 1.0f))
    fail(ErrorCode::usage,
         "train config: factor must lie in (0, 1), got " + std::to_string(factor));
  if (patience < 1)
    fail(ErrorCode::usage,
         "train config: patience must be >= 1, got " + std::to_string(patience));
  if (min_learning_rate > learning_rate)
    fail(ErrorCode::usage, "train config: min learning rate " +
                               std::to_string(min_learning_rate) +
                               " exceeds the initial rate " +
                               std::to_string(learning_rate));
  if (batch_size < 1)
    fail(ErrorCode::usage, "train config: batch_size must be >= 1");
  if (max_epochs < 0)
    fail(ErrorCode::usage, "train config: max_epochs must be >= 0");
  for (float a : side_weights)
    if (a < 0.0f || !std::isfinite(a))
      fail(ErrorCode::usage, "train config: side weights must be non-negative");
  if (!auto_balance && (beta < 0.0f || gamma < 0.0f))
    fail(ErrorCode::usage, "train config: class weights must be non-negative");
}

std::pair<float, float> balance_weights(const Tensor4& target) {
  std::int64_t crack = 0;
  for (float v : target)
    if (v != 0.0f) ++crack;
  double n = (double)target.count();
  return {(float)((n - crack) / n), (float)(crack / n)};
}

NodeRef total_loss_on_tape(Tape& tape, const Network::TapedBundle& bundle,
                           const Tensor4* target, const TrainConfig& cfg) {
  float beta = cfg.beta, gamma = cfg.gamma;
  if (cfg.auto_balance) std::tie(beta, gamma) = balance_weights(*target);

  std::vector<NodeRef> terms;
  std::vector<float> weights;
  std::size_t m = bundle.sides.size();
  for (std::size_t i = 0; i < m; ++i) {
    terms.push_back(tape.weighted_bce(bundle.sides[i], target, beta, gamma,
                                      cfg.epsilon_clamp));
    // a lone side is the final-scale one and takes the last weight
    weights.push_back(m == 1 ? cfg.side_weights.back() : cfg.side_weights[i]);
  }
  terms.push_back(
      tape.weighted_bce(bundle.fused, target, beta, gamma, cfg.epsilon_clamp));
  weights.push_back(1.0f);
  return tape.weighted_sum(terms, weights);
}

void adam_update(Tensor4& theta, const Tensor4& grad, Tensor4& m, Tensor4& v,
                 std::int64_t t, float lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, (double)t);
  const double c2 = 1.0 - std::pow(b2, (double)t);
  for (std::int64_t i = 0; i < theta.count(); ++i) {
    double g = grad.empty() ? 0.0 : (double)grad[i];
    double mi = b1 * m[i] + (1.0 - b1) * g;
    double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = (float)mi;
    v[i] = (float)vi;
    theta[i] -= (float)((double)lr * (mi / c1) / (std::sqrt(vi / c2) + eps));
  }
}

void AdamState::step(Network& net, const std::map<std::string, Tensor4>& grads,
                     float lr) {
  ++t_;
  static const Tensor4 kNoGrad;
  for (const std::string& name : net.param_names()) {
    Tensor4& p = net.param(name);
    auto [it, fresh] = mv_.try_emplace(name, Tensor4(p.shape()), Tensor4(p.shape()));
    auto git = grads.find(name);
    const Tensor4& g = git == grads.end() ? kNoGrad : git->second;
    if (!g.empty() && g.shape() != p.shape())
      fail(ErrorCode::mismatch, "adam: gradient shape " + g.shape().str() +
                                    " does not match parameter \"" + name +
                                    "\" " + p.shape().str());
    adam_update(p, g, it->second.first, it->second.second, t_, lr);
  }
}

void PlateauState::step(double epoch_loss, const TrainConfig& cfg) {
  if (!seen_any || epoch_loss < best) {
    best = epoch_loss;
    seen_any = true;
    stagnant = 0;
    return;
  }
  if (++stagnant > cfg.patience) {
    lr = std::max(lr * cfg.factor, cfg.min_learning_rate);
    stagnant = 0;
  }
}

namespace {

Tensor4 stack(const std::vector<TrainSample>& data,
              const std::vector<std::size_t>& idx, std::size_t lo,
              std::size_t hi, bool images) {
  const Shape4& s = (images ? data[idx[lo]].image : data[idx[lo]].target).shape();
  Tensor4 out({(std::int64_t)(hi - lo), s.c, s.h, s.w});
  std::int64_t per = s.c * s.h * s.w;
  for (std::size_t i = lo; i < hi; ++i) {
    const Tensor4& t = images ? data[idx[i]].image : data[idx[i]].target;
    std::memcpy(out.data() + (i - lo) * per, t.data(), sizeof(float) * per);
  }
  return out;
}

}  // namespace

TrainResult train(Network& net, const std::vector<TrainSample>& data,
                  const TrainConfig& cfg, const EpochCallback& callback) {
  cfg.validate();
  if (data.empty()) fail(ErrorCode::usage, "train: dataset is empty");
  for (const TrainSample& s : data) {
    const Shape4& i = s.image.shape();
    if (i.n != 1 || s.target.shape() != Shape4{1, 1, i.h, i.w})
      fail(ErrorCode::mismatch, "train: sample \"" + s.id + "\" pairs image " +
                                    i.str() + " with mask " +
                                    s.target.shape().str());
  }

  TrainResult result;
  AdamState adam;
  PlateauState plateau(cfg);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t lo = 0;
    while (lo < order.size()) {
      std::size_t hi = lo + 1;
      while (hi < order.size() && hi - lo < (std::size_t)cfg.batch_size &&
             data[order[hi]].image.shape() == data[order[lo]].image.shape())
        ++hi;
      Tensor4 images = stack(data, order, lo, hi, true);
      Tensor4 targets = stack(data, order, lo, hi, false);

      Tape tape;
      tape.set_release_memory(true);
      NodeRef in = tape.leaf(&images, false);
      Network::TapedBundle bundle = net.forward_on_tape(tape, in, true);
      NodeRef loss = total_loss_on_tape(tape, bundle, &targets, cfg);
      double batch_loss = tape.value(loss)[0];
      if (!std::isfinite(batch_loss))
        fail(ErrorCode::numeric,
             "train: loss diverged at epoch " + std::to_string(epoch));
      loss_sum += batch_loss * (double)(hi - lo);
      tape.backward(loss);
      std::map<std::string, Tensor4> grads;
      for (const auto& [name, ref] : bundle.params)
        grads.emplace(name, tape.grad(ref));
      adam.step(net, grads, plateau.lr);
      lo = hi;
    }
    double mean_loss = loss_sum / (double)data.size();
    plateau.step(mean_loss, cfg);
    EpochLog entry{epoch, mean_loss, plateau.lr};
    result.log.push_back(entry);
    if (callback && !callback(entry)) break;
  }
  return result;
}

std::string log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch,mean_loss,learning_rate\n";
  for (const EpochLog& e : log)
    os << e.epoch << "," << e.mean_loss << "," << e.lr << "\n";
  return os.str();
}

}  // namespace uhdn
