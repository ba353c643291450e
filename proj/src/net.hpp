#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tape.hpp"
#include "tensor.hpp"

namespace uhdn {

struct NetworkConfig {
  int in_channels = 3;
  int base_channels = 64;
  std::vector<int> dilation_rates = {2, 4, 8, 16};
  bool with_mdm = true;
  bool with_hf = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ParamSpec {
  std::string name;
  Shape4 shape;       // biases stored as (1, c, 1, 1)
  bool is_bias = false;
};

// Side logits plus the fused logit, all at input resolution.
struct SideBundle {
  std::vector<Tensor4> sides;
  Tensor4 fused;
};

class Network {
 public:
  explicit Network(const NetworkConfig& cfg);

  const NetworkConfig& config() const { return cfg_; }

  // Canonical parameter order: encoder, bottleneck, decoder, sides, fuse.
  // Initialization, checkpoints, and the optimizer all follow it.
  static std::vector<ParamSpec> expected_parameters(const NetworkConfig& cfg);

  const std::vector<std::string>& param_names() const { return names_; }
  Tensor4& param(const std::string& name);
  const Tensor4& param(const std::string& name) const;
  std::int64_t parameter_count() const;

  struct TapedBundle {
    std::vector<NodeRef> sides;
    NodeRef fused;
    std::vector<std::pair<std::string, NodeRef>> params;
  };
  // Builds the forward graph on the tape. params_need_grad=false for
  // inference-style passes.
  TapedBundle forward_on_tape(Tape& tape, NodeRef input,
                              bool params_need_grad) const;

  SideBundle forward(const Tensor4& input) const;
  // Just the multi-dilation block on a 1/8-scale feature map.
  Tensor4 mdm_forward(const Tensor4& x) const;
  // sigmoid of the fused logit
  Tensor4 predict_probability(const Tensor4& image) const;
  // probability >= threshold -> 1, else 0 (inclusive boundary)
  Tensor4 predict(const Tensor4& image, float threshold) const;

 private:
  void check_input(const Shape4& s) const;

  NetworkConfig cfg_;
  std::vector<std::string> names_;
  std::map<std::string, Tensor4> params_;
};

}  // namespace uhdn
