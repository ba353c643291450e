#include "net.hpp"

#include <cmath>

#include "error.hpp"
#include "rng.hpp"

namespace uhdn {

void NetworkConfig::validate() const {
  if (in_channels < 1)
    fail(ErrorCode::usage, "config: in_channels must be >= 1, got " +
                               std::to_string(in_channels));
  if (base_channels < 1)
    fail(ErrorCode::usage, "config: base_channels must be >= 1, got " +
                               std::to_string(base_channels));
  if (dilation_rates.empty())
    fail(ErrorCode::usage, "config: dilation_rates must be non-empty");
  int prev = 0;
  for (int r : dilation_rates) {
    if (r < 1)
      fail(ErrorCode::usage,
           "config: dilation rates must be >= 1, got " + std::to_string(r));
    if (r <= prev)
      fail(ErrorCode::usage, "config: dilation rates must be strictly increasing");
    prev = r;
  }
}

std::vector<ParamSpec> Network::expected_parameters(const NetworkConfig& cfg) {
  cfg.validate();
  const std::int64_t b = cfg.base_channels;
  std::vector<ParamSpec> specs;
  auto conv = [&](const std::string& name, std::int64_t cout, std::int64_t cin,
                  std::int64_t k) {
    specs.push_back({name + ".weight", {cout, cin, k, k}, false});
    specs.push_back({name + ".bias", {1, cout, 1, 1}, true});
  };
  auto upconv = [&](const std::string& name, std::int64_t cout, std::int64_t cin) {
    specs.push_back({name + ".weight", {cout, cin, 2, 2}, false});
    specs.push_back({name + ".bias", {1, cout, 1, 1}, true});
  };

  std::int64_t cin = cfg.in_channels;
  for (int i = 1; i <= 4; ++i) {
    std::int64_t cout = b << (i - 1);
    conv("enc" + std::to_string(i) + ".conv1", cout, cin, 3);
    conv("enc" + std::to_string(i) + ".conv2", cout, cout, 3);
    cin = cout;
  }
  // cin is now 8b, the 1/8-scale encoder width
  if (cfg.with_mdm) {
    for (int r : cfg.dilation_rates)
      conv("mdm.branch_r" + std::to_string(r), cin, cin, 3);
    std::int64_t cat = cin * (1 + (std::int64_t)cfg.dilation_rates.size());
    conv("mdm.project", 2 * cin, cat, 1);
  } else {
    conv("bottleneck.conv1", 2 * cin, cin, 3);
    conv("bottleneck.conv2", 2 * cin, 2 * cin, 3);
  }

  std::int64_t dc = 2 * cin;  // 16b entering the decoder
  for (int i = 1; i <= 3; ++i) {
    std::int64_t skip = b << (3 - i);  // enc3, enc2, enc1 widths
    std::string d = "dec" + std::to_string(i);
    upconv(d + ".upconv", skip, dc);
    conv(d + ".conv1", skip, 2 * skip, 3);
    conv(d + ".conv2", skip, skip, 3);
    dc = skip;
  }

  if (cfg.with_hf) {
    conv("side1", 1, 8 * b, 1);
    conv("side2", 1, 16 * b, 1);
    conv("side3", 1, 4 * b, 1);
    conv("side4", 1, 2 * b, 1);
    conv("side5", 1, b, 1);
    conv("fuse", 1, 5, 1);
  } else {
    conv("side5", 1, b, 1);
  }
  return specs;
}

Network::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  for (const ParamSpec& spec : expected_parameters(cfg_)) {
    Tensor4 t(spec.shape);
    if (!spec.is_bias) {
      // fan_in counts the receptive field feeding one output unit
      double fan_in = (double)(spec.shape.c * spec.shape.h * spec.shape.w);
      double std = std::sqrt(2.0 / fan_in);
      for (std::int64_t i = 0; i < t.count(); ++i)
        t[i] = (float)(rng.next_gaussian() * std);
    }
    names_.push_back(spec.name);
    params_.emplace(spec.name, std::move(t));
  }
}

Tensor4& Network::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    fail(ErrorCode::usage, "unknown parameter \"" + name + "\"");
  return it->second;
}

const Tensor4& Network::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    fail(ErrorCode::usage, "unknown parameter \"" + name + "\"");
  return it->second;
}

std::int64_t Network::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& [_, t] : params_) total += t.count();
  return total;
}

void Network::check_input(const Shape4& s) const {
  if (s.c != cfg_.in_channels)
    fail(ErrorCode::usage, "forward: input has " + std::to_string(s.c) +
                               " channels, network expects " +
                               std::to_string(cfg_.in_channels));
  if (s.h % 8 != 0 || s.w % 8 != 0)
    fail(ErrorCode::usage,
         "forward: spatial size " + s.str() +
             " not divisible by 8; run pad_to_multiple before inference");
}

Network::TapedBundle Network::forward_on_tape(Tape& tape, NodeRef input,
                                              bool params_need_grad) const {
  check_input(tape.value(input).shape());

  TapedBundle out;
  std::map<std::string, NodeRef> pn;
  for (const std::string& name : names_) {
    NodeRef ref = tape.leaf(&params_.at(name), params_need_grad);
    pn.emplace(name, ref);
    out.params.emplace_back(name, ref);
  }
  auto cr = [&](NodeRef x, const std::string& name, ConvGeometry g) {
    return tape.conv2d_relu(x, pn.at(name + ".weight"), pn.at(name + ".bias"), g);
  };
  auto logit1x1 = [&](NodeRef x, const std::string& name) {
    return tape.conv2d(x, pn.at(name + ".weight"), pn.at(name + ".bias"), {1, 0});
  };

  const ConvGeometry g3{1, 1};
  NodeRef e1 = cr(cr(input, "enc1.conv1", g3), "enc1.conv2", g3);
  NodeRef e2 = cr(cr(tape.max_pool_2x2(e1), "enc2.conv1", g3), "enc2.conv2", g3);
  NodeRef e3 = cr(cr(tape.max_pool_2x2(e2), "enc3.conv1", g3), "enc3.conv2", g3);
  NodeRef e4 = cr(cr(tape.max_pool_2x2(e3), "enc4.conv1", g3), "enc4.conv2", g3);

  NodeRef mid;
  if (cfg_.with_mdm) {
    std::vector<NodeRef> cat{e4};
    for (int r : cfg_.dilation_rates)
      cat.push_back(cr(e4, "mdm.branch_r" + std::to_string(r),
                       {r, same_padding(3, r)}));
    mid = cr(tape.concat_channels(cat), "mdm.project", {1, 0});
  } else {
    mid = cr(cr(e4, "bottleneck.conv1", g3), "bottleneck.conv2", g3);
  }

  auto dec = [&](NodeRef x, NodeRef skip, const std::string& name) {
    NodeRef up = tape.up_conv_2x2(x, pn.at(name + ".upconv.weight"),
                                  pn.at(name + ".upconv.bias"));
    NodeRef cat = tape.concat_channels({up, skip});
    return cr(cr(cat, name + ".conv1", g3), name + ".conv2", g3);
  };
  NodeRef d1 = dec(mid, e3, "dec1");
  NodeRef d2 = dec(d1, e2, "dec2");
  NodeRef d3 = dec(d2, e1, "dec3");

  if (cfg_.with_hf) {
    NodeRef s1 = tape.bilinear_upsample(logit1x1(e4, "side1"), 8);
    NodeRef s2 = tape.bilinear_upsample(logit1x1(mid, "side2"), 8);
    NodeRef s3 = tape.bilinear_upsample(logit1x1(d1, "side3"), 4);
    NodeRef s4 = tape.bilinear_upsample(logit1x1(d2, "side4"), 2);
    NodeRef s5 = logit1x1(d3, "side5");
    out.sides = {s1, s2, s3, s4, s5};
    out.fused = logit1x1(tape.concat_channels({s1, s2, s3, s4, s5}), "fuse");
  } else {
    NodeRef s5 = logit1x1(d3, "side5");
    out.sides = {s5};
    out.fused = s5;
  }
  return out;
}

Tensor4 Network::mdm_forward(const Tensor4& x) const {
  if (!cfg_.with_mdm)
    fail(ErrorCode::usage, "mdm_forward: network built without the module");
  std::int64_t want = 8LL * cfg_.base_channels;
  if (x.shape().c != want)
    fail(ErrorCode::usage, "mdm_forward: input has " +
                               std::to_string(x.shape().c) +
                               " channels, expected " + std::to_string(want));
  Tape tape;
  NodeRef in = tape.leaf(&x, false);
  std::vector<NodeRef> cat{in};
  for (int r : cfg_.dilation_rates) {
    std::string name = "mdm.branch_r" + std::to_string(r);
    cat.push_back(tape.conv2d_relu(in, tape.leaf(&params_.at(name + ".weight"), false),
                                   tape.leaf(&params_.at(name + ".bias"), false),
                                   {r, same_padding(3, r)}));
  }
  NodeRef out = tape.conv2d_relu(
      tape.concat_channels(cat), tape.leaf(&params_.at("mdm.project.weight"), false),
      tape.leaf(&params_.at("mdm.project.bias"), false), {1, 0});
  return tape.value(out);
}

SideBundle Network::forward(const Tensor4& input) const {
  Tape tape;
  NodeRef in = tape.leaf(&input, false);
  TapedBundle g = forward_on_tape(tape, in, false);
  SideBundle bundle;
  for (NodeRef s : g.sides) bundle.sides.push_back(tape.value(s));
  bundle.fused = tape.value(g.fused);
  return bundle;
}

Tensor4 Network::predict_probability(const Tensor4& image) const {
  Tape tape;
  NodeRef in = tape.leaf(&image, false);
  TapedBundle g = forward_on_tape(tape, in, false);
  return sigmoid(tape.value(g.fused));
}

Tensor4 Network::predict(const Tensor4& image, float threshold) const {
  Tensor4 prob = predict_probability(image);
  Tensor4 mask(prob.shape());
  for (std::int64_t i = 0; i < prob.count(); ++i)
    mask[i] = prob[i] >= threshold ? 1.0f : 0.0f;
  return mask;
}

}  // namespace uhdn
