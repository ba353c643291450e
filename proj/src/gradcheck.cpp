#include "gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

#include "error.hpp"
#include "rng.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace uhdn {

namespace {

constexpr double kEps = 1e-5;
constexpr double kTolerance = 1e-4;

using Builder = std::function<NodeRef(Taped&, const std::vector<NodeRef>&)>;

// one random problem: differentiated leaves plus a graph ending in a scalar
struct Instance {
  std::vector<Tensor4d> inputs;
  Builder build;
};

Tensor4d rnd(Shape4 s, Rng& rng, double scale = 1.0, double offset = 0.0) {
  Tensor4d t(s);
  for (std::int64_t i = 0; i < t.count(); ++i)
    t[i] = rng.next_gaussian() * scale + offset;
  return t;
}

std::int64_t dim(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + std::int64_t(rng.next_index(std::size_t(hi - lo + 1)));
}

// squashing tail keeps input gradients non-constant for linear operations
NodeRef squash(Taped& t, NodeRef y) { return t.sum(t.sigmoid(y)); }

Instance make_conv(Rng& rng, bool fused) {
  const std::int64_t n = dim(rng, 1, 2), cin = dim(rng, 1, 3),
                     cout = dim(rng, 1, 3);
  const int k = rng.next_index(2) ? 3 : 1;
  const int r = (k == 3 && rng.next_index(2)) ? 2 : 1;
  const std::int64_t h = dim(rng, 5, 8), w = dim(rng, 5, 8);
  Instance inst;
  inst.inputs.push_back(rnd(Shape4{n, cin, h, w}, rng));
  inst.inputs.push_back(rnd(Shape4{cout, cin, k, k}, rng, 0.5));
  inst.inputs.push_back(rnd(Shape4{1, cout, 1, 1}, rng, 0.3));
  const ConvGeometry geom{r, same_padding(k, r)};
  inst.build = [geom, fused](Taped& t, const std::vector<NodeRef>& l) {
    NodeRef y = fused ? t.conv2d_relu(l[0], l[1], l[2], geom)
                      : t.conv2d(l[0], l[1], l[2], geom);
    return squash(t, y);
  };
  return inst;
}

Instance make_up_conv(Rng& rng) {
  const std::int64_t cin = dim(rng, 1, 3), cout = dim(rng, 1, 3);
  Instance inst;
  inst.inputs.push_back(rnd(Shape4{1, cin, dim(rng, 3, 6), dim(rng, 3, 6)}, rng));
  inst.inputs.push_back(rnd(Shape4{cout, cin, 2, 2}, rng, 0.5));
  inst.inputs.push_back(rnd(Shape4{1, cout, 1, 1}, rng, 0.3));
  inst.build = [](Taped& t, const std::vector<NodeRef>& l) {
    return squash(t, t.up_conv_2x2(l[0], l[1], l[2]));
  };
  return inst;
}

Instance make_max_pool(Rng& rng) {
  Instance inst;
  inst.inputs.push_back(
      rnd(Shape4{dim(rng, 1, 2), dim(rng, 1, 3), 2 * dim(rng, 2, 4),
                 2 * dim(rng, 2, 4)},
          rng));
  inst.build = [](Taped& t, const std::vector<NodeRef>& l) {
    return squash(t, t.max_pool_2x2(l[0]));
  };
  return inst;
}

Instance make_relu(Rng& rng) {
  Instance inst;
  inst.inputs.push_back(
      rnd(Shape4{1, dim(rng, 1, 3), dim(rng, 4, 7), dim(rng, 4, 7)}, rng));
  inst.build = [](Taped& t, const std::vector<NodeRef>& l) {
    return squash(t, t.relu(l[0]));
  };
  return inst;
}

Instance make_sigmoid(Rng& rng) {
  Instance inst;
  inst.inputs.push_back(
      rnd(Shape4{1, dim(rng, 1, 3), dim(rng, 4, 7), dim(rng, 4, 7)}, rng, 2.0));
  inst.build = [](Taped& t, const std::vector<NodeRef>& l) {
    return t.sum(t.sigmoid(l[0]));
  };
  return inst;
}

Instance make_concat(Rng& rng) {
  const std::int64_t parts = dim(rng, 2, 3), h = dim(rng, 3, 6),
                     w = dim(rng, 3, 6);
  Instance inst;
  for (std::int64_t p = 0; p < parts; ++p)
    inst.inputs.push_back(rnd(Shape4{1, dim(rng, 1, 3), h, w}, rng));
  inst.build = [](Taped& t, const std::vector<NodeRef>& l) {
    return squash(t, t.concat_channels(l));
  };
  return inst;
}

Instance make_bilinear(Rng& rng) {
  const int factor = rng.next_index(2) ? 2 : 4;
  Instance inst;
  inst.inputs.push_back(
      rnd(Shape4{1, dim(rng, 1, 2), dim(rng, 3, 5), dim(rng, 3, 5)}, rng));
  inst.build = [factor](Taped& t, const std::vector<NodeRef>& l) {
    return squash(t, t.bilinear_upsample(l[0], factor));
  };
  return inst;
}

Instance make_weighted_bce(Rng& rng) {
  const std::int64_t n = dim(rng, 1, 2), h = dim(rng, 4, 7), w = dim(rng, 4, 7);
  Instance inst;
  inst.inputs.push_back(rnd(Shape4{n, 1, h, w}, rng, 2.0));
  Tensor4d target(Shape4{n, 1, h, w});
  for (std::int64_t i = 0; i < target.count(); ++i)
    target[i] = rng.next_index(2) ? 1.0 : 0.0;
  const double beta = 0.2 + rng.next_uniform() * 1.8;
  const double gamma = 0.2 + rng.next_uniform() * 1.8;
  // the builder keeps the target alive across rebuilds
  auto held = std::make_shared<Tensor4d>(std::move(target));
  inst.build = [held, beta, gamma](Taped& t, const std::vector<NodeRef>& l) {
    return t.weighted_bce(l[0], held.get(), beta, gamma, 1e-7);
  };
  return inst;
}

Instance make_instance(const std::string& op, Rng& rng) {
  if (op == "conv2d") return make_conv(rng, false);
  if (op == "conv2d_relu") return make_conv(rng, true);
  if (op == "up_conv_2x2") return make_up_conv(rng);
  if (op == "max_pool_2x2") return make_max_pool(rng);
  if (op == "relu") return make_relu(rng);
  if (op == "sigmoid") return make_sigmoid(rng);
  if (op == "concat_channels") return make_concat(rng);
  if (op == "bilinear_upsample") return make_bilinear(rng);
  if (op == "weighted_bce") return make_weighted_bce(rng);
  std::string names;
  for (const std::string& n : gradcheck_op_names())
    names += names.empty() ? n : ", " + n;
  fail(ErrorCode::usage, "unknown operation '" + op + "' (known: " + names + ")");
}

double value_of(const Instance& inst) {
  Taped tape;
  std::vector<NodeRef> leaves;
  for (const Tensor4d& in : inst.inputs)
    leaves.push_back(tape.leaf(&in, false));
  return tape.value(inst.build(tape, leaves))[0];
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  return {"conv2d",          "conv2d_relu", "up_conv_2x2",
          "max_pool_2x2",    "relu",        "sigmoid",
          "concat_channels", "bilinear_upsample", "weighted_bce"};
}

GradCheckResult gradcheck_op(const std::string& op, int trials,
                             std::uint64_t seed) {
  if (trials < 1)
    fail(ErrorCode::usage,
         "trial count must be positive, got " + std::to_string(trials));
  GradCheckResult res;
  res.op = op;
  res.trials = trials;
  Rng rng(seed ^ std::hash<std::string>{}(op));
  for (int trial = 0; trial < trials; ++trial) {
    Instance inst = make_instance(op, rng);

    Taped tape;
    std::vector<NodeRef> leaves;
    for (const Tensor4d& in : inst.inputs)
      leaves.push_back(tape.leaf(&in, true));
    tape.backward(inst.build(tape, leaves));
    std::vector<Tensor4d> grads;
    for (NodeRef l : leaves) grads.push_back(tape.grad(l));

    for (std::size_t i = 0; i < inst.inputs.size(); ++i) {
      Tensor4d& x = inst.inputs[i];
      for (std::int64_t j = 0; j < x.count(); ++j) {
        const double keep = x[j];
        x[j] = keep + kEps;
        const double up = value_of(inst);
        x[j] = keep - kEps;
        const double down = value_of(inst);
        x[j] = keep;
        const double fd = (up - down) / (2.0 * kEps);
        const double an = grads[i][j];
        const double rel =
            std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
        if (rel > res.worst_rel) {
          res.worst_rel = rel;
          char buf[96];
          std::snprintf(buf, sizeof buf, "trial %d, input %zu, element %lld",
                        trial, i, static_cast<long long>(j));
          res.worst_where = buf;
        }
      }
    }
  }
  res.pass = res.worst_rel < kTolerance;
  return res;
}

std::vector<GradCheckResult> gradcheck_all(int trials, std::uint64_t seed) {
  std::vector<GradCheckResult> out;
  for (const std::string& op : gradcheck_op_names())
    out.push_back(gradcheck_op(op, trials, seed));
  return out;
}

std::string gradcheck_report(const std::vector<GradCheckResult>& results) {
  std::string s;
  bool all_pass = true;
  for (const GradCheckResult& r : results) {
    char line[256];
    std::snprintf(line, sizeof line, "%-18s %s  worst %.3e  (%s)\n",
                  r.op.c_str(), r.pass ? "pass" : "FAIL", r.worst_rel,
                  r.worst_where.empty() ? "no elements" : r.worst_where.c_str());
    s += line;
    all_pass = all_pass && r.pass;
  }
  s += all_pass ? "all gradients match finite differences\n"
                : "GRADIENT CHECK FAILED\n";
  return s;
}

}  // namespace uhdn
