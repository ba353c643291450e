#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "net.hpp"
#include "tensor.hpp"

namespace uhdn {

// Directory layouts with known channel counts and train/test splits.
enum class Layout { cfd, aiglern, generic };

Layout parse_layout(const std::string& name);
std::string layout_name(Layout layout);

// Lower-case file extensions the loaders will try to decode.
const std::set<std::string>& image_extensions();

struct Pad {
  int right = 0;
  int bottom = 0;
};

struct Sample {
  std::string id;
  Tensor4 image;  // (1, channels, H, W), scaled to [0,1], padded
  Tensor4 mask;   // (1, 1, H, W), values exactly 0 or 1, padded
  Pad pad;        // applied to both tensors; crop with crop_pad to undo
};

struct PaddedTensor {
  Tensor4 tensor;
  Pad pad;
};

// Zero-pad right/bottom to the next multiple of m.
PaddedTensor pad_to_multiple(const Tensor4& t, int m = 8);
Tensor4 crop_pad(const Tensor4& t, Pad pad);

// Decode one image file to (1, channels, H, W) in [0,1]; channels is 1 or 3.
// Three-channel output is in RGB order.
Tensor4 load_image(const std::string& path, int channels);

// Decode a mask image: single channel, pixel value > 127 becomes 1.
Tensor4 load_mask(const std::string& path);

// Load <root>/image/<id>.<ext> with <root>/groundtruth/<id>.<ext>, decoded,
// scaled, binarized, padded, and sorted by id.  channels = 0 picks the layout
// default (3 for cfd/generic, 1 for aiglern).  An existing but empty image
// directory yields an empty list with a warning on stderr.
std::vector<Sample> load_dataset(const std::string& root, Layout layout,
                                 int channels = 0);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

// Seeded shuffle, then first-k train.  Counts: 72/46 when a cfd layout has
// its expected 118 samples, 24/14 when aiglern has 38; otherwise the
// layout's ratio applies (72/118, 24/38, or 0.62 for generic).
DatasetSplit split(const std::vector<Sample>& samples, Layout layout,
                   std::uint64_t seed);

struct Checkpoint {
  NetworkConfig config;
  std::vector<std::pair<std::string, Tensor4>> entries;
};

// Binary container: magic "UHDN", format version, network configuration,
// then named tensors (biases stored with logical rank 1).  Round trips are
// bit-exact.
void save_checkpoint(const Network& net, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// Copy checkpoint tensors into an existing network; the entry set must match
// the network's expected parameter set exactly.
void install_parameters(Network& net, const Checkpoint& ck);

// Build the network the checkpoint describes.
Network load_network(const std::string& path);

// Grayscale portable float map ("Pf", negative scale = little-endian,
// bottom-to-top rows).  The recorded pad is cropped before writing, so the
// file matches the un-padded source image.
void save_probmap(const Tensor4& map, Pad pad, const std::string& path);
Tensor4 load_probmap(const std::string& path);

// 8-bit PNG with crack = 255; same crop rule as save_probmap.
void save_mask_png(const Tensor4& mask, Pad pad, const std::string& path);

}  // namespace uhdn
