#pragma once

#include <set>
#include <string>

#include "dataio.hpp"
#include "net.hpp"
#include "train.hpp"

namespace uhdn {

// Merged run settings: network architecture, training hyperparameters,
// evaluation knobs, and paths.  Sources are a flat key=value file ('#' starts
// a comment) and later programmatic overrides; the last write to a key wins.
struct RunConfig {
  NetworkConfig net;
  TrainConfig train;
  double threshold = 0.5;
  int margin = 2;
  Layout layout = Layout::generic;
  std::string dataset;
  std::string out;

  // Assign one schema key; unknown keys and unparsable values are errors.
  // `seed` seeds both initialization and the epoch shuffle.
  void set(const std::string& key, const std::string& value);

  void load_file(const std::string& path);

  // Fill layout-driven defaults for keys never set explicitly
  // (cfd: 3 channels, batch 4; aiglern: 1 channel, batch 1),
  // then validate everything.
  void finalize();

  // Effective configuration, one key=value per line, parseable by set().
  std::string dump() const;

 private:
  std::set<std::string> explicit_;
};

}  // namespace uhdn
