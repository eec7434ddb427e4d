#pragma once

// ARC-Net: the potential network a(x, tau) : R^4 -> R^3. Hidden layers are
// SIREN except the last hidden layer, which is FINER; the output is linear.

#include "arcflow/networks/mlp.hpp"

#include <cstdint>
#include <vector>

namespace arcflow::nn {

struct ArcNetConfig {
  std::vector<int> hidden{256, 256, 256, 256, 128};
  double omega0 = 4.0;
  /// Multiplies the initial output-layer weights. Values below one start the
  /// flow close to the identity map.
  double output_gain = 1.0;
};

MlpParams build_arcnet(const ArcNetConfig& cfg, std::uint64_t seed);

}  // namespace arcflow::nn
