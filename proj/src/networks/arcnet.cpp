#include "arcflow/networks/arcnet.hpp"

namespace arcflow::nn {

MlpParams build_arcnet(const ArcNetConfig& cfg, std::uint64_t seed) {
  if (cfg.hidden.empty()) throw NetworkError("ARC-Net needs at least one hidden layer");
  std::vector<int> dims{4};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(3);
  MlpParams p = siren_init(dims, cfg.omega0, seed);
  p.layers[p.layers.size() - 2].kind = LayerKind::kFiner;
  p.layers.back().w *= cfg.output_gain;
  return p;
}

}  // namespace arcflow::nn
