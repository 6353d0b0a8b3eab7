#pragma once

#include <string>
#include <vector>

#include "mono/dataset.hpp"
#include "mono/encoder.hpp"
#include "mono/image.hpp"

namespace mono {

// Row-major M x D feature store shared by probes and clustering.
struct FeatureMatrix {
  std::vector<float> data;
  int64_t rows = 0;
  int cols = 0;

  float* row(int64_t i) { return data.data() + i * cols; }
  const float* row(int64_t i) const { return data.data() + i * cols; }
  void resize(int64_t r, int c) {
    rows = r;
    cols = c;
    data.assign(static_cast<size_t>(r) * c, 0.0f);
  }
};

struct TapRequest {
  std::string tap;
  int target_dim = 0;  // 0 keeps raw dims (flatten); otherwise adaptive max-pool
};

// One eval-mode pass per batch, all requested taps captured. Encoder state is
// untouched.
std::vector<FeatureMatrix> extract_tap_features(Network<float>& net,
                                                const std::vector<Image>& images,
                                                const std::vector<TapRequest>& taps,
                                                int batch_size = 128);

FeatureMatrix extract_tap_features_single(Network<float>& net, const std::vector<Image>& images,
                                          const std::string& tap, int target_dim = 0,
                                          int batch_size = 128);

// Head-input features (flattened final block output) over all dataset samples
// in index order, eval mode, no augmentation beyond the dataset's own.
FeatureMatrix extract_penultimate_features(Network<float>& net, const SynthDataset& ds,
                                           int batch_size = 128);

}  // namespace mono
