#include "mono/features.hpp"

#include "mono/error.hpp"
#include "mono/probe.hpp"

namespace mono {

namespace {

void copy_rows(FeatureMatrix& dst, int64_t row0, const nn::TensorPtr<float>& batch_feats) {
  std::copy(batch_feats->data.begin(), batch_feats->data.end(),
            dst.data.begin() + row0 * dst.cols);
}

}  // namespace

std::vector<FeatureMatrix> extract_tap_features(Network<float>& net,
                                                const std::vector<Image>& images,
                                                const std::vector<TapRequest>& taps,
                                                int batch_size) {
  if (images.empty()) throw ValidationError("extract_tap_features: no images");
  if (batch_size < 1) throw ValidationError("extract_tap_features: batch_size must be >= 1");
  const bool was_training = net.training;
  net.training = false;

  const int64_t m = static_cast<int64_t>(images.size());
  std::vector<FeatureMatrix> out(taps.size());
  for (int64_t lo = 0; lo < m; lo += batch_size) {
    const int64_t hi = std::min<int64_t>(lo + batch_size, m);
    std::vector<Image> slice(images.begin() + lo, images.begin() + hi);
    auto r = net.forward_with_taps(images_to_tensor(slice));
    for (size_t t = 0; t < taps.size(); ++t) {
      auto it = r.taps.find(taps[t].tap);
      if (it == r.taps.end())
        throw ValidationError("extract_tap_features: unknown tap '" + taps[t].tap + "'");
      nn::TensorPtr<float> feats = taps[t].target_dim > 0
                                       ? pooled_features(it->second, taps[t].target_dim)
                                       : nn::flatten(it->second);
      if (out[t].rows == 0) out[t].resize(m, feats->dim(1));
      copy_rows(out[t], lo, feats);
    }
  }
  net.training = was_training;
  return out;
}

FeatureMatrix extract_tap_features_single(Network<float>& net, const std::vector<Image>& images,
                                          const std::string& tap, int target_dim, int batch_size) {
  return extract_tap_features(net, images, {{tap, target_dim}}, batch_size)[0];
}

FeatureMatrix extract_penultimate_features(Network<float>& net, const SynthDataset& ds,
                                           int batch_size) {
  ds.validate();
  const bool was_training = net.training;
  net.training = false;
  FeatureMatrix out;
  std::vector<Image> slice;
  for (int64_t lo = 0; lo < ds.d; lo += batch_size) {
    const int64_t hi = std::min<int64_t>(lo + batch_size, ds.d);
    slice.assign(static_cast<size_t>(hi - lo), Image());
#pragma omp parallel for schedule(static)
    for (int64_t i = lo; i < hi; ++i) slice[static_cast<size_t>(i - lo)] = get_sample(ds, i);
    auto r = net.forward_with_taps(images_to_tensor(slice));
    if (out.rows == 0) out.resize(ds.d, r.features->dim(1));
    copy_rows(out, lo, r.features);
  }
  net.training = was_training;
  return out;
}

}  // namespace mono
