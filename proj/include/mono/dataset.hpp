#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mono/augment.hpp"
#include "mono/image.hpp"
#include "mono/nn/tensor.hpp"

namespace mono {

// The N genuine source images; everything else in a SynthDataset is derived
// from them by augmentation.
struct SourceSet {
  std::vector<Image> images;
  std::vector<std::string> names;

  size_t size() const { return images.size(); }
};

// Lazy, seed-deterministic mapping from sample index to an SxS patch. Sample i
// is a pure function of (sources, seed, i, cfg): the first N samples are the
// unaugmented originals (center square, normalized, resized), the remaining
// d - N are augmentations of source (i mod N).
struct SynthDataset {
  SourceSet sources;
  int64_t d = 0;
  uint64_t seed = 0;
  AugmentConfig cfg;

  void validate() const;
};

Image get_sample(const SynthDataset& ds, int64_t i);

// Deterministic Fisher-Yates shuffle of [0, d).
std::vector<int64_t> epoch_permutation(int64_t d, uint64_t epoch_seed);

struct Batch {
  nn::TensorPtr<float> images;  // N_b x 3 x S x S
  std::vector<int64_t> indices;
};

nn::TensorPtr<float> images_to_tensor(const std::vector<Image>& imgs);

// One epoch of shuffled minibatches (last short batch kept). Batches may be
// materialized ahead by `workers` async tasks; delivery stays in order and the
// content is invariant to the worker count.
class BatchStream {
 public:
  BatchStream(const SynthDataset& ds, int batch_size, uint64_t epoch_seed, int workers = 1);
  ~BatchStream();
  std::optional<Batch> next();
  int64_t num_batches() const { return num_batches_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int64_t num_batches_ = 0;
};

// SHA-256 (lowercase hex) over all d samples quantized to bytes in index
// order; the cross-run identity oracle for dataset construction.
std::string dataset_checksum(const SynthDataset& ds);

// Writes `count` patches (indices 0, stride, 2*stride, ... modulo d) as 8-bit
// PNGs named sample_<index>.png for visual inspection.
void dump_samples(const SynthDataset& ds, const std::string& dir, int count, int64_t stride = 1);

// ---------------------------------------------------------------------------
// Labeled 32x32 data in the CIFAR binary layout (1 or 2 label bytes followed
// by 3072 planar RGB bytes per record).
// ---------------------------------------------------------------------------

struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
  int num_classes = 10;

  size_t size() const { return images.size(); }
};

LabeledImages load_cifar_file(const std::string& path, int label_bytes = 1, int label_index = 0,
                              int num_classes = 10);

struct CifarData {
  LabeledImages train;
  LabeledImages test;
};

// Standard layout: data_batch_*.bin (at least one) plus optional test_batch.bin.
CifarData load_cifar10(const std::string& dir);

void save_cifar_file(const std::string& path, const LabeledImages& data);

}  // namespace mono
