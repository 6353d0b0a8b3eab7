#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mono/dataset.hpp"
#include "mono/encoder.hpp"
#include "mono/features.hpp"

namespace mono {

// Four exact rotations per patch, patch-major, label l <-> 90*l degrees
// counter-clockwise. Rotations take the lossless permutation path so the
// (image, label) pairing is an exact bijection.
struct RotBatch {
  nn::TensorPtr<float> images;  // 4*N_b x 3 x S x S
  std::vector<int> labels;
};

RotBatch make_rot_batch(const std::vector<Image>& patches);

struct TrainHyper {
  int epochs = 5;
  int batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  uint64_t epoch_seed = 1;
  bool native_augment = true;  // the method's own augmentations on top of the dataset
  int workers = 1;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;     // rotnet: 4-way train accuracy (percent)
  double objective = 0.0;    // deepcluster: k-means objective
  int min_cluster = 0;
  int max_cluster = 0;
  double nmi_prev = 0.0;     // deepcluster: NMI against the previous epoch's labels
};

struct PretrainResult {
  std::vector<EpochStats> epochs;
};

// Called after each finished epoch (checkpointing, CSV rows).
using EpochCallback = std::function<void(const EpochStats&, Network<float>&)>;

// 4-way rotation pretext: SGD over RotBatches built from dataset patches, with
// RotNet's native augmentation (non-scaled random crops + horizontal flips)
// applied on top when enabled.
PretrainResult train_rotnet(const SynthDataset& ds, Network<float>& net, const TrainHyper& hyper,
                            const EpochCallback& on_epoch = nullptr);

// ---------------------------------------------------------------------------
// PCA + k-means for DeepCluster pseudo-labels
// ---------------------------------------------------------------------------

struct PcaState {
  std::vector<float> mean;   // D
  std::vector<float> basis;  // D x p, column-orthonormal, variance descending
  int dim_in = 0;
  int dim_out = 0;
};

// Exact covariance eigendecomposition for small D, randomized subspace
// iteration above that. If the data has rank below p the output dimension is
// reduced (with a warning on stderr).
PcaState pca_fit(const FeatureMatrix& features, int p, uint64_t seed = 0);
FeatureMatrix pca_apply(const PcaState& state, const FeatureMatrix& features);

struct ClusterState {
  std::vector<float> centroids;  // k x p
  std::vector<int> assignments;  // M
  std::vector<int> sizes;        // k, all positive after reassignment
  int k = 0;
  int p = 0;
  double objective = 0.0;
  std::vector<double> objective_history;  // one entry per assignment step
  int iterations = 0;
};

// k-means++ init, Lloyd iterations to an assignment fixpoint or max_iters;
// empty clusters are re-seeded with a random point from the largest cluster
// before the next iteration.
ClusterState kmeans(const FeatureMatrix& features, int k, int max_iters, uint64_t seed);

struct DeepClusterOpts {
  int k = 64;
  int pca_dim = 32;
  int kmeans_iters = 50;
};

// Alternates clustering of penultimate features (eval mode) with one training
// pass per epoch on the pseudo-labels, using DeepCluster's native resized-crop
// + flip augmentation and inverse-cluster-size sample weights. The head is
// reinitialized to k outputs at every epoch boundary; the encoder body is
// never touched by the reinit.
PretrainResult deepcluster_train(const SynthDataset& ds, Network<float>& net,
                                 const DeepClusterOpts& opts, const TrainHyper& hyper,
                                 const EpochCallback& on_epoch = nullptr);

double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace mono
