#pragma once

#include <map>
#include <string>
#include <vector>

#include "mono/dataset.hpp"
#include "mono/encoder.hpp"
#include "mono/features.hpp"
#include "mono/pretext.hpp"

namespace mono {

// Folds eval-mode batchnorm affine parameters into the preceding convolutions
// so outputs are preserved and the BN layers disappear. Absorbing a network
// with no batchnorm left is a structure error.
Network<float> absorb_batchnorm(const Network<float>& net);

// Grid side g with channels*g*g == target_dim; no integer g is a config error.
int pooled_grid(int channels, int target_dim);

// Adaptive max-pool of a (N,C,H,W) activation to C*g*g = target_dim, flattened
// to (N, target_dim).
nn::TensorPtr<float> pooled_features(const nn::TensorPtr<float>& activation, int target_dim);

// Linear-probe protocol: 36 epochs, lr 0.01 divided by 5 at epochs 5, 15, 25.
struct ProbeSpec {
  std::string tap = "conv1";
  int target_dim = 0;  // 0 = keep raw dims (the CIFAR setting)
  int epochs = 36;
  double lr_start = 0.01;
  std::vector<int> lr_milestones = {5, 15, 25};
  double lr_factor = 0.2;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int batch_size = 128;
  uint64_t seed = 1;
  // Resize-256 / random-224-crop / flip train-time augmentation; only
  // meaningful for the 224-input encoder. CIFAR mode keeps images untouched.
  bool train_augment = false;

  void validate() const;
};

double probe_lr_at(const ProbeSpec& spec, int epoch);

struct LinearProbe {
  nn::Linear<float> classifier;
  int feat_dim = 0;
  int classes = 0;
  std::vector<double> epoch_loss;
  // per-dimension affine standardization fitted on the train split; applied
  // before the classifier so probe SGD conditioning is identical across
  // checkpoints
  std::vector<float> feat_mean;
  std::vector<float> feat_inv_std;

  void standardize_row(const float* in, float* out) const {
    for (int i = 0; i < feat_dim; ++i) out[i] = (in[i] - feat_mean[static_cast<size_t>(i)]) * feat_inv_std[static_cast<size_t>(i)];
  }
};

// [0,1] labeled images mapped to the (-1,1) encoder input range.
std::vector<Image> normalized_images(const LabeledImages& data);

LinearProbe train_probe_on_features(const FeatureMatrix& feats, const std::vector<int>& labels,
                                    int num_classes, const ProbeSpec& spec);

// Extracts tap features of the frozen encoder (eval mode; encoder parameters
// and BN stats are never touched) and fits the linear classifier.
LinearProbe train_probe(Network<float>& net, const LabeledImages& train, const ProbeSpec& spec);

double eval_probe_on_features(const LinearProbe& probe, const FeatureMatrix& feats,
                              const std::vector<int>& labels);

// Single full-image evaluation (the CIFAR protocol).
double eval_probe(Network<float>& net, const LinearProbe& probe, const LabeledImages& val,
                  const ProbeSpec& spec);

// Four corner crops plus the center crop, each with its horizontal flip.
std::vector<Image> ten_crops(const Image& img, int crop_size);

// Averages the ten softmax score vectors per image before the argmax.
double ten_crop_eval(Network<float>& net, const LinearProbe& probe, const LabeledImages& val,
                     const ProbeSpec& spec);

struct FinetuneResult {
  double top1 = 0.0;
  std::vector<double> epoch_loss;
};

// Supervised training with the first k blocks frozen (parameters and BN
// stats); reports final top-1 on the test split.
FinetuneResult finetune_frozen(Network<float>& net, int k_frozen, const LabeledImages& train,
                               const LabeledImages& test, const TrainHyper& hyper);

// Per-layer top-1 accuracies plus the metadata needed to reproduce the run.
struct ProbeReport {
  std::string method;
  int n_sources = 0;
  std::map<std::string, double> tap_accuracy;  // percent
  std::string crop_protocol = "single";
  uint64_t data_seed = 0;
  uint64_t model_seed = 0;
  uint64_t epoch_seed = 0;
  std::string config_hash;
  double wall_clock_sec = 0.0;

  std::string to_json_string() const;
  static ProbeReport from_json_string(const std::string& s);
  // Row format mirroring the per-layer tables: method, N, conv1..convK.
  static std::string csv_header(const std::vector<std::string>& taps);
  std::string csv_row(const std::vector<std::string>& taps) const;
};

}  // namespace mono
