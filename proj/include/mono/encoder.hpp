#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mono/error.hpp"
#include "mono/nn/layers.hpp"
#include "mono/nn/sgd.hpp"

namespace mono {

// The two encoder configurations. SmallAlexNet is the four-layer CIFAR-scale
// encoder (kernels 7,5,3,3 / strides 3,2,2,1, batchnorm after every conv, no
// pooling); AlexNetBN is the five-block AlexNet with batchnorm and max pooling
// after blocks 1, 2 and 5. Probes tap the activation right after each block's
// ReLU, named conv1..convK.
struct EncoderConfig {
  enum class Variant { kSmallAlexNet, kAlexNetBN };

  Variant variant = Variant::kSmallAlexNet;
  int input_size = 32;
  std::vector<int> widths;  // out-channels per block
  int head_classes = 4;

  static EncoderConfig small_alexnet(int input_size = 32, int head_classes = 4,
                                     std::vector<int> widths = {64, 128, 256, 256});
  static EncoderConfig alexnet_bn(int input_size = 224, int head_classes = 4,
                                  std::vector<int> widths = {96, 256, 384, 384, 256});

  std::string variant_name() const;
  int num_blocks() const { return static_cast<int>(widths.size()); }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;

  std::string to_json_string() const;
  static EncoderConfig from_json_string(const std::string& s);
};

struct BlockSpec {
  int kernel = 3, stride = 1, pad = 0;
  bool pool = false;
  int pool_k = 3, pool_stride = 2;
};

std::vector<BlockSpec> block_specs(const EncoderConfig& cfg);

// Closed-form spatial size of each tap (after ReLU, before pooling) plus the
// flattened body output dimension feeding the head.
struct EncoderDims {
  std::vector<int> tap_spatial;  // per block
  int feature_dim = 0;
};
EncoderDims encoder_dims(const EncoderConfig& cfg);

template <typename T>
struct Network {
  EncoderConfig cfg;
  std::vector<nn::Conv2d<T>> convs;
  std::vector<std::optional<nn::BatchNorm2d<T>>> bns;  // absorbed networks have none
  nn::Linear<T> head;
  bool training = false;
  int frozen_blocks = 0;
  uint64_t init_seed = 0;

  int num_blocks() const { return static_cast<int>(convs.size()); }

  std::vector<std::string> tap_names() const {
    std::vector<std::string> names;
    for (int b = 0; b < num_blocks(); ++b) names.push_back("conv" + std::to_string(b + 1));
    return names;
  }

  struct TapResult {
    std::map<std::string, nn::TensorPtr<T>> taps;
    nn::TensorPtr<T> features;  // flattened body output (head input)
    nn::TensorPtr<T> logits;
  };

  TapResult forward_with_taps(const nn::TensorPtr<T>& x) { return run(x, true); }

  nn::TensorPtr<T> forward(const nn::TensorPtr<T>& x) { return run(x, false).logits; }

  // Trainable parameters; the first `frozen_blocks` blocks are excluded.
  std::vector<nn::NamedParam<T>> parameters() {
    std::vector<nn::NamedParam<T>> out;
    collect_params(out, frozen_blocks);
    return out;
  }

  std::vector<nn::NamedParam<T>> all_parameters() {
    std::vector<nn::NamedParam<T>> out;
    collect_params(out, 0);
    return out;
  }

  void reinit_head(int classes, uint64_t seed) {
    SampleRng rng(seed, 0x48454144ull);  // "HEAD"
    cfg.head_classes = classes;
    head = nn::make_linear<T>(encoder_dims(cfg).feature_dim, classes, rng);
  }

  // Deep copy: fresh parameter tensors, same values. Plain struct copy would
  // alias the shared parameter storage.
  Network<T> clone() const {
    Network<T> out;
    out.cfg = cfg;
    out.training = training;
    out.frozen_blocks = frozen_blocks;
    out.init_seed = init_seed;
    auto copy_tensor = [](const nn::TensorPtr<T>& t) {
      auto c = nn::make_tensor<T>(t->shape, t->requires_grad);
      c->data = t->data;
      return c;
    };
    for (int b = 0; b < num_blocks(); ++b) {
      nn::Conv2d<T> conv = convs[b];
      conv.weight = copy_tensor(convs[b].weight);
      conv.bias = copy_tensor(convs[b].bias);
      out.convs.push_back(std::move(conv));
      if (bns[b]) {
        nn::BatchNorm2d<T> bn = *bns[b];
        bn.scale = copy_tensor(bns[b]->scale);
        bn.shift = copy_tensor(bns[b]->shift);
        out.bns.push_back(std::move(bn));
      } else {
        out.bns.push_back(std::nullopt);
      }
    }
    out.head.weight = copy_tensor(head.weight);
    out.head.bias = copy_tensor(head.bias);
    return out;
  }

 private:
  TapResult run(const nn::TensorPtr<T>& x, bool want_taps) {
    if (x->shape.size() != 4 || x->dim(1) != 3 || x->dim(2) != cfg.input_size ||
        x->dim(3) != cfg.input_size)
      throw ShapeError("encoder: expected batch of 3x" + std::to_string(cfg.input_size) + "x" +
                       std::to_string(cfg.input_size) + ", got " + nn::shape_str(x->shape));
    const auto specs = block_specs(cfg);
    TapResult r;
    nn::TensorPtr<T> h = x;
    for (int b = 0; b < num_blocks(); ++b) {
      h = convs[b].forward(h);
      if (bns[b]) {
        // Frozen blocks run batchnorm in eval mode and never move running stats.
        const bool bn_train = training && b >= frozen_blocks;
        h = bns[b]->forward(h, bn_train, bn_train);
      }
      h = nn::relu(h);
      if (want_taps) r.taps["conv" + std::to_string(b + 1)] = h;
      if (specs[b].pool) h = nn::maxpool2d(h, specs[b].pool_k, specs[b].pool_stride);
    }
    r.features = nn::flatten(h);
    r.logits = head.forward(r.features);
    return r;
  }

  void collect_params(std::vector<nn::NamedParam<T>>& out, int skip_blocks) {
    for (int b = 0; b < num_blocks(); ++b) {
      if (b < skip_blocks) continue;
      const std::string tag = std::to_string(b + 1);
      out.push_back({"conv" + tag + ".weight", convs[b].weight});
      out.push_back({"conv" + tag + ".bias", convs[b].bias});
      if (bns[b]) {
        out.push_back({"bn" + tag + ".scale", bns[b]->scale});
        out.push_back({"bn" + tag + ".shift", bns[b]->shift});
      }
    }
    out.push_back({"head.weight", head.weight});
    out.push_back({"head.bias", head.bias});
  }
};

template <typename T>
Network<T> build_encoder(const EncoderConfig& cfg, uint64_t init_seed) {
  cfg.validate();
  Network<T> net;
  net.cfg = cfg;
  net.init_seed = init_seed;
  SampleRng rng(init_seed, 0x494E4954ull);  // "INIT"
  const auto specs = block_specs(cfg);
  int in_ch = 3;
  for (int b = 0; b < cfg.num_blocks(); ++b) {
    net.convs.push_back(
        nn::make_conv2d<T>(in_ch, cfg.widths[b], specs[b].kernel, specs[b].stride, specs[b].pad, rng));
    net.bns.push_back(nn::make_batchnorm2d<T>(cfg.widths[b]));
    in_ch = cfg.widths[b];
  }
  net.head = nn::make_linear<T>(encoder_dims(cfg).feature_dim, cfg.head_classes, rng);
  return net;
}

template <typename T>
void freeze_prefix(Network<T>& net, int k_blocks) {
  if (k_blocks < 0 || k_blocks > net.num_blocks())
    throw ValidationError("freeze_prefix: k=" + std::to_string(k_blocks) + " out of range [0," +
                          std::to_string(net.num_blocks()) + "]");
  net.frozen_blocks = k_blocks;
}

// Versioned little-endian checkpoint: config JSON header followed by raw
// float32 parameter blobs in declaration order. Round trip restores
// parameters, running stats, config and seeds bit-exactly.
void save_checkpoint(const Network<float>& net, const std::string& path);
Network<float> load_checkpoint(const std::string& path);
// Rejects with a config diff when the stored config does not match.
Network<float> load_checkpoint(const std::string& path, const EncoderConfig& expect);

}  // namespace mono
