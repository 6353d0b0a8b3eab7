#include "mono/probe.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mono/error.hpp"

namespace mono {

using nlohmann::json;

namespace {

uint64_t mix_seed_local(uint64_t seed, uint64_t salt) {
  return seed + 0x9E3779B97F4A7C15ull * (salt + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Batchnorm absorption
// ---------------------------------------------------------------------------

Network<float> absorb_batchnorm(const Network<float>& net) {
  bool any = false;
  for (const auto& bn : net.bns)
    if (bn) any = true;
  if (!any)
    throw StructureError("absorb_batchnorm: no batchnorm layers remain (already absorbed?)");

  Network<float> out = net.clone();
  for (int b = 0; b < out.num_blocks(); ++b) {
    if (!out.bns[b]) continue;
    auto& bn = *out.bns[b];
    auto& conv = out.convs[b];
    const int o_ch = conv.weight->dim(0);
    const int64_t per_out = conv.weight->numel() / o_ch;
    for (int o = 0; o < o_ch; ++o) {
      const float inv_std = 1.0f / std::sqrt(bn.running_var[static_cast<size_t>(o)] + bn.epsilon);
      const float a = bn.scale->data[static_cast<size_t>(o)] * inv_std;
      float* w = conv.weight->data.data() + static_cast<int64_t>(o) * per_out;
      for (int64_t i = 0; i < per_out; ++i) w[i] *= a;
      conv.bias->data[static_cast<size_t>(o)] =
          (conv.bias->data[static_cast<size_t>(o)] - bn.running_mean[static_cast<size_t>(o)]) * a +
          bn.shift->data[static_cast<size_t>(o)];
    }
    out.bns[b].reset();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive pooling to a fixed flattened dimension
// ---------------------------------------------------------------------------

int pooled_grid(int channels, int target_dim) {
  if (channels < 1 || target_dim < 1)
    throw ValidationError("pooled_features: channels and target_dim must be positive");
  if (target_dim % channels != 0)
    throw ValidationError("pooled_features: target_dim " + std::to_string(target_dim) +
                          " is not divisible by " + std::to_string(channels) + " channels");
  const int per = target_dim / channels;
  const int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(per))));
  if (g * g != per)
    throw ValidationError("pooled_features: target_dim/" + std::to_string(channels) + " = " +
                          std::to_string(per) + " is not a square grid");
  return g;
}

nn::TensorPtr<float> pooled_features(const nn::TensorPtr<float>& activation, int target_dim) {
  if (activation->shape.size() != 4)
    throw ShapeError("pooled_features: activation must be NCHW, got " +
                     nn::shape_str(activation->shape));
  const int g = pooled_grid(activation->dim(1), target_dim);
  return nn::flatten(nn::adaptive_maxpool2d(activation, g, g));
}

// ---------------------------------------------------------------------------
// Linear probes
// ---------------------------------------------------------------------------

void ProbeSpec::validate() const {
  if (epochs < 1) throw ValidationError("probe.epochs: must be >= 1");
  if (batch_size < 1) throw ValidationError("probe.batch_size: must be >= 1");
  if (!(lr_start > 0.0)) throw ValidationError("probe.lr_start: must be positive");
  if (!(lr_factor > 0.0 && lr_factor <= 1.0))
    throw ValidationError("probe.lr_factor: must be in (0,1]");
  if (target_dim < 0) throw ValidationError("probe.target_dim: must be >= 0");
}

double probe_lr_at(const ProbeSpec& spec, int epoch) {
  double lr = spec.lr_start;
  for (int milestone : spec.lr_milestones)
    if (epoch >= milestone) lr *= spec.lr_factor;
  return lr;
}

std::vector<Image> normalized_images(const LabeledImages& data) {
  std::vector<Image> out;
  out.reserve(data.images.size());
  for (const Image& img : data.images) out.push_back(normalize(img));
  return out;
}

LinearProbe train_probe_on_features(const FeatureMatrix& feats, const std::vector<int>& labels,
                                    int num_classes, const ProbeSpec& spec) {
  spec.validate();
  if (feats.rows != static_cast<int64_t>(labels.size()))
    throw ShapeError("train_probe: feature rows do not match label count");
  if (feats.rows < 1) throw ValidationError("train_probe: empty training set");

  LinearProbe probe;
  probe.feat_dim = feats.cols;
  probe.classes = num_classes;
  SampleRng rng(spec.seed, 0x50524F42ull);  // "PROB"
  probe.classifier = nn::make_linear<float>(feats.cols, num_classes, rng);
  // zero start: linear classifiers need no symmetry breaking and converge
  // much faster inside the short probe budget
  std::fill(probe.classifier.weight->data.begin(), probe.classifier.weight->data.end(), 0.0f);

  // train-split standardization; constant dims collapse to zero
  probe.feat_mean.assign(static_cast<size_t>(feats.cols), 0.0f);
  probe.feat_inv_std.assign(static_cast<size_t>(feats.cols), 0.0f);
  {
    std::vector<double> mu(static_cast<size_t>(feats.cols), 0.0);
    std::vector<double> var(static_cast<size_t>(feats.cols), 0.0);
    for (int64_t i = 0; i < feats.rows; ++i) {
      const float* row = feats.row(i);
      for (int c = 0; c < feats.cols; ++c) mu[static_cast<size_t>(c)] += row[c];
    }
    for (auto& v : mu) v /= static_cast<double>(feats.rows);
    for (int64_t i = 0; i < feats.rows; ++i) {
      const float* row = feats.row(i);
      for (int c = 0; c < feats.cols; ++c) {
        const double d = row[c] - mu[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] += d * d;
      }
    }
    for (int c = 0; c < feats.cols; ++c) {
      probe.feat_mean[static_cast<size_t>(c)] = static_cast<float>(mu[static_cast<size_t>(c)]);
      const double sd = std::sqrt(var[static_cast<size_t>(c)] / static_cast<double>(feats.rows));
      probe.feat_inv_std[static_cast<size_t>(c)] =
          sd > 1e-6 ? static_cast<float>(1.0 / sd) : 0.0f;
    }
  }

  std::vector<nn::NamedParam<float>> params = {{"probe.weight", probe.classifier.weight},
                                               {"probe.bias", probe.classifier.bias}};
  nn::SgdState<float> opt(static_cast<float>(spec.lr_start), static_cast<float>(spec.momentum),
                          static_cast<float>(spec.weight_decay));

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    opt.learning_rate = static_cast<float>(probe_lr_at(spec, epoch));
    const auto perm = epoch_permutation(feats.rows, spec.seed + 0x9E3779B97F4A7C15ull * (epoch + 1));
    double loss_sum = 0.0;
    for (int64_t lo = 0; lo < feats.rows; lo += spec.batch_size) {
      const int64_t hi = std::min<int64_t>(lo + spec.batch_size, feats.rows);
      const int nb = static_cast<int>(hi - lo);
      auto x = nn::make_tensor<float>({nb, feats.cols});
      std::vector<int> y(static_cast<size_t>(nb));
      for (int i = 0; i < nb; ++i) {
        const int64_t idx = perm[static_cast<size_t>(lo + i)];
        probe.standardize_row(feats.row(idx), x->data.data() + static_cast<int64_t>(i) * feats.cols);
        y[static_cast<size_t>(i)] = labels[static_cast<size_t>(idx)];
      }
      auto loss = nn::softmax_cross_entropy(probe.classifier.forward(x), y);
      loss_sum += loss->data[0] * nb;
      nn::zero_grads(params);
      nn::backward(loss);
      nn::sgd_step(params, opt);
    }
    probe.epoch_loss.push_back(loss_sum / static_cast<double>(feats.rows));
  }
  return probe;
}

namespace {

// Resize shorter side to 256, random 224 crop, flip: the large-format
// train-time augmentation. Only defined for 224-input encoders.
Image imagenet_train_view(const Image& img, int input_size, SampleRng& rng) {
  const int short_side = std::min(img.width, img.height);
  const double scale = 256.0 / short_side;
  Image resized = bilinear_resize(img, std::max(input_size, static_cast<int>(std::lround(img.width * scale))),
                                  std::max(input_size, static_cast<int>(std::lround(img.height * scale))));
  const int max_x = resized.width - input_size;
  const int max_y = resized.height - input_size;
  const int x = max_x > 0 ? static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_x) + 1)) : 0;
  const int y = max_y > 0 ? static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_y) + 1)) : 0;
  Image out = crop(resized, IntRect{x, y, input_size, input_size});
  if (rng.uniform() < 0.5) return hflip(out);
  return out;
}

}  // namespace

LinearProbe train_probe(Network<float>& net, const LabeledImages& train, const ProbeSpec& spec) {
  spec.validate();
  auto prepared = normalized_images(train);
  if (!spec.train_augment) {
    FeatureMatrix feats = extract_tap_features_single(net, prepared, spec.tap, spec.target_dim,
                                                      spec.batch_size);
    return train_probe_on_features(feats, train.labels, train.num_classes, spec);
  }

  // Large-format path: fresh augmented views (and thus fresh features) each
  // epoch; the classifier persists across epochs.
  if (net.cfg.input_size != 224)
    throw ValidationError("train_probe: train_augment requires the 224-input encoder");
  LinearProbe probe;
  ProbeSpec one_epoch = spec;
  one_epoch.epochs = 1;
  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    std::vector<Image> views(prepared.size());
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < static_cast<int64_t>(prepared.size()); ++i) {
      SampleRng rng(spec.seed + 0x9E3779B97F4A7C15ull * (epoch + 1), static_cast<uint64_t>(i));
      views[static_cast<size_t>(i)] = imagenet_train_view(prepared[static_cast<size_t>(i)],
                                                          net.cfg.input_size, rng);
    }
    FeatureMatrix feats =
        extract_tap_features_single(net, views, spec.tap, spec.target_dim, spec.batch_size);
    if (epoch == 0) {
      probe = train_probe_on_features(feats, train.labels, train.num_classes, one_epoch);
    } else {
      // continue training the existing classifier at the scheduled lr
      std::vector<nn::NamedParam<float>> params = {{"probe.weight", probe.classifier.weight},
                                                   {"probe.bias", probe.classifier.bias}};
      nn::SgdState<float> opt(static_cast<float>(probe_lr_at(spec, epoch)),
                              static_cast<float>(spec.momentum),
                              static_cast<float>(spec.weight_decay));
      const auto perm =
          epoch_permutation(feats.rows, spec.seed + 0x9E3779B97F4A7C15ull * (epoch + 1));
      double loss_sum = 0.0;
      for (int64_t lo = 0; lo < feats.rows; lo += spec.batch_size) {
        const int64_t hi = std::min<int64_t>(lo + spec.batch_size, feats.rows);
        const int nb = static_cast<int>(hi - lo);
        auto x = nn::make_tensor<float>({nb, feats.cols});
        std::vector<int> y(static_cast<size_t>(nb));
        for (int i = 0; i < nb; ++i) {
          const int64_t idx = perm[static_cast<size_t>(lo + i)];
          std::copy_n(feats.row(idx), feats.cols,
                      x->data.data() + static_cast<int64_t>(i) * feats.cols);
          y[static_cast<size_t>(i)] = train.labels[static_cast<size_t>(idx)];
        }
        auto loss = nn::softmax_cross_entropy(probe.classifier.forward(x), y);
        loss_sum += loss->data[0] * nb;
        nn::zero_grads(params);
        nn::backward(loss);
        nn::sgd_step(params, opt);
      }
      probe.epoch_loss.push_back(loss_sum / static_cast<double>(feats.rows));
    }
  }
  return probe;
}

double eval_probe_on_features(const LinearProbe& probe, const FeatureMatrix& feats,
                              const std::vector<int>& labels) {
  if (feats.rows != static_cast<int64_t>(labels.size()) || feats.rows < 1)
    throw ValidationError("eval_probe: feature rows do not match label count");
  int64_t correct = 0;
  const int batch = 256;
  for (int64_t lo = 0; lo < feats.rows; lo += batch) {
    const int64_t hi = std::min<int64_t>(lo + batch, feats.rows);
    const int nb = static_cast<int>(hi - lo);
    auto x = nn::make_tensor<float>({nb, feats.cols});
    for (int i = 0; i < nb; ++i)
      probe.standardize_row(feats.row(lo + i), x->data.data() + static_cast<int64_t>(i) * feats.cols);
    auto logits = probe.classifier.forward(x);
    for (int i = 0; i < nb; ++i) {
      const float* row = logits->data.data() + static_cast<int64_t>(i) * probe.classes;
      int best = 0;
      for (int c = 1; c < probe.classes; ++c)
        if (row[c] > row[best]) best = c;
      if (best == labels[static_cast<size_t>(lo + i)]) ++correct;
    }
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(feats.rows);
}

double eval_probe(Network<float>& net, const LinearProbe& probe, const LabeledImages& val,
                  const ProbeSpec& spec) {
  auto prepared = normalized_images(val);
  FeatureMatrix feats =
      extract_tap_features_single(net, prepared, spec.tap, spec.target_dim, spec.batch_size);
  return eval_probe_on_features(probe, feats, val.labels);
}

// ---------------------------------------------------------------------------
// 10-crop evaluation
// ---------------------------------------------------------------------------

std::vector<Image> ten_crops(const Image& img, int crop_size) {
  if (crop_size > img.width || crop_size > img.height)
    throw ValidationError("ten_crops: crop size exceeds image");
  const int mx = img.width - crop_size, my = img.height - crop_size;
  const IntRect corners[5] = {{0, 0, crop_size, crop_size},
                              {mx, 0, crop_size, crop_size},
                              {0, my, crop_size, crop_size},
                              {mx, my, crop_size, crop_size},
                              {mx / 2, my / 2, crop_size, crop_size}};
  std::vector<Image> out;
  out.reserve(10);
  for (const auto& rect : corners) {
    Image c = crop(img, rect);
    out.push_back(c);
    out.push_back(hflip(c));
  }
  return out;
}

double ten_crop_eval(Network<float>& net, const LinearProbe& probe, const LabeledImages& val,
                     const ProbeSpec& spec) {
  if (val.size() < 1) throw ValidationError("ten_crop_eval: empty validation set");
  const int crop_size = net.cfg.input_size;
  int64_t correct = 0;
  std::vector<Image> crops;
  for (size_t i = 0; i < val.size(); ++i) {
    crops = ten_crops(normalize(val.images[i]), crop_size);
    FeatureMatrix feats = extract_tap_features_single(net, crops, spec.tap, spec.target_dim, 10);
    auto x = nn::make_tensor<float>({10, feats.cols});
    for (int r = 0; r < 10; ++r)
      probe.standardize_row(feats.row(r), x->data.data() + static_cast<int64_t>(r) * feats.cols);
    auto logits = probe.classifier.forward(x);
    std::vector<float> probs(static_cast<size_t>(10) * probe.classes);
    nn::softmax_rows(logits->data.data(), 10, probe.classes, probs.data());
    std::vector<double> mean_scores(static_cast<size_t>(probe.classes), 0.0);
    for (int c = 0; c < 10; ++c)
      for (int k = 0; k < probe.classes; ++k)
        mean_scores[static_cast<size_t>(k)] += probs[static_cast<size_t>(c) * probe.classes + k] / 10.0;
    int best = 0;
    for (int k = 1; k < probe.classes; ++k)
      if (mean_scores[static_cast<size_t>(k)] > mean_scores[static_cast<size_t>(best)]) best = k;
    if (best == val.labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(val.size());
}

// ---------------------------------------------------------------------------
// Frozen-prefix finetuning
// ---------------------------------------------------------------------------

FinetuneResult finetune_frozen(Network<float>& net, int k_frozen, const LabeledImages& train,
                               const LabeledImages& test, const TrainHyper& hyper) {
  hyper.validate();
  if (train.size() < 1 || test.size() < 1)
    throw ValidationError("finetune_frozen: empty train or test split");
  freeze_prefix(net, k_frozen);
  net.reinit_head(train.num_classes, mix_seed_local(net.init_seed, 0xF17Eull));
  net.training = true;
  auto params = net.parameters();
  nn::SgdState<float> opt(static_cast<float>(hyper.lr), static_cast<float>(hyper.momentum),
                          static_cast<float>(hyper.weight_decay));

  auto prepared = normalized_images(train);
  FinetuneResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto perm = epoch_permutation(static_cast<int64_t>(prepared.size()),
                                        hyper.epoch_seed + 0x9E3779B97F4A7C15ull * (epoch + 1));
    double loss_sum = 0.0;
    for (size_t lo = 0; lo < prepared.size(); lo += static_cast<size_t>(hyper.batch_size)) {
      const size_t hi = std::min(lo + static_cast<size_t>(hyper.batch_size), prepared.size());
      std::vector<Image> batch_imgs;
      std::vector<int> y;
      batch_imgs.reserve(hi - lo);
      for (size_t i = lo; i < hi; ++i) {
        batch_imgs.push_back(prepared[static_cast<size_t>(perm[i])]);
        y.push_back(train.labels[static_cast<size_t>(perm[i])]);
      }
      auto loss = nn::softmax_cross_entropy(net.forward(images_to_tensor(batch_imgs)), y);
      if (!std::isfinite(loss->data[0]))
        throw TrainingError("finetune: loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss->data[0] * static_cast<double>(hi - lo);
      nn::zero_grads(params);
      nn::backward(loss);
      nn::sgd_step(params, opt);
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(prepared.size()));
  }

  // final top-1 on the test split (single full-image view)
  net.training = false;
  auto test_imgs = normalized_images(test);
  int64_t correct = 0;
  for (size_t lo = 0; lo < test_imgs.size(); lo += 256) {
    const size_t hi = std::min(lo + 256, test_imgs.size());
    std::vector<Image> slice(test_imgs.begin() + static_cast<int64_t>(lo),
                             test_imgs.begin() + static_cast<int64_t>(hi));
    auto logits = net.forward(images_to_tensor(slice));
    const int k = logits->dim(1);
    for (size_t i = lo; i < hi; ++i) {
      const float* row = logits->data.data() + static_cast<int64_t>(i - lo) * k;
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (row[c] > row[best]) best = c;
      if (best == test.labels[i]) ++correct;
    }
  }
  result.top1 = 100.0 * static_cast<double>(correct) / static_cast<double>(test_imgs.size());
  return result;
}

// ---------------------------------------------------------------------------
// ProbeReport serialization
// ---------------------------------------------------------------------------

std::string ProbeReport::to_json_string() const {
  json j;
  j["method"] = method;
  j["n_sources"] = n_sources;
  j["tap_accuracy"] = tap_accuracy;
  j["crop_protocol"] = crop_protocol;
  j["seeds"] = {{"data_seed", data_seed}, {"model_seed", model_seed}, {"epoch_seed", epoch_seed}};
  j["config_hash"] = config_hash;
  j["wall_clock_sec"] = wall_clock_sec;
  return j.dump(2);
}

ProbeReport ProbeReport::from_json_string(const std::string& s) {
  json j = json::parse(s, nullptr, false);
  if (j.is_discarded()) throw FormatError("probe report: invalid JSON");
  ProbeReport r;
  r.method = j.at("method").get<std::string>();
  r.n_sources = j.at("n_sources").get<int>();
  r.tap_accuracy = j.at("tap_accuracy").get<std::map<std::string, double>>();
  r.crop_protocol = j.at("crop_protocol").get<std::string>();
  r.data_seed = j.at("seeds").at("data_seed").get<uint64_t>();
  r.model_seed = j.at("seeds").at("model_seed").get<uint64_t>();
  r.epoch_seed = j.at("seeds").at("epoch_seed").get<uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.wall_clock_sec = j.at("wall_clock_sec").get<double>();
  return r;
}

std::string ProbeReport::csv_header(const std::vector<std::string>& taps) {
  std::ostringstream os;
  os << "method,N";
  for (const auto& t : taps) os << "," << t;
  return os.str();
}

std::string ProbeReport::csv_row(const std::vector<std::string>& taps) const {
  std::ostringstream os;
  os << method << "," << n_sources;
  os.setf(std::ios::fixed);
  os.precision(2);
  for (const auto& t : taps) {
    auto it = tap_accuracy.find(t);
    os << ",";
    if (it != tap_accuracy.end()) os << it->second;
  }
  return os.str();
}

}  // namespace mono
