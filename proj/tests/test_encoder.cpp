#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mono/encoder.hpp"
#include "mono/rng.hpp"

using namespace mono;
namespace fs = std::filesystem;

namespace {

nn::TensorPtr<float> random_batch(int n, int s, uint64_t seed) {
  SampleRng rng(seed);
  auto t = nn::make_tensor<float>({n, 3, s, s});
  for (auto& v : t->data) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

std::string temp_file(const std::string& tag) {
  return (fs::temp_directory_path() / ("mono_enc_" + tag + ".ckpt")).string();
}

}  // namespace

TEST_CASE("SmallAlexNet tap spatial sizes follow the size formula") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto dims = encoder_dims(cfg);
  // floor((32-7)/3)+1 = 9 with pad 0, then 5, 3, 3 with pads 2,1,1
  CHECK(dims.tap_spatial == std::vector<int>({9, 5, 3, 3}));
  CHECK(dims.feature_dim == 256 * 3 * 3);

  auto net = build_encoder<float>(cfg, 1);
  auto r = net.forward_with_taps(random_batch(2, 32, 5));
  REQUIRE(r.taps.size() == 4);
  CHECK(r.taps.at("conv1")->shape == std::vector<int>({2, 64, 9, 9}));
  CHECK(r.taps.at("conv4")->shape == std::vector<int>({2, 256, 3, 3}));
  CHECK(r.logits->shape == std::vector<int>({2, 4}));
}

TEST_CASE("AlexNetBN at 224 has the standard five tap shapes") {
  auto cfg = EncoderConfig::alexnet_bn(224);
  auto dims = encoder_dims(cfg);
  CHECK(dims.tap_spatial == std::vector<int>({55, 27, 13, 13, 13}));
  CHECK(dims.feature_dim == 256 * 6 * 6);
  auto net = build_encoder<float>(cfg, 2);
  CHECK(net.tap_names() == std::vector<std::string>({"conv1", "conv2", "conv3", "conv4", "conv5"}));
}

TEST_CASE("same init seed gives bit-identical parameters") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto a = build_encoder<float>(cfg, 77);
  auto b = build_encoder<float>(cfg, 77);
  auto c = build_encoder<float>(cfg, 78);
  auto pa = a.all_parameters(), pb = b.all_parameters(), pc = c.all_parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor->data == pb[i].tensor->data);
  CHECK(pa[0].tensor->data != pc[0].tensor->data);
}

TEST_CASE("zero input in eval mode gives zero conv1 activation") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto net = build_encoder<float>(cfg, 3);
  net.training = false;
  auto zero = nn::make_tensor<float>({1, 3, 32, 32});
  auto r = net.forward_with_taps(zero);
  for (float v : r.taps.at("conv1")->data) CHECK(v == 0.0f);  // relu(bn(0)) with zero bias/shift
}

TEST_CASE("capturing taps does not change the head output") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto net = build_encoder<float>(cfg, 4);
  auto batch = random_batch(3, 32, 9);
  auto with_taps = net.forward_with_taps(batch);
  auto plain = net.forward(batch);
  CHECK(with_taps.logits->data == plain->data);
}

TEST_CASE("freeze_prefix excludes the first k blocks from optimization") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto net = build_encoder<float>(cfg, 5);
  net.training = true;

  freeze_prefix(net, 2);
  auto frozen_before = std::make_pair(net.convs[0].weight->data, net.convs[1].weight->data);
  auto conv3_before = net.convs[2].weight->data;

  auto params = net.parameters();
  for (const auto& p : params) CHECK(p.name.find("1.") == std::string::npos);

  auto batch = random_batch(4, 32, 10);
  nn::SgdState<float> opt(0.05f, 0.9f, 0.0f);
  nn::zero_grads(params);
  auto logits = net.forward(batch);
  nn::backward(nn::softmax_cross_entropy(logits, {0, 1, 2, 3}));
  nn::sgd_step(params, opt);

  CHECK(net.convs[0].weight->data == frozen_before.first);
  CHECK(net.convs[1].weight->data == frozen_before.second);
  CHECK(net.convs[2].weight->data != conv3_before);
  // frozen batchnorm keeps its running stats
  CHECK(net.bns[0]->running_mean == std::vector<float>(64, 0.0f));
  CHECK(net.bns[2]->running_mean != std::vector<float>(256, 0.0f));
}

TEST_CASE("freeze_prefix k=K leaves only the head trainable") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto net = build_encoder<float>(cfg, 6);
  freeze_prefix(net, net.num_blocks());
  auto params = net.parameters();
  REQUIRE(params.size() == 2);
  CHECK(params[0].name == "head.weight");
  CHECK_THROWS_AS(freeze_prefix(net, 5), ValidationError);
  CHECK_THROWS_AS(freeze_prefix(net, -1), ValidationError);
}

TEST_CASE("checkpoint round trip restores forward outputs bitwise") {
  auto cfg = EncoderConfig::small_alexnet(32);
  auto net = build_encoder<float>(cfg, 7);
  net.training = true;
  // perturb state away from init: one training step + bn stats movement
  auto params = net.parameters();
  nn::SgdState<float> opt(0.01f, 0.9f, 1e-4f);
  nn::zero_grads(params);
  nn::backward(nn::softmax_cross_entropy(net.forward(random_batch(4, 32, 11)), {0, 1, 2, 3}));
  nn::sgd_step(params, opt);
  net.training = false;

  const std::string path = temp_file("roundtrip");
  save_checkpoint(net, path);
  auto loaded = load_checkpoint(path);
  CHECK(loaded.init_seed == net.init_seed);
  auto batch = random_batch(2, 32, 12);
  CHECK(loaded.forward(batch)->data == net.forward(batch)->data);
}

TEST_CASE("loading into the wrong variant is rejected with a config diff") {
  auto net = build_encoder<float>(EncoderConfig::small_alexnet(32), 8);
  const std::string path = temp_file("variant");
  save_checkpoint(net, path);
  CHECK_THROWS_WITH_AS(load_checkpoint(path, EncoderConfig::alexnet_bn(224)),
                       doctest::Contains("config mismatch"), FormatError);
  // matching config loads fine
  auto ok = load_checkpoint(path, EncoderConfig::small_alexnet(32));
  CHECK(ok.cfg == net.cfg);
}

TEST_CASE("truncated checkpoint raises a format error and returns nothing") {
  auto net = build_encoder<float>(EncoderConfig::small_alexnet(32), 9);
  const std::string path = temp_file("trunc");
  save_checkpoint(net, path);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 8);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  fs::resize_file(path, full / 2);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("eval-mode forward is deterministic") {
  auto net = build_encoder<float>(EncoderConfig::small_alexnet(32), 10);
  net.training = false;
  auto batch = random_batch(2, 32, 13);
  CHECK(net.forward(batch)->data == net.forward(batch)->data);
}

TEST_CASE("reinit_head changes class count and keeps the body") {
  auto net = build_encoder<float>(EncoderConfig::small_alexnet(32), 11);
  auto conv1 = net.convs[0].weight->data;
  net.reinit_head(13, 99);
  CHECK(net.head.weight->shape == std::vector<int>({13, 256 * 3 * 3}));
  CHECK(net.convs[0].weight->data == conv1);
  auto logits = net.forward(random_batch(1, 32, 14));
  CHECK(logits->shape == std::vector<int>({1, 13}));
}
