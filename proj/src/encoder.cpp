#include "mono/encoder.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace mono {

using nlohmann::json;

EncoderConfig EncoderConfig::small_alexnet(int input_size, int head_classes,
                                           std::vector<int> widths) {
  EncoderConfig cfg;
  cfg.variant = Variant::kSmallAlexNet;
  cfg.input_size = input_size;
  cfg.widths = std::move(widths);
  cfg.head_classes = head_classes;
  return cfg;
}

EncoderConfig EncoderConfig::alexnet_bn(int input_size, int head_classes, std::vector<int> widths) {
  EncoderConfig cfg;
  cfg.variant = Variant::kAlexNetBN;
  cfg.input_size = input_size;
  cfg.widths = std::move(widths);
  cfg.head_classes = head_classes;
  return cfg;
}

std::string EncoderConfig::variant_name() const {
  return variant == Variant::kSmallAlexNet ? "SmallAlexNet" : "AlexNetBN";
}

void EncoderConfig::validate() const {
  const size_t expected = variant == Variant::kSmallAlexNet ? 4 : 5;
  if (widths.size() != expected)
    throw ValidationError("encoder.widths: " + variant_name() + " needs " +
                          std::to_string(expected) + " block widths, got " +
                          std::to_string(widths.size()));
  for (int w : widths)
    if (w < 1) throw ValidationError("encoder.widths: widths must be positive");
  if (input_size < 1) throw ValidationError("encoder.input_size: must be positive");
  if (head_classes < 1) throw ValidationError("encoder.head_classes: must be positive");
  const auto dims = encoder_dims(*this);
  for (size_t b = 0; b < dims.tap_spatial.size(); ++b)
    if (dims.tap_spatial[b] < 1)
      throw ValidationError("encoder.input_size: " + std::to_string(input_size) +
                            " collapses block " + std::to_string(b + 1) + " to zero size");
}

std::vector<BlockSpec> block_specs(const EncoderConfig& cfg) {
  std::vector<BlockSpec> specs;
  if (cfg.variant == EncoderConfig::Variant::kSmallAlexNet) {
    specs = {{7, 3, 0, false}, {5, 2, 2, false}, {3, 2, 1, false}, {3, 1, 1, false}};
  } else {
    specs = {{11, 4, 2, true}, {5, 1, 2, true}, {3, 1, 1, false}, {3, 1, 1, false}, {3, 1, 1, true}};
  }
  return specs;
}

EncoderDims encoder_dims(const EncoderConfig& cfg) {
  EncoderDims dims;
  int s = cfg.input_size;
  const auto specs = block_specs(cfg);
  for (size_t b = 0; b < specs.size(); ++b) {
    s = (s + 2 * specs[b].pad - specs[b].kernel) / specs[b].stride + 1;
    dims.tap_spatial.push_back(s);
    if (s < 1) return dims;
    if (specs[b].pool) s = (s - specs[b].pool_k) / specs[b].pool_stride + 1;
  }
  dims.feature_dim = cfg.widths.empty() ? 0 : cfg.widths.back() * s * s;
  return dims;
}

std::string EncoderConfig::to_json_string() const {
  json j;
  j["variant"] = variant_name();
  j["input_size"] = input_size;
  j["widths"] = widths;
  j["head_classes"] = head_classes;
  return j.dump();
}

EncoderConfig EncoderConfig::from_json_string(const std::string& s) {
  json j = json::parse(s, nullptr, false);
  if (j.is_discarded()) throw FormatError("encoder config: invalid JSON");
  EncoderConfig cfg;
  const std::string name = j.at("variant").get<std::string>();
  if (name == "SmallAlexNet")
    cfg.variant = Variant::kSmallAlexNet;
  else if (name == "AlexNetBN")
    cfg.variant = Variant::kAlexNetBN;
  else
    throw FormatError("encoder config: unknown variant '" + name + "'");
  cfg.input_size = j.at("input_size").get<int>();
  cfg.widths = j.at("widths").get<std::vector<int>>();
  cfg.head_classes = j.at("head_classes").get<int>();
  return cfg;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'P', 'C', 'K'};
constexpr char kEndMagic[4] = {'K', 'C', 'P', 'M'};
constexpr uint32_t kVersion = 1;

void write_blob(std::ofstream& out, const std::vector<float>& v) {
  const uint64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * 4));
}

std::vector<float> read_blob(std::ifstream& in, const std::string& path) {
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n > (1ull << 32)) throw FormatError("checkpoint: truncated blob header in " + path);
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * 4));
  if (!in) throw FormatError("checkpoint: truncated blob data in " + path);
  return v;
}

void assign_blob(const nn::TensorPtr<float>& t, std::vector<float> v, const std::string& what,
                 const std::string& path) {
  if (static_cast<int64_t>(v.size()) != t->numel())
    throw FormatError("checkpoint: " + what + " has " + std::to_string(v.size()) +
                      " values, expected " + std::to_string(t->numel()) + " in " + path);
  t->data = std::move(v);
}

}  // namespace

void save_checkpoint(const Network<float>& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));

  json meta;
  meta["config"] = json::parse(net.cfg.to_json_string());
  meta["init_seed"] = net.init_seed;
  meta["frozen_blocks"] = net.frozen_blocks;
  meta["has_batchnorm"] = static_cast<bool>(net.bns[0].has_value());
  const std::string header = meta.dump();
  const uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(hlen));

  for (int b = 0; b < net.num_blocks(); ++b) {
    write_blob(out, net.convs[b].weight->data);
    write_blob(out, net.convs[b].bias->data);
    if (net.bns[b]) {
      write_blob(out, net.bns[b]->scale->data);
      write_blob(out, net.bns[b]->shift->data);
      write_blob(out, net.bns[b]->running_mean);
      write_blob(out, net.bns[b]->running_var);
    }
  }
  write_blob(out, net.head.weight->data);
  write_blob(out, net.head.bias->data);
  out.write(kEndMagic, 4);
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

Network<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1ull << 24)) throw FormatError("checkpoint: bad header length in " + path);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw FormatError("checkpoint: truncated header in " + path);

  json meta = json::parse(header, nullptr, false);
  if (meta.is_discarded()) throw FormatError("checkpoint: corrupt header JSON in " + path);
  EncoderConfig cfg = EncoderConfig::from_json_string(meta.at("config").dump());
  const bool has_bn = meta.at("has_batchnorm").get<bool>();

  // Stage into a fresh network; nothing is returned until every blob and the
  // end marker parse.
  Network<float> net = build_encoder<float>(cfg, meta.at("init_seed").get<uint64_t>());
  net.frozen_blocks = meta.at("frozen_blocks").get<int>();
  for (int b = 0; b < net.num_blocks(); ++b) {
    const std::string tag = std::to_string(b + 1);
    assign_blob(net.convs[b].weight, read_blob(in, path), "conv" + tag + ".weight", path);
    assign_blob(net.convs[b].bias, read_blob(in, path), "conv" + tag + ".bias", path);
    if (has_bn) {
      assign_blob(net.bns[b]->scale, read_blob(in, path), "bn" + tag + ".scale", path);
      assign_blob(net.bns[b]->shift, read_blob(in, path), "bn" + tag + ".shift", path);
      auto rm = read_blob(in, path);
      auto rv = read_blob(in, path);
      if (rm.size() != net.bns[b]->running_mean.size() ||
          rv.size() != net.bns[b]->running_var.size())
        throw FormatError("checkpoint: bn" + tag + " running stats size mismatch in " + path);
      net.bns[b]->running_mean = std::move(rm);
      net.bns[b]->running_var = std::move(rv);
    } else {
      net.bns[b].reset();
    }
  }
  assign_blob(net.head.weight, read_blob(in, path), "head.weight", path);
  assign_blob(net.head.bias, read_blob(in, path), "head.bias", path);
  char end[4];
  in.read(end, 4);
  if (!in || std::memcmp(end, kEndMagic, 4) != 0)
    throw FormatError("checkpoint: missing end marker (truncated?) in " + path);
  return net;
}

Network<float> load_checkpoint(const std::string& path, const EncoderConfig& expect) {
  Network<float> net = load_checkpoint(path);
  if (!(net.cfg == expect))
    throw FormatError("checkpoint: config mismatch for " + path + "\n  stored:   " +
                      net.cfg.to_json_string() + "\n  expected: " + expect.to_json_string());
  return net;
}

}  // namespace mono
