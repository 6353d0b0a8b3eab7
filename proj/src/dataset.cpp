#include "mono/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>

#include "mono/error.hpp"
#include "mono/hash.hpp"

namespace mono {

// ---------------------------------------------------------------------------
// sha256 (OpenSSL EVP)
// ---------------------------------------------------------------------------

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
};

Sha256::Sha256() : impl_(new Impl) {
  impl_->ctx = EVP_MD_CTX_new();
  if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: init failed");
}

Sha256::~Sha256() {
  if (impl_ && impl_->ctx) EVP_MD_CTX_free(impl_->ctx);
}

void Sha256::update(const void* data, size_t n) {
  if (EVP_DigestUpdate(impl_->ctx, data, n) != 1) throw Error("sha256: update failed");
}

std::string Sha256::hex_digest() {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(impl_->ctx, md, &len) != 1) throw Error("sha256: final failed");
  static const char* hexc = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hexc[md[i] >> 4]);
    out.push_back(hexc[md[i] & 0xF]);
  }
  return out;
}

std::string sha256_hex(const void* data, size_t n) {
  Sha256 h;
  h.update(data, n);
  return h.hex_digest();
}

std::string sha256_hex(const std::string& s) { return sha256_hex(s.data(), s.size()); }

std::string sha256_file_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("sha256: cannot open " + path);
  Sha256 h;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) h.update(buf, static_cast<size_t>(in.gcount()));
  }
  return h.hex_digest();
}

// ---------------------------------------------------------------------------
// SynthDataset
// ---------------------------------------------------------------------------

void SynthDataset::validate() const {
  if (sources.images.empty()) throw ValidationError("dataset: need at least one source image");
  for (size_t i = 0; i < sources.images.size(); ++i)
    if (sources.images[i].empty())
      throw ValidationError("dataset: source image " + std::to_string(i) + " is empty");
  if (d < static_cast<int64_t>(sources.images.size()))
    throw ValidationError("dataset: d must be >= N (d=" + std::to_string(d) +
                          ", N=" + std::to_string(sources.images.size()) + ")");
  cfg.validate();
}

namespace {

Image center_square_patch(const Image& src, int target_size) {
  const int side = std::min(src.width, src.height);
  const IntRect rect{(src.width - side) / 2, (src.height - side) / 2, side, side};
  return bilinear_resize(normalize(crop(src, rect)), target_size, target_size);
}

}  // namespace

Image get_sample(const SynthDataset& ds, int64_t i) {
  const int64_t n = static_cast<int64_t>(ds.sources.size());
  if (i < 0 || i >= ds.d)
    throw ValidationError("get_sample: index " + std::to_string(i) + " out of range [0," +
                          std::to_string(ds.d) + ")");
  if (i < n) return center_square_patch(ds.sources.images[static_cast<size_t>(i)], ds.cfg.target_size);
  SampleRng rng(ds.seed, static_cast<uint64_t>(i));
  return augment_sample(ds.sources.images[static_cast<size_t>(i % n)], rng, ds.cfg);
}

std::vector<int64_t> epoch_permutation(int64_t d, uint64_t epoch_seed) {
  std::vector<int64_t> perm(static_cast<size_t>(d));
  for (int64_t i = 0; i < d; ++i) perm[static_cast<size_t>(i)] = i;
  SampleRng rng(epoch_seed, 0x45504F43ull);  // "EPOC"
  for (int64_t i = d - 1; i > 0; --i) {
    const auto j = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(i) + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

nn::TensorPtr<float> images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw ValidationError("images_to_tensor: empty batch");
  const int h = imgs[0].height, w = imgs[0].width;
  auto t = nn::make_tensor<float>({static_cast<int>(imgs.size()), 3, h, w});
  for (size_t n = 0; n < imgs.size(); ++n) {
    const Image& img = imgs[n];
    if (img.height != h || img.width != w)
      throw ShapeError("images_to_tensor: inconsistent image sizes in batch");
    float* base = t->data.data() + n * 3 * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const float* p = img.at(x, y);
        for (int c = 0; c < 3; ++c) base[(c * h + y) * w + x] = p[c];
      }
  }
  return t;
}

// ---------------------------------------------------------------------------
// BatchStream: bounded window of async batch builders, consumed in order.
// ---------------------------------------------------------------------------

struct BatchStream::Impl {
  const SynthDataset& ds;
  std::vector<int64_t> perm;
  int batch_size;
  int workers;
  int64_t next_to_launch = 0;
  int64_t next_to_deliver = 0;
  std::deque<std::future<Batch>> window;

  Impl(const SynthDataset& d, int bs, uint64_t epoch_seed, int w)
      : ds(d), perm(epoch_permutation(d.d, epoch_seed)), batch_size(bs), workers(std::max(w, 1)) {}

  Batch build(int64_t batch_idx) const {
    const int64_t lo = batch_idx * batch_size;
    const int64_t hi = std::min<int64_t>(lo + batch_size, ds.d);
    Batch b;
    b.indices.assign(perm.begin() + lo, perm.begin() + hi);
    std::vector<Image> imgs;
    imgs.reserve(b.indices.size());
    for (int64_t idx : b.indices) imgs.push_back(get_sample(ds, idx));
    b.images = images_to_tensor(imgs);
    return b;
  }

  void fill(int64_t total) {
    while (next_to_launch < total &&
           window.size() < static_cast<size_t>(workers)) {
      const int64_t bi = next_to_launch++;
      auto policy = workers > 1 ? std::launch::async : std::launch::deferred;
      window.push_back(std::async(policy, [this, bi] { return build(bi); }));
    }
  }
};

BatchStream::BatchStream(const SynthDataset& ds, int batch_size, uint64_t epoch_seed, int workers)
    : impl_(new Impl(ds, batch_size, epoch_seed, workers)) {
  if (batch_size < 1) throw ValidationError("iterate_epoch: batch_size must be >= 1");
  ds.validate();
  num_batches_ = (ds.d + batch_size - 1) / batch_size;
}

BatchStream::~BatchStream() = default;

std::optional<Batch> BatchStream::next() {
  if (impl_->next_to_deliver >= num_batches_) return std::nullopt;
  impl_->fill(num_batches_);
  Batch b = impl_->window.front().get();
  impl_->window.pop_front();
  ++impl_->next_to_deliver;
  impl_->fill(num_batches_);
  return b;
}

// ---------------------------------------------------------------------------

std::string dataset_checksum(const SynthDataset& ds) {
  ds.validate();
  Sha256 hash;
  const int64_t chunk = 256;
  std::vector<std::vector<uint8_t>> quantized(static_cast<size_t>(chunk));
  for (int64_t lo = 0; lo < ds.d; lo += chunk) {
    const int64_t hi = std::min(lo + chunk, ds.d);
#pragma omp parallel for schedule(static)
    for (int64_t i = lo; i < hi; ++i) {
      Image img = get_sample(ds, i);
      auto& bytes = quantized[static_cast<size_t>(i - lo)];
      bytes.resize(img.pixels.size());
      for (size_t k = 0; k < img.pixels.size(); ++k)
        bytes[k] = quantize_byte(img.pixels[k], img.range_lo, img.range_hi);
    }
    for (int64_t i = lo; i < hi; ++i) {
      const auto& bytes = quantized[static_cast<size_t>(i - lo)];
      hash.update(bytes.data(), bytes.size());
    }
  }
  return hash.hex_digest();
}

void dump_samples(const SynthDataset& ds, const std::string& dir, int count, int64_t stride) {
  ds.validate();
  if (count < 0) throw ValidationError("dump_samples: count must be >= 0");
  if (stride < 1) throw ValidationError("dump_samples: stride must be >= 1");
  if (count == 0) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("dump_samples: cannot create directory " + dir + ": " + ec.message());
  for (int k = 0; k < count; ++k) {
    const int64_t idx = (static_cast<int64_t>(k) * stride) % ds.d;
    Image img = get_sample(ds, idx);
    char name[64];
    std::snprintf(name, sizeof(name), "sample_%06d.png", k);
    save_png((std::filesystem::path(dir) / name).string(), img);
  }
}

// ---------------------------------------------------------------------------
// CIFAR binary format
// ---------------------------------------------------------------------------

LabeledImages load_cifar_file(const std::string& path, int label_bytes, int label_index,
                              int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_cifar: cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<int64_t>(in.tellg());
  in.seekg(0);
  const int64_t record = label_bytes + 3072;
  if (file_size <= 0 || file_size % record != 0)
    throw IoError("load_cifar: " + path + " size " + std::to_string(file_size) +
                  " is not a multiple of the record size " + std::to_string(record));
  const int64_t n = file_size / record;
  LabeledImages out;
  out.num_classes = num_classes;
  out.images.reserve(static_cast<size_t>(n));
  out.labels.reserve(static_cast<size_t>(n));
  std::vector<uint8_t> buf(static_cast<size_t>(record));
  for (int64_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), record);
    if (in.gcount() != record) throw IoError("load_cifar: truncated read in " + path);
    const int label = buf[static_cast<size_t>(label_index)];
    if (label < 0 || label >= num_classes)
      throw IoError("load_cifar: label " + std::to_string(label) + " out of range in " + path);
    Image img(32, 32);
    const uint8_t* planes = buf.data() + label_bytes;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          img.at(x, y)[c] = static_cast<float>(planes[(c * 32 + y) * 32 + x]) / 255.0f;
    out.images.push_back(std::move(img));
    out.labels.push_back(label);
  }
  return out;
}

CifarData load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  CifarData data;
  bool any = false;
  for (int b = 1; b <= 5; ++b) {
    const fs::path p = fs::path(dir) / ("data_batch_" + std::to_string(b) + ".bin");
    if (!fs::exists(p)) continue;
    LabeledImages part = load_cifar_file(p.string());
    any = true;
    data.train.images.insert(data.train.images.end(),
                             std::make_move_iterator(part.images.begin()),
                             std::make_move_iterator(part.images.end()));
    data.train.labels.insert(data.train.labels.end(), part.labels.begin(), part.labels.end());
  }
  if (!any) throw IoError("load_cifar10: no data_batch_*.bin found under " + dir);
  const fs::path test_path = fs::path(dir) / "test_batch.bin";
  if (fs::exists(test_path)) data.test = load_cifar_file(test_path.string());
  return data;
}

void save_cifar_file(const std::string& path, const LabeledImages& data) {
  if (data.images.size() != data.labels.size())
    throw ValidationError("save_cifar: image/label count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_cifar: cannot open " + path + " for writing");
  std::vector<uint8_t> buf(1 + 3072);
  for (size_t i = 0; i < data.images.size(); ++i) {
    const Image& img = data.images[i];
    if (img.width != 32 || img.height != 32)
      throw ValidationError("save_cifar: images must be 32x32");
    buf[0] = static_cast<uint8_t>(data.labels[i]);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          buf[1 + (c * 32 + y) * 32 + x] = quantize_byte(img.at(x, y)[c], img.range_lo, img.range_hi);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw IoError("save_cifar: write failed for " + path);
}

}  // namespace mono
