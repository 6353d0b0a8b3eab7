#include "mono/pretext.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "mono/error.hpp"

namespace mono {

using RowMatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  return seed + 0x9E3779B97F4A7C15ull * (salt + 1);
}

int argmax_row(const float* row, int k) {
  int best = 0;
  for (int i = 1; i < k; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace

void TrainHyper::validate() const {
  if (epochs < 1) throw ValidationError("pretrain.epochs: must be >= 1");
  if (batch_size < 1) throw ValidationError("pretrain.batch_size: must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("pretrain.lr: must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("pretrain.momentum: must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("pretrain.weight_decay: must be >= 0");
  if (workers < 1) throw ValidationError("pretrain.workers: must be >= 1");
}

RotBatch make_rot_batch(const std::vector<Image>& patches) {
  if (patches.empty()) throw ValidationError("make_rot_batch: empty patch list");
  std::vector<Image> rotated;
  rotated.reserve(patches.size() * 4);
  RotBatch out;
  out.labels.reserve(patches.size() * 4);
  for (const Image& p : patches) {
    if (p.width != p.height)
      throw ValidationError("make_rot_batch: patches must be square, got " +
                            std::to_string(p.width) + "x" + std::to_string(p.height));
    for (int q = 0; q < 4; ++q) {
      rotated.push_back(rot90(p, q));
      out.labels.push_back(q);
    }
  }
  out.images = images_to_tensor(rotated);
  return out;
}

// ---------------------------------------------------------------------------
// RotNet
// ---------------------------------------------------------------------------

namespace {

// Non-scaled random crop (replicate-padded translation) plus horizontal flip.
Image rotnet_native_augment(const Image& img, SampleRng& rng, int pad = 2) {
  const int dx = static_cast<int>(rng.uniform_int(2 * pad + 1)) - pad;
  const int dy = static_cast<int>(rng.uniform_int(2 * pad + 1)) - pad;
  Image out(img.width, img.height);
  out.range_lo = img.range_lo;
  out.range_hi = img.range_hi;
  for (int y = 0; y < img.height; ++y) {
    const int sy = std::clamp(y + dy, 0, img.height - 1);
    for (int x = 0; x < img.width; ++x) {
      const int sx = std::clamp(x + dx, 0, img.width - 1);
      const float* s = img.at(sx, sy);
      float* d = out.at(x, y);
      d[0] = s[0], d[1] = s[1], d[2] = s[2];
    }
  }
  if (rng.uniform() < 0.5) return hflip(out);
  return out;
}

}  // namespace

PretrainResult train_rotnet(const SynthDataset& ds, Network<float>& net, const TrainHyper& hyper,
                            const EpochCallback& on_epoch) {
  ds.validate();
  hyper.validate();
  if (net.cfg.head_classes != 4)
    throw ValidationError("rotnet: head must output 4 logits, has " +
                          std::to_string(net.cfg.head_classes));
  if (net.cfg.input_size != ds.cfg.target_size)
    throw ShapeError("rotnet: encoder input " + std::to_string(net.cfg.input_size) +
                     " does not match dataset patch size " + std::to_string(ds.cfg.target_size));

  net.training = true;
  auto params = net.parameters();
  nn::SgdState<float> opt(static_cast<float>(hyper.lr), static_cast<float>(hyper.momentum),
                          static_cast<float>(hyper.weight_decay));

  PretrainResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const auto perm = epoch_permutation(ds.d, mix_seed(hyper.epoch_seed, epoch));
    const uint64_t aug_seed = mix_seed(hyper.epoch_seed, 0x524F544Eull + epoch);  // "ROTN"
    double loss_sum = 0.0;
    int64_t correct = 0, count = 0, step = 0;

    for (int64_t lo = 0; lo < ds.d; lo += hyper.batch_size, ++step) {
      const int64_t hi = std::min<int64_t>(lo + hyper.batch_size, ds.d);
      std::vector<Image> patches(static_cast<size_t>(hi - lo));
#pragma omp parallel for schedule(static)
      for (int64_t i = lo; i < hi; ++i) {
        Image p = get_sample(ds, perm[static_cast<size_t>(i)]);
        if (hyper.native_augment) {
          SampleRng rng(aug_seed, static_cast<uint64_t>(i));
          p = rotnet_native_augment(p, rng);
        }
        patches[static_cast<size_t>(i - lo)] = std::move(p);
      }
      RotBatch rb = make_rot_batch(patches);
      auto logits = net.forward(rb.images);
      auto loss = nn::softmax_cross_entropy(logits, rb.labels);
      if (!std::isfinite(loss->data[0]))
        throw TrainingError("rotnet: loss diverged at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(step));
      const int n_rot = logits->dim(0), k = logits->dim(1);
      for (int i = 0; i < n_rot; ++i)
        if (argmax_row(logits->data.data() + static_cast<int64_t>(i) * k, k) == rb.labels[i])
          ++correct;
      count += n_rot;
      loss_sum += loss->data[0] * n_rot;

      nn::zero_grads(params);
      nn::backward(loss);
      try {
        nn::sgd_step(params, opt);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(step));
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(count);
    stats.accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(count);
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats, net);
  }
  return result;
}

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

namespace {

// Shared tail: order eigenpairs by descending eigenvalue, drop rank-deficient
// directions, fix column signs.
void finish_basis(PcaState& state, RowMatF& basis, const VectorXd& eigenvalues, int p) {
  const int q = static_cast<int>(eigenvalues.size());
  std::vector<int> order(q);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return eigenvalues[a] > eigenvalues[b]; });
  const double lead = std::max(eigenvalues[order[0]], 0.0);
  const double floor_ev = std::max(lead * 1e-9, 1e-12);
  int keep = 0;
  while (keep < p && keep < q && eigenvalues[order[keep]] > floor_ev) ++keep;
  if (keep < p)
    std::cerr << "pca_fit: data rank " << keep << " below requested p=" << p
              << "; reducing output dimension\n";
  if (keep == 0) throw ValidationError("pca_fit: input has no variance");

  state.dim_out = keep;
  state.basis.assign(static_cast<size_t>(state.dim_in) * keep, 0.0f);
  for (int j = 0; j < keep; ++j) {
    const int src = order[j];
    // deterministic sign: largest-magnitude coordinate positive
    int arg = 0;
    for (int i = 1; i < state.dim_in; ++i)
      if (std::fabs(basis(i, src)) > std::fabs(basis(arg, src))) arg = i;
    const float flip = basis(arg, src) < 0.0f ? -1.0f : 1.0f;
    for (int i = 0; i < state.dim_in; ++i)
      state.basis[static_cast<size_t>(i) * keep + j] = flip * basis(i, src);
  }
}

}  // namespace

PcaState pca_fit(const FeatureMatrix& features, int p, uint64_t seed) {
  const int64_t m = features.rows;
  const int d = features.cols;
  if (p < 1) throw ValidationError("pca_fit: p must be >= 1");
  if (m <= p) throw ValidationError("pca_fit: need more samples than components (M=" +
                                    std::to_string(m) + ", p=" + std::to_string(p) + ")");
  p = std::min(p, d);

  PcaState state;
  state.dim_in = d;
  state.mean.assign(d, 0.0f);
  {
    std::vector<double> acc(d, 0.0);
    for (int64_t i = 0; i < m; ++i) {
      const float* row = features.row(i);
      for (int j = 0; j < d; ++j) acc[j] += row[j];
    }
    for (int j = 0; j < d; ++j) state.mean[j] = static_cast<float>(acc[j] / static_cast<double>(m));
  }

  Eigen::Map<const RowMatF> x(features.data.data(), m, d);
  Eigen::Map<const Eigen::VectorXf> mu(state.mean.data(), d);

  if (d <= 512) {
    // Exact covariance eigendecomposition.
    MatrixXd xc = x.cast<double>();
    xc.rowwise() -= mu.cast<double>().transpose();
    MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw Error("pca_fit: eigendecomposition failed");
    RowMatF basis = es.eigenvectors().cast<float>();
    VectorXd evs = es.eigenvalues();
    finish_basis(state, basis, evs, p);
    return state;
  }

  // Randomized subspace iteration; never materializes the D x D covariance.
  const int q = std::min(d, p + 8);
  SampleRng rng(seed, 0x50434100ull);  // "PCA"
  RowMatF omega(d, q);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < q; ++j) omega(i, j) = static_cast<float>(rng.normal());

  auto cov_times = [&](const RowMatF& v) -> RowMatF {
    // (Xc^T Xc / M) v without forming Xc: correct for the mean afterwards.
    RowMatF t = x * v;                                 // M x q
    Eigen::RowVectorXf mu_v = mu.transpose() * v;      // 1 x q
    t.rowwise() -= mu_v;
    RowMatF y = x.transpose() * t;                     // D x q
    Eigen::RowVectorXf colsum = t.colwise().sum();
    y.noalias() -= mu * colsum;
    return y / static_cast<float>(m);
  };

  RowMatF y = cov_times(omega);
  for (int it = 0; it < 2; ++it) {
    Eigen::HouseholderQR<RowMatF> qr(y);
    RowMatF thin = RowMatF::Identity(d, q);
    thin = qr.householderQ() * thin;
    y = cov_times(thin);
  }
  Eigen::HouseholderQR<RowMatF> qr(y);
  RowMatF qmat = RowMatF::Identity(d, q);
  qmat = qr.householderQ() * qmat;

  // Small q x q problem in the subspace.
  RowMatF b = cov_times(qmat);          // D x q
  MatrixXd small = (qmat.transpose() * b).cast<double>();
  small = 0.5 * (small + small.transpose());  // symmetrize roundoff
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(small);
  if (es.info() != Eigen::Success) throw Error("pca_fit: subspace eigendecomposition failed");
  RowMatF basis = qmat * es.eigenvectors().cast<float>();
  VectorXd evs = es.eigenvalues();
  finish_basis(state, basis, evs, p);
  return state;
}

FeatureMatrix pca_apply(const PcaState& state, const FeatureMatrix& features) {
  if (features.cols != state.dim_in)
    throw ShapeError("pca_apply: feature axis 1 is " + std::to_string(features.cols) +
                     ", expected " + std::to_string(state.dim_in));
  FeatureMatrix out;
  out.resize(features.rows, state.dim_out);
  Eigen::Map<const RowMatF> x(features.data.data(), features.rows, features.cols);
  Eigen::Map<const RowMatF> b(state.basis.data(), state.dim_in, state.dim_out);
  Eigen::Map<const Eigen::VectorXf> mu(state.mean.data(), state.dim_in);
  Eigen::Map<RowMatF> y(out.data.data(), out.rows, out.cols);
  y.noalias() = x * b;
  y.rowwise() -= (mu.transpose() * b).eval();
  return out;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

namespace {

double dist2(const float* a, const float* b, int p) {
  double acc = 0.0;
  for (int i = 0; i < p; ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace

ClusterState kmeans(const FeatureMatrix& features, int k, int max_iters, uint64_t seed) {
  const int64_t m = features.rows;
  const int p = features.cols;
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (m < k)
    throw ValidationError("kmeans: need at least k points (M=" + std::to_string(m) +
                          ", k=" + std::to_string(k) + ")");
  if (max_iters < 1) throw ValidationError("kmeans: max_iters must be >= 1");

  ClusterState cs;
  cs.k = k;
  cs.p = p;
  cs.centroids.assign(static_cast<size_t>(k) * p, 0.0f);
  SampleRng rng(seed, 0x4B4D4541ull);  // "KMEA"

  // k-means++ seeding.
  std::vector<char> chosen(static_cast<size_t>(m), 0);
  {
    const auto first = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(m)));
    std::copy_n(features.row(first), p, cs.centroids.data());
    chosen[static_cast<size_t>(first)] = 1;
    std::vector<double> d2(static_cast<size_t>(m), std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
      const float* last = cs.centroids.data() + static_cast<size_t>(c - 1) * p;
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < m; ++i)
        d2[static_cast<size_t>(i)] = std::min(d2[static_cast<size_t>(i)], dist2(features.row(i), last, p));
      double total = 0.0;
      for (int64_t i = 0; i < m; ++i) total += d2[static_cast<size_t>(i)];
      int64_t pick = -1;
      if (total > 0.0) {
        const double r = rng.uniform() * total;
        double run = 0.0;
        for (int64_t i = 0; i < m; ++i) {
          run += d2[static_cast<size_t>(i)];
          if (run >= r) {
            pick = i;
            break;
          }
        }
        if (pick < 0) pick = m - 1;
      } else {
        // all remaining mass zero (duplicate points): first unchosen index
        for (int64_t i = 0; i < m; ++i)
          if (!chosen[static_cast<size_t>(i)]) {
            pick = i;
            break;
          }
        if (pick < 0) pick = 0;
      }
      std::copy_n(features.row(pick), p, cs.centroids.data() + static_cast<size_t>(c) * p);
      chosen[static_cast<size_t>(pick)] = 1;
    }
  }

  cs.assignments.assign(static_cast<size_t>(m), -1);
  std::vector<int> prev(static_cast<size_t>(m), -2);
  std::vector<double> point_d2(static_cast<size_t>(m), 0.0);
  std::vector<double> sums(static_cast<size_t>(k) * p);
  cs.sizes.assign(static_cast<size_t>(k), 0);

  auto assign_all = [&]() {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      const float* row = features.row(i);
      int best = 0;
      double best_d = dist2(row, cs.centroids.data(), p);
      for (int c = 1; c < k; ++c) {
        const double d = dist2(row, cs.centroids.data() + static_cast<size_t>(c) * p, p);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      cs.assignments[static_cast<size_t>(i)] = best;
      point_d2[static_cast<size_t>(i)] = best_d;
    }
    double obj = 0.0;
    for (int64_t i = 0; i < m; ++i) obj += point_d2[static_cast<size_t>(i)];
    std::fill(cs.sizes.begin(), cs.sizes.end(), 0);
    for (int64_t i = 0; i < m; ++i) ++cs.sizes[static_cast<size_t>(cs.assignments[static_cast<size_t>(i)])];
    return obj;
  };

  auto reseed_empty = [&]() {
    for (int c = 0; c < k; ++c) {
      if (cs.sizes[static_cast<size_t>(c)] > 0) continue;
      int largest = 0;
      for (int l = 1; l < k; ++l)
        if (cs.sizes[static_cast<size_t>(l)] > cs.sizes[static_cast<size_t>(largest)]) largest = l;
      const auto member =
          static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(cs.sizes[static_cast<size_t>(largest)])));
      int64_t seen = 0, pick = -1;
      for (int64_t i = 0; i < m; ++i) {
        if (cs.assignments[static_cast<size_t>(i)] != largest) continue;
        if (seen++ == member) {
          pick = i;
          break;
        }
      }
      std::copy_n(features.row(pick), p, cs.centroids.data() + static_cast<size_t>(c) * p);
      // the donor point moves with its centroid, so the cluster is nonempty
      cs.assignments[static_cast<size_t>(pick)] = c;
      --cs.sizes[static_cast<size_t>(largest)];
      cs.sizes[static_cast<size_t>(c)] = 1;
    }
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    cs.objective = assign_all();
    cs.objective_history.push_back(cs.objective);
    cs.iterations = iter + 1;
    if (cs.assignments == prev) break;
    prev = cs.assignments;

    std::fill(sums.begin(), sums.end(), 0.0);
    for (int64_t i = 0; i < m; ++i) {
      const float* row = features.row(i);
      double* s = sums.data() + static_cast<size_t>(cs.assignments[static_cast<size_t>(i)]) * p;
      for (int j = 0; j < p; ++j) s[j] += row[j];
    }
    for (int c = 0; c < k; ++c) {
      if (cs.sizes[static_cast<size_t>(c)] == 0) continue;
      const double inv = 1.0 / cs.sizes[static_cast<size_t>(c)];
      float* cent = cs.centroids.data() + static_cast<size_t>(c) * p;
      const double* s = sums.data() + static_cast<size_t>(c) * p;
      for (int j = 0; j < p; ++j) cent[j] = static_cast<float>(s[j] * inv);
    }
    reseed_empty();
  }

  // The returned state must have every cluster nonempty even if the loop hit
  // max_iters right after an empty reassignment.
  reseed_empty();
  cs.objective = 0.0;
  for (int64_t i = 0; i < m; ++i)
    cs.objective += dist2(features.row(i),
                          cs.centroids.data() +
                              static_cast<size_t>(cs.assignments[static_cast<size_t>(i)]) * p,
                          p);
  return cs;
}

// ---------------------------------------------------------------------------
// DeepCluster
// ---------------------------------------------------------------------------

double normalized_mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw ValidationError("nmi: label vectors must be nonempty and equal length");
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<double> joint(static_cast<size_t>(ka) * kb, 0.0), pa(ka, 0.0), pb(kb, 0.0);
  const double inv = 1.0 / static_cast<double>(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    joint[static_cast<size_t>(a[i]) * kb + b[i]] += inv;
    pa[static_cast<size_t>(a[i])] += inv;
    pb[static_cast<size_t>(b[i])] += inv;
  }
  double ha = 0.0, hb = 0.0, mi = 0.0;
  for (double v : pa)
    if (v > 0) ha -= v * std::log(v);
  for (double v : pb)
    if (v > 0) hb -= v * std::log(v);
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) {
      const double v = joint[static_cast<size_t>(i) * kb + j];
      if (v > 0) mi += v * std::log(v / (pa[static_cast<size_t>(i)] * pb[static_cast<size_t>(j)]));
    }
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  return mi / std::sqrt(ha * hb);
}

namespace {

// DeepCluster's native augmentation: resized crops with beta=0.08, gamma=3/4
// plus horizontal flips, applied to the already-normalized patch.
Image deepcluster_native_augment(const Image& img, SampleRng& rng) {
  AugmentConfig native;
  native.beta = 0.08;
  native.gamma = 0.75;
  const auto s =
      sample_crop(rng, img.width, img.height, static_cast<int64_t>(img.width) * img.height, native);
  Image patch = crop(img, IntRect{s.crop.x, s.crop.y, s.crop.w, s.crop.h});
  patch = bilinear_resize(patch, img.width, img.height);
  if (rng.uniform() < 0.5) return hflip(patch);
  return patch;
}

}  // namespace

PretrainResult deepcluster_train(const SynthDataset& ds, Network<float>& net,
                                 const DeepClusterOpts& opts, const TrainHyper& hyper,
                                 const EpochCallback& on_epoch) {
  ds.validate();
  hyper.validate();
  if (opts.k < 1) throw ValidationError("deepcluster.k: must be >= 1");
  if (opts.k > ds.d)
    throw ValidationError("deepcluster.k: k=" + std::to_string(opts.k) + " exceeds dataset size d=" +
                          std::to_string(ds.d));
  if (opts.pca_dim < 1) throw ValidationError("deepcluster.pca_dim: must be >= 1");
  if (opts.kmeans_iters < 1) throw ValidationError("deepcluster.kmeans_iters: must be >= 1");
  if (net.cfg.input_size != ds.cfg.target_size)
    throw ShapeError("deepcluster: encoder input " + std::to_string(net.cfg.input_size) +
                     " does not match dataset patch size " + std::to_string(ds.cfg.target_size));

  PretrainResult result;
  std::vector<int> prev_labels;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    // 1-3: features (eval, unaugmented) -> PCA -> pseudo-labels
    FeatureMatrix feats = extract_penultimate_features(net, ds, hyper.batch_size);
    const int p = std::min<int>(opts.pca_dim, std::min<int64_t>(feats.cols, feats.rows - 1));
    PcaState pca = pca_fit(feats, p, mix_seed(hyper.epoch_seed, 0x504341ull + epoch));
    FeatureMatrix reduced = pca_apply(pca, feats);
    ClusterState clusters =
        kmeans(reduced, opts.k, opts.kmeans_iters, mix_seed(hyper.epoch_seed, epoch));

    EpochStats stats;
    stats.epoch = epoch;
    stats.objective = clusters.objective;
    stats.min_cluster = *std::min_element(clusters.sizes.begin(), clusters.sizes.end());
    stats.max_cluster = *std::max_element(clusters.sizes.begin(), clusters.sizes.end());
    stats.nmi_prev =
        prev_labels.empty() ? 0.0 : normalized_mutual_information(clusters.assignments, prev_labels);

    // 4: fresh head for the new pseudo-label space; encoder body untouched
    net.reinit_head(opts.k, mix_seed(net.init_seed, 0x48440000ull + epoch));
    net.training = true;
    auto params = net.parameters();
    nn::SgdState<float> opt(static_cast<float>(hyper.lr), static_cast<float>(hyper.momentum),
                            static_cast<float>(hyper.weight_decay));

    // 5: one pass over pseudo-labels with native augmentation and
    // inverse-cluster-size weights
    const auto perm = epoch_permutation(ds.d, mix_seed(hyper.epoch_seed, 0xDC00ull + epoch));
    const uint64_t aug_seed = mix_seed(hyper.epoch_seed, 0x444355ull + epoch);  // "DCU"
    double loss_sum = 0.0;
    int64_t count = 0, step = 0;
    for (int64_t lo = 0; lo < ds.d; lo += hyper.batch_size, ++step) {
      const int64_t hi = std::min<int64_t>(lo + hyper.batch_size, ds.d);
      const auto nb = static_cast<size_t>(hi - lo);
      std::vector<Image> patches(nb);
      std::vector<int> labels(nb);
      std::vector<float> weights(nb);
#pragma omp parallel for schedule(static)
      for (int64_t i = lo; i < hi; ++i) {
        const int64_t idx = perm[static_cast<size_t>(i)];
        Image patch = get_sample(ds, idx);
        if (hyper.native_augment) {
          SampleRng rng(aug_seed, static_cast<uint64_t>(idx));
          patch = deepcluster_native_augment(patch, rng);
        }
        const int label = clusters.assignments[static_cast<size_t>(idx)];
        patches[static_cast<size_t>(i - lo)] = std::move(patch);
        labels[static_cast<size_t>(i - lo)] = label;
        weights[static_cast<size_t>(i - lo)] =
            1.0f / static_cast<float>(clusters.sizes[static_cast<size_t>(label)]);
      }
      auto logits = net.forward(images_to_tensor(patches));
      auto loss = nn::softmax_cross_entropy(logits, labels, weights);
      if (!std::isfinite(loss->data[0]))
        throw TrainingError("deepcluster: loss diverged at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(step));
      loss_sum += loss->data[0] * static_cast<double>(nb);
      count += static_cast<int64_t>(nb);
      nn::zero_grads(params);
      nn::backward(loss);
      try {
        nn::sgd_step(params, opt);
      } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(step));
      }
    }

    stats.loss = loss_sum / static_cast<double>(count);
    result.epochs.push_back(stats);
    prev_labels = clusters.assignments;
    if (on_epoch) on_epoch(stats, net);
  }
  return result;
}

}  // namespace mono
