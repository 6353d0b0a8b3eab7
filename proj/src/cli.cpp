#include "mono/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mono/error.hpp"
#include "mono/hash.hpp"

namespace mono::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Fill `dst` from j[key] when present; leave the default otherwise.
template <typename T>
void maybe(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

json augment_to_json(const AugmentConfig& a) {
  return json{{"beta", a.beta},
              {"gamma", a.gamma},
              {"max_rot_deg", a.max_rot_deg},
              {"flip_prob", a.flip_prob},
              {"jitter_low", a.jitter_low},
              {"jitter_high", a.jitter_high},
              {"hue_range", a.hue_range},
              {"target_size", a.target_size},
              {"scale_crop", a.scale_crop},
              {"rotation", a.rotation},
              {"jitter", a.jitter},
              {"flip", a.flip}};
}

void augment_from_json(const json& j, AugmentConfig& a) {
  maybe(j, "beta", a.beta);
  maybe(j, "gamma", a.gamma);
  maybe(j, "max_rot_deg", a.max_rot_deg);
  maybe(j, "flip_prob", a.flip_prob);
  maybe(j, "jitter_low", a.jitter_low);
  maybe(j, "jitter_high", a.jitter_high);
  maybe(j, "hue_range", a.hue_range);
  maybe(j, "target_size", a.target_size);
  maybe(j, "scale_crop", a.scale_crop);
  maybe(j, "rotation", a.rotation);
  maybe(j, "jitter", a.jitter);
  maybe(j, "flip", a.flip);
}

json hyper_to_json(const TrainHyper& h) {
  return json{{"epochs", h.epochs},
              {"batch_size", h.batch_size},
              {"lr", h.lr},
              {"momentum", h.momentum},
              {"weight_decay", h.weight_decay},
              {"native_augment", h.native_augment},
              {"workers", h.workers}};
}

void hyper_from_json(const json& j, TrainHyper& h) {
  maybe(j, "epochs", h.epochs);
  maybe(j, "batch_size", h.batch_size);
  maybe(j, "lr", h.lr);
  maybe(j, "momentum", h.momentum);
  maybe(j, "weight_decay", h.weight_decay);
  maybe(j, "native_augment", h.native_augment);
  maybe(j, "workers", h.workers);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_resolved_config(const RunConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  write_text_file((fs::path(cfg.out_dir) / "config.json").string(), cfg.to_json_string());
}

ProbeSpec make_probe_spec(const RunConfig& cfg, const std::string& tap) {
  ProbeSpec spec;
  spec.tap = tap;
  spec.target_dim = cfg.probe.target_dim;
  spec.epochs = cfg.probe.epochs;
  spec.batch_size = cfg.probe.batch_size;
  spec.lr_start = cfg.probe.lr_start;
  spec.lr_milestones = cfg.probe.lr_milestones;
  spec.lr_factor = cfg.probe.lr_factor;
  spec.momentum = cfg.probe.momentum;
  spec.weight_decay = cfg.probe.weight_decay;
  spec.seed = cfg.seeds.epoch_seed;
  return spec;
}

// Variant/input/width compatibility for loading checkpoints whose head size
// legitimately differs (rotnet 4-way, deepcluster k-way).
void check_encoder_compatible(const EncoderConfig& stored, const EncoderConfig& expect,
                              const std::string& path) {
  if (stored.variant != expect.variant || stored.input_size != expect.input_size ||
      stored.widths != expect.widths)
    throw FormatError("checkpoint: config mismatch for " + path + "\n  stored:   " +
                      stored.to_json_string() + "\n  expected: " + expect.to_json_string());
}

Network<float> obtain_network(const RunConfig& cfg, const std::string& checkpoint,
                              bool random_init) {
  if (random_init) return build_encoder<float>(cfg.encoder, cfg.seeds.model_seed);
  if (checkpoint.empty())
    throw ValidationError("no checkpoint given (set probe.checkpoint / finetune.checkpoint or "
                          "random_init=true)");
  Network<float> net = load_checkpoint(checkpoint);
  check_encoder_compatible(net.cfg, cfg.encoder, checkpoint);
  return net;
}

CifarData load_labeled(const RunConfig& cfg) {
  if (cfg.data.cifar_dir.empty())
    throw ValidationError("data.cifar_dir: required for probe/finetune commands");
  CifarData data = load_cifar10(cfg.data.cifar_dir);
  if (data.test.size() == 0)
    throw ValidationError("data.cifar_dir: no test_batch.bin found under " + cfg.data.cifar_dir);
  return data;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

RunConfig RunConfig::from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ValidationError("config: invalid JSON");
  RunConfig cfg;
  maybe(j, "out_dir", cfg.out_dir);
  maybe(j, "threads", cfg.threads);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    maybe(s, "data_seed", cfg.seeds.data_seed);
    maybe(s, "model_seed", cfg.seeds.model_seed);
    maybe(s, "epoch_seed", cfg.seeds.epoch_seed);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    maybe(d, "sources", cfg.data.sources);
    maybe(d, "cifar_train_as_sources", cfg.data.cifar_train_as_sources);
    maybe(d, "d", cfg.data.d);
    maybe(d, "cifar_dir", cfg.data.cifar_dir);
  }
  if (j.contains("augment")) augment_from_json(j.at("augment"), cfg.augment);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    std::string variant = cfg.encoder.variant_name();
    maybe(e, "variant", variant);
    int input_size = variant == "AlexNetBN" ? 224 : 32;
    maybe(e, "input_size", input_size);
    int head_classes = 4;
    maybe(e, "head_classes", head_classes);
    if (variant == "SmallAlexNet") {
      cfg.encoder = EncoderConfig::small_alexnet(input_size, head_classes);
    } else if (variant == "AlexNetBN") {
      cfg.encoder = EncoderConfig::alexnet_bn(input_size, head_classes);
    } else {
      throw ValidationError("encoder.variant: unknown variant '" + variant + "'");
    }
    maybe(e, "widths", cfg.encoder.widths);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    maybe(p, "task", cfg.pretrain.task);
    hyper_from_json(p, cfg.pretrain.hyper);
    maybe(p, "k", cfg.pretrain.deepcluster.k);
    maybe(p, "pca_dim", cfg.pretrain.deepcluster.pca_dim);
    maybe(p, "kmeans_iters", cfg.pretrain.deepcluster.kmeans_iters);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    maybe(p, "taps", cfg.probe.taps);
    maybe(p, "epochs", cfg.probe.epochs);
    maybe(p, "batch_size", cfg.probe.batch_size);
    maybe(p, "lr_start", cfg.probe.lr_start);
    maybe(p, "lr_milestones", cfg.probe.lr_milestones);
    maybe(p, "lr_factor", cfg.probe.lr_factor);
    maybe(p, "momentum", cfg.probe.momentum);
    maybe(p, "weight_decay", cfg.probe.weight_decay);
    maybe(p, "target_dim", cfg.probe.target_dim);
    maybe(p, "random_init", cfg.probe.random_init);
    maybe(p, "ten_crop", cfg.probe.ten_crop);
    maybe(p, "checkpoint", cfg.probe.checkpoint);
    maybe(p, "method_label", cfg.probe.method_label);
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    maybe(f, "k_frozen", cfg.finetune.k_frozen);
    hyper_from_json(f, cfg.finetune.hyper);
    maybe(f, "checkpoint", cfg.finetune.checkpoint);
    maybe(f, "random_init", cfg.finetune.random_init);
  }
  // epoch seeds feed the trainers directly
  cfg.pretrain.hyper.epoch_seed = cfg.seeds.epoch_seed;
  cfg.finetune.hyper.epoch_seed = cfg.seeds.epoch_seed;
  return cfg;
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw ValidationError("config " + path + ": invalid JSON");
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ValidationError("--set expects key.path=value, got '" + ov + "'");
    std::string key = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    for (auto& c : key)
      if (c == '.') c = '/';
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // bare strings stay strings
    j[json::json_pointer("/" + key)] = parsed;
  }
  return from_json_string(j.dump());
}

std::string RunConfig::to_json_string() const {
  json j;
  j["out_dir"] = out_dir;
  j["threads"] = threads;
  j["seeds"] = {{"data_seed", seeds.data_seed},
                {"model_seed", seeds.model_seed},
                {"epoch_seed", seeds.epoch_seed}};
  j["data"] = {{"sources", data.sources},
               {"cifar_train_as_sources", data.cifar_train_as_sources},
               {"d", data.d},
               {"cifar_dir", data.cifar_dir}};
  j["augment"] = augment_to_json(augment);
  j["encoder"] = json::parse(encoder.to_json_string());
  json p = hyper_to_json(pretrain.hyper);
  p["task"] = pretrain.task;
  p["k"] = pretrain.deepcluster.k;
  p["pca_dim"] = pretrain.deepcluster.pca_dim;
  p["kmeans_iters"] = pretrain.deepcluster.kmeans_iters;
  p["sobel_prefilter"] = false;  // unlike the original DeepCluster recipe
  j["pretrain"] = p;
  j["probe"] = {{"taps", probe.taps},
                {"epochs", probe.epochs},
                {"batch_size", probe.batch_size},
                {"lr_start", probe.lr_start},
                {"lr_milestones", probe.lr_milestones},
                {"lr_factor", probe.lr_factor},
                {"momentum", probe.momentum},
                {"weight_decay", probe.weight_decay},
                {"target_dim", probe.target_dim},
                {"random_init", probe.random_init},
                {"ten_crop", probe.ten_crop},
                {"checkpoint", probe.checkpoint},
                {"method_label", probe.method_label}};
  json f = hyper_to_json(finetune.hyper);
  f["k_frozen"] = finetune.k_frozen;
  f["checkpoint"] = finetune.checkpoint;
  f["random_init"] = finetune.random_init;
  j["finetune"] = f;
  return j.dump(2);
}

std::string RunConfig::config_hash() const {
  // identifies the experiment: output location and thread cap do not change
  // any result, so they stay out of the hash
  RunConfig canonical = *this;
  canonical.out_dir.clear();
  canonical.threads = 0;
  return sha256_hex(canonical.to_json_string());
}

void RunConfig::validate() const {
  augment.validate();
  encoder.validate();
  if (data.d < 1) throw ValidationError("data.d: must be >= 1");
  if (pretrain.task != "rotnet" && pretrain.task != "deepcluster")
    throw ValidationError("pretrain.task: must be rotnet or deepcluster, got '" + pretrain.task +
                          "'");
  if (threads < 0) throw ValidationError("threads: must be >= 0");
  if (augment.target_size != encoder.input_size)
    throw ValidationError("augment.target_size (" + std::to_string(augment.target_size) +
                          ") must match encoder.input_size (" +
                          std::to_string(encoder.input_size) + ")");
}

void RunConfig::apply_threads() const {
  if (threads > 0) omp_set_num_threads(threads);
}

SourceSet load_sources(const RunConfig& cfg) {
  SourceSet set;
  if (cfg.data.cifar_train_as_sources) {
    CifarData cd = load_labeled(cfg);
    set.images = std::move(cd.train.images);
    for (size_t i = 0; i < set.images.size(); ++i) set.names.push_back("cifar" + std::to_string(i));
    return set;
  }
  if (cfg.data.sources.empty())
    throw ValidationError("data.sources: need at least one source image path");
  for (const auto& path : cfg.data.sources) {
    set.images.push_back(load_image(path));
    set.names.push_back(fs::path(path).stem().string());
  }
  return set;
}

SynthDataset build_dataset(const RunConfig& cfg) {
  SynthDataset ds;
  ds.sources = load_sources(cfg);
  ds.d = cfg.data.cifar_train_as_sources ? static_cast<int64_t>(ds.sources.size()) : cfg.data.d;
  ds.seed = cfg.seeds.data_seed;
  ds.cfg = cfg.augment;
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, int dump_count) {
  cfg.validate();
  cfg.apply_threads();
  SynthDataset ds = build_dataset(cfg);
  write_resolved_config(cfg);
  const std::string checksum = dataset_checksum(ds);
  std::cout << "N=" << ds.sources.size() << " d=" << ds.d << " sha256=" << checksum << "\n";
  if (dump_count > 0) {
    const std::string dump_dir = (fs::path(cfg.out_dir) / "samples").string();
    dump_samples(ds, dump_dir, dump_count, std::max<int64_t>(ds.d / dump_count, 1));
    std::cout << "dumped " << dump_count << " samples to " << dump_dir << "\n";
  }
  return 0;
}

namespace {

int pretrain_single(const RunConfig& cfg) {
  cfg.validate();
  cfg.apply_threads();
  write_resolved_config(cfg);
  SynthDataset ds = build_dataset(cfg);
  EncoderConfig enc_cfg = cfg.encoder;
  enc_cfg.head_classes = cfg.pretrain.task == "rotnet" ? 4 : cfg.pretrain.deepcluster.k;
  Network<float> net = build_encoder<float>(enc_cfg, cfg.seeds.model_seed);

  const fs::path out(cfg.out_dir);
  std::ofstream csv(out / "training.csv");
  csv << "epoch,loss,accuracy,objective,min_cluster,max_cluster,nmi_prev\n";
  const std::string ckpt_path = (out / "checkpoint.ckpt").string();

  // Keep the latest finished epoch on disk so a later divergence still leaves
  // a usable checkpoint behind.
  EpochCallback on_epoch = [&](const EpochStats& s, Network<float>& n) {
    csv << s.epoch << "," << s.loss << "," << s.accuracy << "," << s.objective << ","
        << s.min_cluster << "," << s.max_cluster << "," << s.nmi_prev << "\n";
    csv.flush();
    save_checkpoint(n, ckpt_path);
  };

  if (cfg.pretrain.task == "rotnet") {
    train_rotnet(ds, net, cfg.pretrain.hyper, on_epoch);
  } else {
    deepcluster_train(ds, net, cfg.pretrain.deepcluster, cfg.pretrain.hyper, on_epoch);
  }
  std::cout << "pretrained " << cfg.pretrain.task << " for " << cfg.pretrain.hyper.epochs
            << " epochs -> " << ckpt_path << "\n";
  return 0;
}

}  // namespace

int cmd_pretrain(RunConfig cfg, bool ablate) {
  if (!ablate) return pretrain_single(cfg);

  const fs::path root(cfg.out_dir);
  const bool flags[2] = {false, true};
  for (bool scale : flags)
    for (bool rot : flags)
      for (bool jit : flags) {
        RunConfig run = cfg;
        run.augment.scale_crop = scale;
        run.augment.rotation = rot;
        run.augment.jitter = jit;
        std::string name;
        if (scale) name += "scale";
        if (rot) name += name.empty() ? "rot" : "+rot";
        if (jit) name += name.empty() ? "jitter" : "+jitter";
        if (name.empty()) name = "none";
        run.out_dir = (root / name).string();
        std::cout << "[ablate] " << name << "\n";
        const int rc = pretrain_single(run);
        if (rc != 0) return rc;
      }
  return 0;
}

int cmd_probe(const RunConfig& cfg) {
  cfg.validate();
  cfg.apply_threads();
  const auto t0 = std::chrono::steady_clock::now();
  write_resolved_config(cfg);

  Network<float> net = obtain_network(cfg, cfg.probe.checkpoint, cfg.probe.random_init);
  Network<float> probed = absorb_batchnorm(net);  // the probe protocol runs on absorbed convs
  CifarData data = load_labeled(cfg);

  std::vector<std::string> taps = cfg.probe.taps.empty() ? probed.tap_names() : cfg.probe.taps;
  std::vector<TapRequest> requests;
  for (const auto& t : taps) requests.push_back({t, cfg.probe.target_dim});

  auto train_prepared = normalized_images(data.train);
  auto test_prepared = normalized_images(data.test);
  auto train_feats = extract_tap_features(probed, train_prepared, requests, cfg.probe.batch_size);
  auto test_feats = extract_tap_features(probed, test_prepared, requests, cfg.probe.batch_size);

  ProbeReport report;
  report.method = !cfg.probe.method_label.empty()
                      ? cfg.probe.method_label
                      : (cfg.probe.random_init ? "random" : cfg.pretrain.task);
  report.n_sources = cfg.data.cifar_train_as_sources ? static_cast<int>(data.train.size())
                                                     : static_cast<int>(cfg.data.sources.size());
  report.crop_protocol = cfg.probe.ten_crop ? "10-crop" : "single";
  report.data_seed = cfg.seeds.data_seed;
  report.model_seed = cfg.seeds.model_seed;
  report.epoch_seed = cfg.seeds.epoch_seed;
  report.config_hash = cfg.config_hash();

  for (size_t t = 0; t < taps.size(); ++t) {
    ProbeSpec spec = make_probe_spec(cfg, taps[t]);
    LinearProbe probe =
        train_probe_on_features(train_feats[t], data.train.labels, data.train.num_classes, spec);
    double acc;
    if (cfg.probe.ten_crop) {
      acc = ten_crop_eval(probed, probe, data.test, spec);
    } else {
      acc = eval_probe_on_features(probe, test_feats[t], data.test.labels);
    }
    report.tap_accuracy[taps[t]] = acc;
    std::cout << taps[t] << " top-1 " << acc << "%\n";
  }

  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const fs::path out(cfg.out_dir);
  write_text_file((out / "probe_report.json").string(), report.to_json_string());
  std::ostringstream csv;
  csv << ProbeReport::csv_header(taps) << "\n" << report.csv_row(taps) << "\n";
  write_text_file((out / "probe_report.csv").string(), csv.str());
  return 0;
}

int cmd_finetune(const RunConfig& cfg) {
  cfg.validate();
  cfg.apply_threads();
  write_resolved_config(cfg);
  Network<float> net = obtain_network(cfg, cfg.finetune.checkpoint, cfg.finetune.random_init);
  CifarData data = load_labeled(cfg);
  FinetuneResult result = finetune_frozen(net, cfg.finetune.k_frozen, data.train, data.test,
                                          cfg.finetune.hyper);
  json j;
  j["top1"] = result.top1;
  j["k_frozen"] = cfg.finetune.k_frozen;
  j["epoch_loss"] = result.epoch_loss;
  j["config_hash"] = cfg.config_hash();
  write_text_file((fs::path(cfg.out_dir) / "finetune.json").string(), j.dump(2));
  std::cout << "finetune top-1 " << result.top1 << "% (k_frozen=" << cfg.finetune.k_frozen
            << ")\n";
  return 0;
}

int cmd_report(const std::string& runs_dir) {
  std::vector<std::pair<std::string, ProbeReport>> reports;
  if (fs::is_directory(runs_dir)) {
    std::vector<fs::path> subdirs;
    for (const auto& e : fs::directory_iterator(runs_dir))
      if (e.is_directory()) subdirs.push_back(e.path());
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& dir : subdirs) {
      const fs::path p = dir / "probe_report.json";
      if (fs::exists(p))
        reports.emplace_back(dir.filename().string(),
                             ProbeReport::from_json_string(read_text_file(p.string())));
    }
  }
  if (reports.empty()) throw ValidationError("report: no runs found under " + runs_dir);

  // random baseline rows first, then everything else alphabetically
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    const bool ra = a.second.method == "random", rb = b.second.method == "random";
    if (ra != rb) return ra;
    return a.first < b.first;
  });

  std::vector<std::string> taps;
  for (const auto& [k, v] : reports.front().second.tap_accuracy) taps.push_back(k);

  std::ostringstream table;
  table << "run," << ProbeReport::csv_header(taps) << "\n";
  for (const auto& [name, rep] : reports) table << name << "," << rep.csv_row(taps) << "\n";
  write_text_file((fs::path(runs_dir) / "report.csv").string(), table.str());
  std::cout << table.str();
  return 0;
}

// ---------------------------------------------------------------------------
// main
// ---------------------------------------------------------------------------

int run_main(int argc, const char* const* argv) {
  CLI::App app{"single-image self-supervision workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int threads = -1;
  int dump_count = 0;
  bool ablate = false;
  std::string report_dir;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) opt->required();
    sub->add_option("--set", overrides, "override config values: key.path=value");
    sub->add_option("--threads", threads, "cap worker threads");
  };

  auto* synth = app.add_subcommand("synth", "synthesize a dataset and print its checksum");
  add_common(synth);
  synth->add_option("--dump", dump_count, "also write N sample PNGs");

  auto* pretrain = app.add_subcommand("pretrain", "pretrain with rotnet or deepcluster");
  add_common(pretrain);
  pretrain->add_flag("--ablate", ablate, "run the 2^3 {scale,rot,jitter} ablation grid");

  auto* probe = app.add_subcommand("probe", "train linear probes on a checkpoint");
  add_common(probe);

  auto* finetune = app.add_subcommand("finetune", "finetune with a frozen prefix");
  add_common(finetune);

  auto* report = app.add_subcommand("report", "aggregate probe reports into one table");
  report->add_option("dir", report_dir, "directory of run subdirectories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (report->parsed()) return cmd_report(report_dir);
    RunConfig cfg = RunConfig::load(config_path, overrides);
    if (threads >= 0) cfg.threads = threads;
    if (synth->parsed()) return cmd_synth(cfg, dump_count);
    if (pretrain->parsed()) return cmd_pretrain(cfg, ablate);
    if (probe->parsed()) return cmd_probe(cfg);
    if (finetune->parsed()) return cmd_finetune(cfg);
    return 1;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mono::cli
