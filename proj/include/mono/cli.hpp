#pragma once

#include <string>
#include <vector>

#include "mono/augment.hpp"
#include "mono/encoder.hpp"
#include "mono/pretext.hpp"
#include "mono/probe.hpp"

namespace mono::cli {

// All randomness flows from these three seeds; no global RNG anywhere.
struct Seeds {
  uint64_t data_seed = 1;
  uint64_t model_seed = 2;
  uint64_t epoch_seed = 3;
};

struct DataConfig {
  std::vector<std::string> sources;  // PNG/PPM paths
  bool cifar_train_as_sources = false;  // baseline regime: N = d CIFAR images
  int64_t d = 5000;
  std::string cifar_dir;  // labeled data for probes / finetuning
};

struct PretrainConfig {
  std::string task = "rotnet";  // or "deepcluster"
  TrainHyper hyper;
  DeepClusterOpts deepcluster;
};

struct ProbeCmdConfig {
  std::vector<std::string> taps;  // empty = all taps of the encoder
  int epochs = 36;
  int batch_size = 128;
  double lr_start = 0.01;
  std::vector<int> lr_milestones = {5, 15, 25};
  double lr_factor = 0.2;
  double momentum = 0.9;
  double weight_decay = 0.0;
  int target_dim = 0;  // 0 = raw dims (CIFAR mode)
  bool random_init = false;
  bool ten_crop = false;
  std::string checkpoint;
  std::string method_label;  // row label in reports; derived when empty
};

struct FinetuneCmdConfig {
  int k_frozen = 2;
  TrainHyper hyper;
  std::string checkpoint;
  bool random_init = false;
};

// One JSON document per run; every command writes the fully resolved config
// next to its outputs. CLI --set overrides use dotted paths (augment.beta=...).
struct RunConfig {
  std::string out_dir = "run";
  int threads = 0;  // 0 = leave the OpenMP default
  Seeds seeds;
  DataConfig data;
  AugmentConfig augment;
  EncoderConfig encoder = EncoderConfig::small_alexnet();
  PretrainConfig pretrain;
  ProbeCmdConfig probe;
  FinetuneCmdConfig finetune;

  static RunConfig from_json_string(const std::string& text);
  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides);
  std::string to_json_string() const;
  std::string config_hash() const;
  void validate() const;
  void apply_threads() const;
};

SourceSet load_sources(const RunConfig& cfg);
SynthDataset build_dataset(const RunConfig& cfg);

// Command entry points; used by main() and callable in-process. Outputs land
// under cfg.out_dir. Exit codes: 0 ok, 1 validation, 2 runtime/training, 3 io.
int cmd_synth(const RunConfig& cfg, int dump_count);
int cmd_pretrain(RunConfig cfg, bool ablate);
int cmd_probe(const RunConfig& cfg);
int cmd_finetune(const RunConfig& cfg);
int cmd_report(const std::string& runs_dir);

int run_main(int argc, const char* const* argv);

}  // namespace mono::cli
