#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dimma/brightnet.hpp"
#include "dimma/illumstats.hpp"
#include "dimma/mdn.hpp"
#include "dimma/trainer.hpp"

namespace dimma {

// Everything a CLI run needs. Module seeds are derived from the master seed
// by role name; sections cannot set their own.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string preset = "full";  // "full" or "toy" (net and MDN widths)
  MDNConfig mdn;
  DimConfig dim;
  NetConfig net;
  TrainConfig train = TrainConfig::unsupervised();
  TrainConfig finetune = TrainConfig::finetuning();
  LossConfig loss;
  std::map<std::string, std::string> paths;

  // Re-derives mdn/dim/net/train/finetune seeds from seed.
  void derive_seeds();
  void validate() const;
};

// JSON text with optional sections "mdn", "dim", "net", "train", "finetune",
// "loss", "paths" and top-level "seed", "preset". Unknown keys throw
// Error(kInvalidConfig).
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Fully resolved configuration as pretty JSON.
std::string to_json(const RunConfig& config);

}  // namespace dimma
