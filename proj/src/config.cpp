#include "dimma/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "dimma/errors.hpp"
#include "dimma/seed.hpp"
#include "json.hpp"

namespace dimma {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); }

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) invalid("section '" + section + "' must be an object");
  for (const auto& item : obj.items()) {
    if (!allowed.contains(item.key())) invalid("unknown key '" + item.key() + "' in " + section);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    invalid("bad value for " + section + "." + key);
  }
}

const char* mode_name(DimMode m) { return m == DimMode::kExpectation ? "expectation" : "stochastic"; }

void read_train(const json& j, const std::string& section, TrainConfig& t) {
  check_keys(j, section,
             {"crop_size", "batch_size", "learning_rate", "max_iters", "early_stop_patience", "val_interval",
              "horizontal_flip", "seed"});
  read(j, "crop_size", t.crop_size, section);
  read(j, "batch_size", t.batch_size, section);
  read(j, "learning_rate", t.learning_rate, section);
  read(j, "max_iters", t.max_iters, section);
  read(j, "early_stop_patience", t.early_stop_patience, section);
  read(j, "val_interval", t.val_interval, section);
  read(j, "horizontal_flip", t.horizontal_flip, section);
}

json train_json(const TrainConfig& t) {
  return json{{"crop_size", t.crop_size},         {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate}, {"max_iters", t.max_iters},
              {"early_stop_patience", t.early_stop_patience}, {"val_interval", t.val_interval},
              {"horizontal_flip", t.horizontal_flip}, {"seed", t.seed}};
}

}  // namespace

void RunConfig::derive_seeds() {
  mdn.seed = derive_seed(seed, "mdn");
  dim.seed = derive_seed(seed, "dim");
  net.seed = derive_seed(seed, "net");
  train.seed = derive_seed(seed, "train");
  finetune.seed = derive_seed(seed, "finetune");
}

void RunConfig::validate() const {
  if (preset != "full" && preset != "toy") invalid("preset must be 'full' or 'toy'");
  mdn.validate();
  dim.validate();
  net.validate();
  train.validate();
  finetune.validate();
  loss.validate();
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    invalid(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "config", {"seed", "preset", "mdn", "dim", "net", "train", "finetune", "loss", "paths"});

  RunConfig c;
  read(root, "seed", c.seed, "config");
  read(root, "preset", c.preset, "config");
  if (c.preset == "toy") {
    c.mdn = MDNConfig::toy();
    c.net = NetConfig::toy();
  } else if (c.preset != "full") {
    invalid("preset must be 'full' or 'toy'");
  }

  if (root.contains("mdn")) {
    const auto& j = root["mdn"];
    check_keys(j, "mdn", {"components", "hidden_widths", "epochs", "learning_rate", "batch_pixels", "seed"});
    read(j, "components", c.mdn.components, "mdn");
    read(j, "hidden_widths", c.mdn.hidden_widths, "mdn");
    read(j, "epochs", c.mdn.epochs, "mdn");
    read(j, "learning_rate", c.mdn.learning_rate, "mdn");
    read(j, "batch_pixels", c.mdn.batch_pixels, "mdn");
  }
  if (root.contains("dim")) {
    const auto& j = root["dim"];
    check_keys(j, "dim", {"gamma_min", "gamma_max", "alpha", "ratio_clamp_max", "mode", "seed"});
    read(j, "gamma_min", c.dim.gamma_min, "dim");
    read(j, "gamma_max", c.dim.gamma_max, "dim");
    read(j, "alpha", c.dim.alpha, "dim");
    read(j, "ratio_clamp_max", c.dim.ratio_clamp_max, "dim");
    std::string mode = mode_name(c.dim.mode);
    read(j, "mode", mode, "dim");
    if (mode == "stochastic") {
      c.dim.mode = DimMode::kStochastic;
    } else if (mode == "expectation") {
      c.dim.mode = DimMode::kExpectation;
    } else {
      invalid("dim.mode must be 'stochastic' or 'expectation'");
    }
  }
  if (root.contains("net")) {
    const auto& j = root["net"];
    check_keys(j, "net",
               {"base_channels", "channel_mult", "blocks_per_stage", "attention_heads", "use_attention", "use_norm",
                "embed_dim", "zero_init_output", "seed"});
    read(j, "base_channels", c.net.base_channels, "net");
    read(j, "channel_mult", c.net.channel_mult, "net");
    read(j, "blocks_per_stage", c.net.blocks_per_stage, "net");
    read(j, "attention_heads", c.net.attention_heads, "net");
    read(j, "use_attention", c.net.use_attention, "net");
    read(j, "use_norm", c.net.use_norm, "net");
    read(j, "embed_dim", c.net.embed_dim, "net");
    read(j, "zero_init_output", c.net.zero_init_output, "net");
  }
  if (root.contains("train")) read_train(root["train"], "train", c.train);
  if (root.contains("finetune")) read_train(root["finetune"], "finetune", c.finetune);
  if (root.contains("loss")) {
    const auto& j = root["loss"];
    check_keys(j, "loss", {"lambda", "feature_extractor"});
    read(j, "lambda", c.loss.lambda, "loss");
    read(j, "feature_extractor", c.loss.feature_extractor, "loss");
  }
  if (root.contains("paths")) {
    const auto& j = root["paths"];
    check_keys(j, "paths", {"pairs", "subset", "input", "dim", "corpus", "val", "ckpt", "out", "pred", "gt", "mdn"});
    for (const auto& item : j.items()) {
      if (!item.value().is_string()) invalid("paths." + item.key() + " must be a string");
      c.paths[item.key()] = item.value().get<std::string>();
    }
  }
  c.derive_seeds();
  // Section seeds are echoes of the derived ones (as printed by to_json).
  const std::pair<const char*, std::uint64_t> derived[] = {{"mdn", c.mdn.seed},
                                                            {"dim", c.dim.seed},
                                                            {"net", c.net.seed},
                                                            {"train", c.train.seed},
                                                            {"finetune", c.finetune.seed}};
  for (const auto& [section, seed] : derived) {
    if (!root.contains(section) || !root[section].contains("seed")) continue;
    std::uint64_t given = 0;
    read(root[section], "seed", given, section);
    if (given != seed) invalid(std::string(section) + ".seed does not match the master seed derivation");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kFileNotFound, path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["preset"] = c.preset;
  j["mdn"] = {{"components", c.mdn.components}, {"hidden_widths", c.mdn.hidden_widths},
              {"epochs", c.mdn.epochs},         {"learning_rate", c.mdn.learning_rate},
              {"batch_pixels", c.mdn.batch_pixels}, {"seed", c.mdn.seed}};
  j["dim"] = {{"gamma_min", c.dim.gamma_min}, {"gamma_max", c.dim.gamma_max},
              {"alpha", c.dim.alpha},         {"ratio_clamp_max", c.dim.ratio_clamp_max},
              {"mode", mode_name(c.dim.mode)}, {"seed", c.dim.seed}};
  j["net"] = {{"base_channels", c.net.base_channels}, {"channel_mult", c.net.channel_mult},
              {"blocks_per_stage", c.net.blocks_per_stage}, {"attention_heads", c.net.attention_heads},
              {"use_attention", c.net.use_attention}, {"use_norm", c.net.use_norm},
              {"embed_dim", c.net.embed_dim}, {"zero_init_output", c.net.zero_init_output},
              {"seed", c.net.seed}};
  j["train"] = train_json(c.train);
  j["finetune"] = train_json(c.finetune);
  j["loss"] = {{"lambda", c.loss.lambda}, {"feature_extractor", c.loss.feature_extractor}};
  j["paths"] = json::object();
  for (const auto& [k, v] : c.paths) j["paths"][k] = v;
  return j.dump(2);
}

}  // namespace dimma
