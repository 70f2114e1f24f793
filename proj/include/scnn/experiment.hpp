#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scnn/activations.hpp"
#include "scnn/augment.hpp"
#include "scnn/training.hpp"

namespace scnn {

/// Everything an experiment depends on besides the dataset bytes. Serialized
/// as a flat JSON object; see README for the keys.
struct ExperimentConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path output_dir = "out";
  Protocol protocol = Protocol::two_stage;
  std::size_t folds = 10;
  TrainConfig train;
  AugmentSpec augment;
  NetworkOptions net;
  std::filesystem::path donor_weights;  // empty unless transfer / fine_tune

  /// Throws ConfigError on any inconsistent value.
  void validate() const;
};

/// Unknown keys and wrongly typed values throw ConfigError.
ExperimentConfig parse_config(std::string_view json_text);
/// Applies `key=value` overrides on top of `config`; the value is read as JSON
/// when it parses, otherwise as a string.
void apply_override(ExperimentConfig& config, std::string_view assignment);
/// Every resolved key, sorted. The output parses back to an equal config.
std::string config_lock_json(const ExperimentConfig& config);
/// Stable hash of the lock document without output_dir.
std::string config_fingerprint(const ExperimentConfig& config);

/// Writes model.weights, stage_reports.json, config.lock.json and manifest.json.
void cmd_train(const ExperimentConfig& config);

struct CrossValRunOptions {
  /// Stop after this many newly completed folds (emulates an interruption).
  std::optional<std::size_t> max_new_folds;
};

/// Writes crossval_report.json and fold_<i>_confusion.csv, keeping progress in
/// folds_done.json; a rerun with the same config resumes from it. Returns
/// true when all folds are done.
bool cmd_crossval(const ExperimentConfig& config, const CrossValRunOptions& options = {});

/// Copies every original under `output_dir` keeping its class directory and
/// adds `<stem>__aug<k>.ppm` for k = 1..variants_per_image.
void cmd_augment(const ExperimentConfig& config, const std::filesystem::path& input_dir,
                 const std::filesystem::path& output_dir);

void cmd_activations(const std::filesystem::path& weights_path, const std::filesystem::path& image_path,
                     LayerSelector layer, const std::filesystem::path& output_dir);

/// Entry point of the `scnn` executable. Exit codes: 0 success, 1 runtime
/// failure, 2 usage error. Errors print a single `scnn: error: <kind>: <message>` line.
int run_cli(int argc, char** argv);

}  // namespace scnn
