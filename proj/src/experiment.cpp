#include "scnn/experiment.hpp"

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "scnn/errors.hpp"
#include "scnn/reports.hpp"
#include "scnn/weights_io.hpp"

namespace scnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string probability_key(TransformKind kind) { return "p_" + std::string(to_string(kind)); }

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<long long>() < 0)) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

json config_to_json(const ExperimentConfig& c) {
  json j{{"dataset_root", c.dataset_root.generic_string()},
         {"output_dir", c.output_dir.generic_string()},
         {"protocol", std::string(to_string(c.protocol))},
         {"folds", c.folds},
         {"seed", c.train.seed},
         {"learning_rate", c.train.learning_rate},
         {"batch_size", c.train.batch_size},
         {"epochs", c.train.epochs},
         {"dropout", c.train.dropout},
         {"variants_per_image", c.augment.variants_per_image},
         {"rotation_range_degrees", c.augment.rotation_range_degrees},
         {"input_size", c.net.input_size},
         {"conv_filters", c.net.conv_filters},
         {"hidden_units", c.net.hidden_units},
         {"donor_weights", c.donor_weights.generic_string()}};
  for (auto k : kTransformOrder) j[probability_key(k)] = c.augment.p(k);
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    if (key == "dataset_root") {
      c.dataset_root = get_as<std::string>(v, key);
    } else if (key == "output_dir") {
      c.output_dir = get_as<std::string>(v, key);
    } else if (key == "protocol") {
      c.protocol = parse_protocol(get_as<std::string>(v, key));
    } else if (key == "folds") {
      c.folds = get_count(v, key);
    } else if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("config key 'seed' must be a non-negative integer");
      c.train.seed = v.get<std::uint64_t>();
    } else if (key == "learning_rate") {
      c.train.learning_rate = get_as<double>(v, key);
    } else if (key == "batch_size") {
      c.train.batch_size = get_count(v, key);
    } else if (key == "epochs") {
      c.train.epochs = get_count(v, key);
    } else if (key == "dropout") {
      c.train.dropout = get_as<double>(v, key);
    } else if (key == "variants_per_image") {
      c.augment.variants_per_image = get_count(v, key);
    } else if (key == "rotation_range_degrees") {
      c.augment.rotation_range_degrees = get_as<double>(v, key);
    } else if (key == "input_size") {
      c.net.input_size = get_count(v, key);
    } else if (key == "conv_filters") {
      if (!v.is_array()) throw ConfigError("config key 'conv_filters' must be an array of integers");
      c.net.conv_filters.clear();
      for (const auto& f : v) c.net.conv_filters.push_back(get_count(f, key));
    } else if (key == "hidden_units") {
      c.net.hidden_units = get_count(v, key);
    } else if (key == "donor_weights") {
      c.donor_weights = get_as<std::string>(v, key);
    } else {
      bool matched = false;
      for (auto k : kTransformOrder) {
        if (key == probability_key(k)) {
          c.augment.p(k) = get_as<double>(v, key);
          matched = true;
        }
      }
      if (!matched) throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return c;
}

void require_dataset_root(const ExperimentConfig& c) {
  if (c.dataset_root.empty()) throw ConfigError("dataset_root is not set");
  if (!fs::is_directory(c.dataset_root)) throw DatasetError("dataset root not found: " + c.dataset_root.string());
}

std::optional<WeightStore> load_donor(const ExperimentConfig& c) {
  if (c.donor_weights.empty()) return std::nullopt;
  return load_weights(c.donor_weights).weights;
}

std::uint64_t augment_seed(const ExperimentConfig& c) { return Rng(c.train.seed).fork("augment").seed(); }

// Write-then-rename so an interrupted run never leaves a torn file.
void write_atomically(const fs::path& path, std::string_view text) {
  const fs::path tmp = path.string() + ".tmp";
  write_text(tmp, text);
  fs::rename(tmp, path);
}

void validate_augment(const AugmentSpec& augment) {
  augment.validate();
  if (augment.variants_per_image > 0 && !augment.favors_rotation()) {
    throw ConfigError("rotation probabilities must exceed every other transform probability");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  train.validate();
  validate_augment(augment);
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (protocol_needs_donor(protocol) && donor_weights.empty()) {
    throw ConfigError("protocol " + std::string(to_string(protocol)) + " needs donor_weights");
  }
  if (!protocol_needs_donor(protocol) && !donor_weights.empty()) {
    throw ConfigError("protocol " + std::string(to_string(protocol)) + " takes no donor_weights");
  }
  if (net.hidden_units == 0 || net.conv_filters.empty()) throw ConfigError("network has no units to train");
  for (auto f : net.conv_filters)
    if (f == 0) throw ConfigError("conv_filters entries must be positive");
  try {
    (void)simple_cnn_spec(network_options(net, train.dropout, 2)).output_shapes();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("network does not fit the input size: ") + e.what());
  }
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) throw ConfigError("override must look like key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json j = config_to_json(config);
  if (!j.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  j[key] = value;
  config = config_from_json(j);
}

std::string config_lock_json(const ExperimentConfig& config) { return config_to_json(config).dump(2) + "\n"; }

std::string config_fingerprint(const ExperimentConfig& config) {
  auto j = config_to_json(config);
  j.erase("output_dir");  // where results go does not change them
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(0, j.dump())));
  return buf;
}

void cmd_train(const ExperimentConfig& config) {
  config.validate();
  require_dataset_root(config);
  const Manifest manifest = load_manifest(config.dataset_root);
  const auto originals = load_images(manifest, config.net.input_size);
  std::vector<const LabeledImage*> pointers;
  for (const auto& o : originals) pointers.push_back(&o);
  AugmentedSource data(std::move(pointers), config.augment, augment_seed(config));
  const auto donor = load_donor(config);

  const auto result = run_protocol(config.protocol, config.net, manifest.taxonomy.symptom_count(),
                                   manifest.taxonomy.parent_count(), data, config.train,
                                   donor ? &*donor : nullptr);
  fs::create_directories(config.output_dir);
  save_weights(result.model, config.output_dir / "model.weights");
  write_text(config.output_dir / "stage_reports.json", stage_reports_json(result.reports));
  write_text(config.output_dir / "config.lock.json", config_lock_json(config));
  write_text(config.output_dir / "manifest.json", manifest_to_json(manifest));
}

bool cmd_crossval(const ExperimentConfig& config, const CrossValRunOptions& options) {
  config.validate();
  require_dataset_root(config);
  const Manifest manifest = load_manifest(config.dataset_root);
  const auto originals = load_images(manifest, config.net.input_size);
  const auto donor = load_donor(config);

  CrossValSetup setup;
  setup.k = config.folds;
  setup.protocol = config.protocol;
  setup.net = config.net;
  setup.config = config.train;
  setup.augment = config.augment;
  setup.donor = donor ? &*donor : nullptr;
  setup.symptoms = manifest.taxonomy.symptom_count();
  setup.parents = manifest.taxonomy.parent_count();
  const FoldPlan plan = plan_folds(originals, setup.k, config.train.seed);

  fs::create_directories(config.output_dir);
  write_text(config.output_dir / "config.lock.json", config_lock_json(config));
  write_text(config.output_dir / "manifest.json", manifest_to_json(manifest, &plan));

  const fs::path checkpoint = config.output_dir / "folds_done.json";
  const std::string fingerprint = config_fingerprint(config);
  std::vector<std::optional<std::string>> docs(setup.k);
  if (fs::exists(checkpoint)) {
    json j;
    try {
      j = json::parse(read_text(checkpoint));
      if (j.at("fingerprint").get<std::string>() != fingerprint) {
        throw FormatError("folds_done.json was written by a different config; remove it to start over");
      }
      for (auto it = j.at("folds").begin(); it != j.at("folds").end(); ++it) {
        const std::size_t f = std::stoul(it.key());
        if (f >= setup.k) throw FormatError("folds_done.json lists fold " + it.key() + " beyond k");
        docs[f] = it.value().dump();
      }
    } catch (const json::exception& e) {
      throw FormatError(std::string("malformed folds_done.json: ") + e.what());
    }
  }

  const auto& names = manifest.taxonomy.parents();
  std::size_t fresh = 0;
  for (std::size_t f = 0; f < setup.k; ++f) {
    if (docs[f]) continue;
    if (options.max_new_folds && fresh >= *options.max_new_folds) return false;
    const FoldOutcome outcome = run_fold(setup, originals, plan, f);
    write_text(config.output_dir / ("fold_" + std::to_string(f) + "_confusion.csv"),
               confusion_csv(outcome.metrics, names));
    docs[f] = fold_outcome_json(outcome, names);
    json done{{"fingerprint", fingerprint}, {"k", setup.k}, {"folds", json::object()}};
    for (std::size_t g = 0; g < setup.k; ++g)
      if (docs[g]) done["folds"][std::to_string(g)] = json::parse(*docs[g]);
    write_atomically(checkpoint, done.dump(2) + "\n");
    ++fresh;
  }

  std::vector<double> accuracy;
  std::vector<std::string> all;
  for (const auto& d : docs) {
    accuracy.push_back(fold_document_accuracy(*d));
    all.push_back(*d);
  }
  const auto report = CrossValReport::from_folds(std::move(accuracy));
  write_text(config.output_dir / "crossval_report.json", crossval_json(report, all));
  return true;
}

void cmd_augment(const ExperimentConfig& config, const fs::path& input_dir, const fs::path& output_dir) {
  validate_augment(config.augment);
  if (config.net.input_size == 0) throw ConfigError("input_size must be positive");
  const Manifest manifest = load_manifest(input_dir);
  const std::uint64_t seed = augment_seed(config);
  for (const auto& s : manifest.samples) {
    const fs::path class_dir = output_dir / manifest.taxonomy.symptoms()[s.symptom];
    fs::create_directories(class_dir);
    fs::copy_file(s.path, class_dir / s.path.filename(), fs::copy_options::overwrite_existing);
    Image image = read_ppm(s.path);
    if (image.height != config.net.input_size || image.width != config.net.input_size) {
      image = resize(image, config.net.input_size, config.net.input_size);
    }
    for (std::size_t k = 1; k <= config.augment.variants_per_image; ++k) {
      const std::string name = s.path.stem().string() + "__aug" + std::to_string(k) + ".ppm";
      write_ppm(class_dir / name, make_variant(image, config.augment, seed, s.id, k));
    }
  }
}

void cmd_activations(const fs::path& weights_path, const fs::path& image_path, LayerSelector layer,
                     const fs::path& output_dir) {
  const Model model = load_weights(weights_path);
  Image image = read_ppm(image_path);
  const std::size_t h = model.spec.input.at(0), w = model.spec.input.at(1);
  if (image.height != h || image.width != w) image = resize(image, h, w);
  const auto dump = export_activations(model.spec, model.weights, to_tensor(image), layer);
  fs::create_directories(output_dir);
  write_activation_dump(dump, output_dir);
}

// ---------------------------------------------------------------------------

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> dataset_root, output_dir, protocol;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, folds;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool dataset_flags) {
  cmd->add_option("-c,--config", f.config_path, "JSON config file");
  cmd->add_option("--set", f.overrides, "key=value override (repeatable)");
  cmd->add_option("--seed", f.seed, "random seed");
  if (dataset_flags) {
    cmd->add_option("--dataset-root", f.dataset_root, "dataset directory");
    cmd->add_option("--output-dir", f.output_dir, "output directory");
    cmd->add_option("--protocol", f.protocol, "two_stage | baseline | transfer | fine_tune");
    cmd->add_option("--epochs", f.epochs, "epochs per stage");
  }
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig c;
  if (!f.config_path.empty()) {
    if (!fs::exists(f.config_path)) throw ConfigError("config file not found: " + f.config_path);
    c = parse_config(read_text(f.config_path));
  }
  for (const auto& o : f.overrides) apply_override(c, o);
  if (f.dataset_root) c.dataset_root = *f.dataset_root;
  if (f.output_dir) c.output_dir = *f.output_dir;
  if (f.protocol) c.protocol = parse_protocol(*f.protocol);
  if (f.seed) c.train.seed = *f.seed;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.folds) c.folds = *f.folds;
  return c;
}

std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

int report_error(std::string_view kind, const std::exception& e, int code) {
  std::cerr << "scnn: error: " << kind << ": " << one_line(e.what()) << std::endl;
  return code;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Simple CNN trainer for rice disease and pest images"};
  app.require_subcommand(1);

  CommonFlags train_flags, cv_flags, aug_flags;
  auto* train_cmd = app.add_subcommand("train", "train one model on the whole dataset");
  add_common(train_cmd, train_flags, true);

  auto* cv_cmd = app.add_subcommand("crossval", "stratified k-fold cross-validation");
  add_common(cv_cmd, cv_flags, true);
  cv_cmd->add_option("--folds", cv_flags.folds, "number of folds");
  std::optional<std::size_t> max_folds;
  cv_cmd->add_option("--max-folds", max_folds, "stop after this many newly completed folds");

  auto* aug_cmd = app.add_subcommand("augment", "write an augmented copy of a PPM class tree");
  add_common(aug_cmd, aug_flags, false);
  std::string aug_in, aug_out;
  aug_cmd->add_option("--input", aug_in, "class tree to read")->required();
  aug_cmd->add_option("--output", aug_out, "directory to write")->required();

  auto* act_cmd = app.add_subcommand("activations", "export convolution activation maps");
  std::string weights_path, image_path, layer_name, act_out;
  act_cmd->add_option("--weights", weights_path, "model.weights file")->required();
  act_cmd->add_option("--image", image_path, "P6 image")->required();
  act_cmd->add_option("--layer", layer_name, "first_conv | last_conv")->required();
  act_cmd->add_option("--output-dir", act_out, "directory for the maps")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return 0;
    }
    std::cerr << "scnn: error: usage: " << one_line(e.what()) << std::endl;
    return 2;
  }

  try {
    if (*train_cmd) {
      const auto config = resolve_config(train_flags);
      cmd_train(config);
      std::cout << "wrote " << (config.output_dir / "model.weights").string() << "\n";
    } else if (*cv_cmd) {
      const auto config = resolve_config(cv_flags);
      CrossValRunOptions options;
      options.max_new_folds = max_folds;
      if (cmd_crossval(config, options)) {
        std::cout << "wrote " << (config.output_dir / "crossval_report.json").string() << "\n";
      } else {
        std::cout << "stopped early; progress kept in " << (config.output_dir / "folds_done.json").string()
                  << "\n";
      }
    } else if (*aug_cmd) {
      cmd_augment(resolve_config(aug_flags), aug_in, aug_out);
    } else if (*act_cmd) {
      const LayerSelector layer = parse_layer_selector(layer_name);
      cmd_activations(weights_path, image_path, layer, act_out);
    }
  } catch (const ConfigError& e) {
    return report_error("usage", e, 2);
  } catch (const DatasetError& e) {
    return report_error("dataset", e, 1);
  } catch (const FormatError& e) {
    return report_error("format", e, 1);
  } catch (const ShapeError& e) {
    return report_error("shape", e, 1);
  } catch (const std::exception& e) {
    return report_error("runtime", e, 1);
  }
  return 0;
}

}  // namespace scnn
