#include "scnn/reports.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "scnn/errors.hpp"

namespace scnn {

using nlohmann::json;

namespace {

json stage_json(const StageReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) epochs.push_back({{"loss", e.loss}, {"accuracy", e.accuracy}});
  json j{{"stage", r.stage},
         {"configured_epochs", r.configured_epochs},
         {"steps", r.steps},
         {"epochs", epochs},
         {"stopped_early", r.stopped_early}};
  if (r.stopped_early) j["stop_reason"] = r.stop_reason;
  return j;
}

json metrics_to_json(const Metrics& m, std::span<const std::string> names) {
  return {{"classes", std::vector<std::string>(names.begin(), names.end())},
          {"count", m.count},
          {"accuracy", m.accuracy},
          {"loss", m.loss},
          {"confusion", m.confusion},
          {"precision", m.precision},
          {"recall", m.recall}};
}

}  // namespace

std::string stage_reports_json(std::span<const StageReport> reports) {
  json j = json::array();
  for (const auto& r : reports) j.push_back(stage_json(r));
  return j.dump(2) + "\n";
}

std::vector<StageReport> parse_stage_reports(std::string_view text) {
  try {
    std::vector<StageReport> out;
    for (const auto& s : json::parse(text)) {
      StageReport r;
      r.stage = s.at("stage").get<std::string>();
      r.configured_epochs = s.at("configured_epochs").get<std::size_t>();
      r.steps = s.at("steps").get<std::size_t>();
      for (const auto& e : s.at("epochs")) r.epochs.push_back({e.at("loss").get<double>(), e.at("accuracy").get<double>()});
      r.stopped_early = s.at("stopped_early").get<bool>();
      if (r.stopped_early) r.stop_reason = s.at("stop_reason").get<std::string>();
      out.push_back(std::move(r));
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed stage report: ") + e.what());
  }
}

std::string metrics_json(const Metrics& metrics, std::span<const std::string> class_names) {
  return metrics_to_json(metrics, class_names).dump(2) + "\n";
}

std::string fold_outcome_json(const FoldOutcome& fold, std::span<const std::string> class_names) {
  json stages = json::array();
  for (const auto& r : fold.reports) stages.push_back(stage_json(r));
  json j{{"fold", fold.fold},
         {"train_count", fold.train_count},
         {"metrics", metrics_to_json(fold.metrics, class_names)},
         {"stages", stages}};
  return j.dump();
}

double fold_document_accuracy(std::string_view fold_document) {
  try {
    return json::parse(fold_document).at("metrics").at("accuracy").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed fold document: ") + e.what());
  }
}

std::string crossval_json(const CrossValReport& report, std::span<const std::string> fold_documents) {
  json per_fold = json::array();
  for (const auto& doc : fold_documents) per_fold.push_back(json::parse(doc));
  json j{{"fold_accuracy", report.fold_accuracy},
         {"mean", report.mean},
         {"std_dev", report.std_dev},
         {"folds", per_fold}};
  return j.dump(2) + "\n";
}

std::string crossval_json(const CrossValReport& report, std::span<const FoldOutcome> folds,
                          std::span<const std::string> class_names) {
  std::vector<std::string> docs;
  for (const auto& f : folds) docs.push_back(fold_outcome_json(f, class_names));
  return crossval_json(report, docs);
}

CrossValReport parse_crossval_report(std::string_view text) {
  try {
    const auto j = json::parse(text);
    CrossValReport r;
    r.fold_accuracy = j.at("fold_accuracy").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std_dev = j.at("std_dev").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed cross-validation report: ") + e.what());
  }
}

std::string confusion_csv(const Metrics& metrics, std::span<const std::string> class_names) {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  std::ostringstream out;
  out << "true\\predicted";
  for (std::size_t c = 0; c < metrics.classes; ++c)
    out << ',' << quote(c < class_names.size() ? class_names[c] : std::to_string(c));
  out << '\n';
  for (std::size_t r = 0; r < metrics.classes; ++r) {
    out << quote(r < class_names.size() ? class_names[r] : std::to_string(r));
    for (std::size_t c = 0; c < metrics.classes; ++c) out << ',' << metrics.confusion[r][c];
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace scnn
