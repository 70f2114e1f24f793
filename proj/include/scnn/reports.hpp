#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scnn/training.hpp"

namespace scnn {

/// JSON documents with sorted keys and round-trip number formatting, so equal
/// reports serialize to equal bytes.
std::string stage_reports_json(std::span<const StageReport> reports);
std::vector<StageReport> parse_stage_reports(std::string_view text);

std::string metrics_json(const Metrics& metrics, std::span<const std::string> class_names);
/// One fold's metrics and stage reports.
std::string fold_outcome_json(const FoldOutcome& fold, std::span<const std::string> class_names);
/// Accuracy of a document made by fold_outcome_json().
double fold_document_accuracy(std::string_view fold_document);
/// Summary plus the per-fold documents, in fold order.
std::string crossval_json(const CrossValReport& report, std::span<const std::string> fold_documents);
std::string crossval_json(const CrossValReport& report, std::span<const FoldOutcome> folds,
                          std::span<const std::string> class_names);
CrossValReport parse_crossval_report(std::string_view text);

/// Header row of predicted-class names, then one row per true class.
std::string confusion_csv(const Metrics& metrics, std::span<const std::string> class_names);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace scnn
