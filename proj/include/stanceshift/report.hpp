#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stanceshift/metrics.hpp"
#include "stanceshift/runner.hpp"

namespace stanceshift {

/// Metrics of one (backend, language) pair as they appear in a report.
struct ReportRow {
  std::string label;  ///< backend id, suffixed "-<lang>" for non-default languages
  ModelMetrics metrics;
  std::vector<QuestionMetrics> questions;
  std::vector<CategoryAggregate> categories;
  std::vector<std::pair<std::string, ModelMetrics>> per_category;
};

struct ReportBundle {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> files;
  std::vector<ReportRow> rows;
  std::vector<std::string> warnings;
};

/// Builds every table from the records in `run_dir`; pure function of the directory contents.
/// Throws ReportError when the run has no completed cell.
ReportBundle build_report(const std::filesystem::path& run_dir);

/// build_report plus CSV and JSON files under `<run_dir>/reports`.
ReportBundle emit_report(const std::filesystem::path& run_dir);

/// Label convention: "GPT4" for the default language, "GPT4-ar" otherwise.
std::string row_label(const std::string& backend_id, const LanguageCode& language, const LanguageCode& default_language);

/// "1.36" with two decimals, or "NA" when absent.
std::string format_cell(const std::optional<double>& v);

}  // namespace stanceshift
