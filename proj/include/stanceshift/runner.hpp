#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stanceshift/debate.hpp"
#include "stanceshift/gateway.hpp"
#include "stanceshift/question_bank.hpp"

namespace stanceshift {

enum class CellMode { baseline, paraphrase, fair, biased };

std::string_view to_string(CellMode m);
CellMode cell_mode_from_string(std::string_view s);

/// One atomic unit of the run matrix: a single stance probe or a single debate.
struct Cell {
  std::string backend_id;
  std::string question_id;
  LanguageCode language;
  CellMode mode = CellMode::baseline;
  int index = 0;  ///< repetition or debate index
  std::optional<std::size_t> paraphrase_index;

  /// "backend|question|lang|mode|index[|p<k>]"
  std::string key() const;

  friend bool operator==(const Cell&, const Cell&) = default;
};

Json to_json(const Cell& c);
Cell cell_from_json(const Json& j);

struct RunManifest {
  std::string run_id;
  std::uint64_t seed = 0;
  std::vector<Cell> cells;
  std::set<std::string> completed;  ///< ledger of finished cell keys

  friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

Json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const Json& j);

struct RunConfig {
  std::string run_id;
  std::vector<BackendConfig> backends;
  std::filesystem::path question_set;
  std::filesystem::path pack_dir = "packs";
  std::vector<LanguageCode> languages{"en"};
  int repetitions = 20;
  int debates_per_question = 5;
  std::set<CellMode> modes{CellMode::baseline, CellMode::paraphrase, CellMode::fair, CellMode::biased};
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;
  int concurrency = 4;
  Side zero_pre_score_side = Side::pro;

  void validate() const;
  const BackendConfig& backend(std::string_view id) const;
};

/// Relative paths inside the file are resolved against the file's directory.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {});
Json to_json(const RunConfig& cfg);

/// Deterministic for a given config and seed. Throws PlanningError listing
/// every (backend, language, question) gap.
RunManifest plan_run(const RunConfig& cfg);
RunManifest plan_run(const RunConfig& cfg, const QuestionSet& questions);

struct ExecuteOptions {
  /// Stop after claiming this many pending cells (simulates an interruption).
  std::optional<std::size_t> max_cells;
  /// Runs after a cell's record is flushed and before the cell enters the ledger.
  std::function<void(const Cell&)> after_record;
  GatewayOptions gateway;
  std::shared_ptr<Transport> transport;
};

struct ExecuteSummary {
  std::filesystem::path run_dir;
  std::size_t total_cells = 0;
  std::size_t already_done = 0;
  std::size_t executed = 0;
  std::size_t failed = 0;
  std::size_t remaining = 0;
};

/// File names inside a run directory.
namespace run_files {
inline constexpr const char* config = "config.json";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* questions = "question_set.json";
inline constexpr const char* packs = "packs";
inline constexpr const char* records = "records.jsonl";
inline constexpr const char* ledger = "ledger.jsonl";
inline constexpr const char* captures = "captures.jsonl";
inline constexpr const char* reports = "reports";
inline constexpr const char* fixtures = "fixtures";
inline constexpr const char* annotations = "annotations";
}  // namespace run_files

/// Creates `<output_dir>/<run_id>` with a self-contained snapshot (config,
/// question set, packs, manifest) unless it already exists.
std::filesystem::path prepare_run_directory(const RunManifest& manifest, const RunConfig& cfg);

/// Executes every cell not yet in the ledger. Each record is flushed before
/// its ledger entry is written; re-invocation resumes without duplicates.
ExecuteSummary execute(const RunManifest& manifest, const RunConfig& cfg, const ExecuteOptions& options = {});

/// Reloads the snapshot in `run_dir` and continues execution.
ExecuteSummary resume(const std::filesystem::path& run_dir, const ExecuteOptions& options = {});

RunConfig load_run_snapshot(const std::filesystem::path& run_dir);
RunManifest load_run_manifest(const std::filesystem::path& run_dir);

/// Records of completed cells, one per ledgered cell, in file order.
std::vector<Json> load_records(const std::filesystem::path& run_dir);

/// Writes `fixtures/<backend>.mock.json` replaying every captured exchange.
std::vector<std::filesystem::path> export_fixtures(const std::filesystem::path& run_dir);

}  // namespace stanceshift
