#include "stanceshift/runner.hpp"

#include <atomic>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "stanceshift/errors.hpp"
#include "stanceshift/language_pack.hpp"
#include "stanceshift/stance_probe.hpp"

namespace fs = std::filesystem;

namespace stanceshift {

std::string_view to_string(CellMode m) {
  switch (m) {
    case CellMode::baseline:
      return "baseline";
    case CellMode::paraphrase:
      return "paraphrase";
    case CellMode::fair:
      return "fair";
    case CellMode::biased:
      return "biased";
  }
  return "baseline";
}

CellMode cell_mode_from_string(std::string_view s) {
  for (CellMode m : {CellMode::baseline, CellMode::paraphrase, CellMode::fair, CellMode::biased})
    if (to_string(m) == s) return m;
  throw ParseError(fmt::format("unknown mode '{}'", s));
}

std::string Cell::key() const {
  auto k = fmt::format("{}|{}|{}|{}|{}", backend_id, question_id, language, to_string(mode), index);
  if (paraphrase_index) k += fmt::format("|p{}", *paraphrase_index);
  return k;
}

Json to_json(const Cell& c) {
  Json j{{"backend_id", c.backend_id}, {"question_id", c.question_id}, {"language", c.language},
         {"mode", to_string(c.mode)},  {"index", c.index}};
  if (c.paraphrase_index) j["paraphrase_index"] = *c.paraphrase_index;
  return j;
}

Cell cell_from_json(const Json& j) {
  Cell c;
  c.backend_id = j.at("backend_id").get<std::string>();
  c.question_id = j.at("question_id").get<std::string>();
  c.language = j.at("language").get<std::string>();
  c.mode = cell_mode_from_string(j.at("mode").get<std::string>());
  c.index = j.at("index").get<int>();
  if (j.contains("paraphrase_index") && !j.at("paraphrase_index").is_null()) {
    c.paraphrase_index = j.at("paraphrase_index").get<std::size_t>();
  }
  return c;
}

Json to_json(const RunManifest& m) {
  Json cells = Json::array();
  for (const auto& c : m.cells) cells.push_back(to_json(c));
  return Json{{"run_id", m.run_id}, {"seed", m.seed}, {"cells", std::move(cells)}};
}

RunManifest run_manifest_from_json(const Json& j) {
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.at("cells")) m.cells.push_back(cell_from_json(c));
  return m;
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (backends.empty()) throw ConfigurationError("run config needs at least one backend");
  if (languages.empty()) throw ConfigurationError("run config needs at least one language");
  if (repetitions < 1) throw ConfigurationError("repetitions must be >= 1");
  if (debates_per_question < 1) throw ConfigurationError("debates_per_question must be >= 1");
  if (concurrency < 1) throw ConfigurationError("concurrency must be >= 1");
  if (question_set.empty()) throw ConfigurationError("run config has no question_set");
  std::set<std::string> ids;
  for (const auto& b : backends) {
    b.validate();
    if (!ids.insert(b.backend_id).second) throw ConfigurationError(fmt::format("duplicate backend '{}'", b.backend_id));
  }
}

const BackendConfig& RunConfig::backend(std::string_view id) const {
  for (const auto& b : backends)
    if (b.backend_id == id) return b;
  throw ConfigurationError(fmt::format("unknown backend '{}'", id));
}

RunConfig run_config_from_json(const Json& j, const fs::path& base_dir) {
  auto resolve = [&](const fs::path& p) { return p.is_relative() && !base_dir.empty() ? (base_dir / p).lexically_normal() : p; };
  RunConfig cfg;
  try {
    cfg.run_id = j.value("run_id", std::string());
    for (const auto& b : j.at("backends")) cfg.backends.push_back(backend_config_from_json(b, base_dir));
    cfg.question_set = resolve(j.at("question_set").get<std::string>());
    cfg.pack_dir = resolve(j.value("language_pack_dir", std::string("packs")));
    cfg.languages = j.value("languages", cfg.languages);
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    cfg.debates_per_question = j.value("debates_per_question", cfg.debates_per_question);
    if (j.contains("modes")) {
      cfg.modes.clear();
      for (const auto& m : j.at("modes")) cfg.modes.insert(cell_mode_from_string(m.get<std::string>()));
    }
    cfg.output_dir = resolve(j.value("output_dir", std::string("runs")));
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.concurrency = j.value("concurrency", cfg.concurrency);
    cfg.zero_pre_score_side = side_from_string(j.value("zero_pre_score_side", std::string("pro")));
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("malformed run config: {}", e.what()));
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json_file(path), fs::absolute(path).parent_path());
}

Json to_json(const RunConfig& cfg) {
  Json backends = Json::array();
  for (const auto& b : cfg.backends) backends.push_back(to_json(b));
  Json modes = Json::array();
  for (auto m : cfg.modes) modes.push_back(to_string(m));
  return Json{{"run_id", cfg.run_id},
              {"backends", std::move(backends)},
              {"question_set", cfg.question_set.string()},
              {"language_pack_dir", cfg.pack_dir.string()},
              {"languages", cfg.languages},
              {"repetitions", cfg.repetitions},
              {"debates_per_question", cfg.debates_per_question},
              {"modes", std::move(modes)},
              {"output_dir", cfg.output_dir.string()},
              {"seed", cfg.seed},
              {"concurrency", cfg.concurrency},
              {"zero_pre_score_side", to_string(cfg.zero_pre_score_side)}};
}

// ---------------------------------------------------------------------------

RunManifest plan_run(const RunConfig& cfg) {
  cfg.validate();
  return plan_run(cfg, load_question_set(cfg.question_set));
}

RunManifest plan_run(const RunConfig& cfg, const QuestionSet& questions) {
  cfg.validate();
  std::vector<std::string> gaps;
  for (const auto& lang : cfg.languages) {
    if (!fs::exists(cfg.pack_dir / (lang + ".json"))) {
      gaps.push_back(fmt::format("no language pack '{}' in {}", lang, cfg.pack_dir.string()));
    } else {
      load_language_pack(cfg.pack_dir, lang);
    }
    for (const auto& q : questions.questions) {
      if (!q.has_language(lang)) gaps.push_back(fmt::format("question '{}' has no '{}' text", q.id, lang));
    }
  }
  for (const auto& b : cfg.backends) {
    if (b.backend_id.find('|') != std::string::npos) gaps.push_back(fmt::format("backend id '{}' contains '|'", b.backend_id));
  }
  for (const auto& q : questions.questions) {
    if (q.id.find('|') != std::string::npos) gaps.push_back(fmt::format("question id '{}' contains '|'", q.id));
  }
  if (!gaps.empty()) throw PlanningError(fmt::format("cannot plan run:\n  {}", fmt::join(gaps, "\n  ")));

  RunManifest m;
  m.seed = cfg.seed;
  m.run_id = cfg.run_id.empty() ? fmt::format("run-{}", cfg.seed) : cfg.run_id;
  for (const auto& b : cfg.backends) {
    for (const auto& lang : cfg.languages) {
      for (const auto& q : questions.questions) {
        const Cell base{b.backend_id, q.id, lang, CellMode::baseline, 0, std::nullopt};
        if (cfg.modes.contains(CellMode::baseline)) {
          for (int r = 0; r < cfg.repetitions; ++r) {
            auto c = base;
            c.index = r;
            m.cells.push_back(c);
          }
        }
        if (cfg.modes.contains(CellMode::paraphrase)) {
          for (std::size_t p = 0; p < q.paraphrase_count(lang); ++p) {
            for (int r = 0; r < cfg.repetitions; ++r) {
              auto c = base;
              c.mode = CellMode::paraphrase;
              c.index = r;
              c.paraphrase_index = p;
              m.cells.push_back(c);
            }
          }
        }
        for (CellMode mode : {CellMode::fair, CellMode::biased}) {
          if (!cfg.modes.contains(mode)) continue;
          for (int d = 0; d < cfg.debates_per_question; ++d) {
            auto c = base;
            c.mode = mode;
            c.index = d;
            m.cells.push_back(c);
          }
        }
      }
    }
  }

  // Fisher-Yates with an explicit draw so the order is identical across standard libraries.
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = m.cells.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(m.cells[i - 1], m.cells[j]);
  }
  return m;
}

// ---------------------------------------------------------------------------

namespace {

struct LedgerEntry {
  std::string key;
  std::string status;
};

// Reads JSON lines, stopping at the first malformed line (a torn final write).
// Returns the parsed lines and the byte length of the well-formed prefix.
std::pair<std::vector<Json>, std::uintmax_t> read_jsonl_prefix(const fs::path& path) {
  std::vector<Json> lines;
  std::uintmax_t good = 0;
  std::ifstream in(path, std::ios::binary);
  if (!in) return {lines, 0};
  std::string line;
  while (std::getline(in, line)) {
    if (in.eof()) break;  // no trailing newline: the write was cut short
    if (trim(line).empty()) {
      good += line.size() + 1;
      continue;
    }
    try {
      lines.push_back(Json::parse(line));
    } catch (const Json::parse_error&) {
      break;
    }
    good += line.size() + 1;
  }
  return {lines, good};
}

void truncate_to(const fs::path& path, std::uintmax_t size) {
  if (fs::exists(path) && fs::file_size(path) != size) fs::resize_file(path, size);
}

std::map<std::string, std::string> load_ledger(const fs::path& run_dir) {
  const auto path = run_dir / run_files::ledger;
  auto [lines, good] = read_jsonl_prefix(path);
  truncate_to(path, good);
  std::map<std::string, std::string> ledger;
  for (const auto& l : lines) ledger.emplace(l.at("cell").get<std::string>(), l.value("status", std::string("done")));
  return ledger;
}

// Keeps exactly one record per ledgered cell; anything written after the
// last ledger entry (a crash between record and ledger) is dropped.
std::vector<Json> compact_records(const fs::path& run_dir, const std::map<std::string, std::string>& ledger) {
  const auto path = run_dir / run_files::records;
  auto [lines, good] = read_jsonl_prefix(path);
  std::vector<Json> kept;
  std::set<std::string> seen;
  for (auto& l : lines) {
    const auto key = l.at("cell").get<std::string>();
    if (ledger.contains(key) && seen.insert(key).second) kept.push_back(std::move(l));
  }
  if (kept.size() != lines.size() || (fs::exists(path) && good != fs::file_size(path))) {
    std::string text;
    for (const auto& l : kept) text += l.dump() + "\n";
    write_text_atomic(path, text);
  }
  return kept;
}

class RunWriter {
 public:
  explicit RunWriter(const fs::path& run_dir)
      : records_(run_dir / run_files::records, std::ios::binary | std::ios::app),
        ledger_(run_dir / run_files::ledger, std::ios::binary | std::ios::app) {
    if (!records_ || !ledger_) throw Error("cannot open run files in '" + run_dir.string() + "'");
  }

  void commit(const Cell& cell, const Json& record, const std::string& status,
              const std::function<void(const Cell&)>& after_record) {
    std::lock_guard lock(mu_);
    records_ << record.dump() << '\n';
    records_.flush();
    if (!records_) throw Error("failed writing records");
    if (after_record) after_record(cell);
    ledger_ << Json{{"cell", cell.key()}, {"status", status}}.dump() << '\n';
    ledger_.flush();
    if (!ledger_) throw Error("failed writing ledger");
  }

 private:
  std::mutex mu_;
  std::ofstream records_;
  std::ofstream ledger_;
};

}  // namespace

fs::path prepare_run_directory(const RunManifest& manifest, const RunConfig& cfg) {
  const fs::path dir = cfg.output_dir / manifest.run_id;
  if (fs::exists(dir / run_files::manifest)) {
    if (load_run_manifest(dir).cells != manifest.cells) {
      throw ConfigurationError(fmt::format("'{}' already holds a different manifest", dir.string()));
    }
    return dir;
  }
  fs::create_directories(dir / run_files::packs);
  const auto questions = load_question_set(cfg.question_set);
  save_question_set(questions, dir / run_files::questions);
  for (const auto& lang : cfg.languages) {
    const auto pack = load_language_pack(cfg.pack_dir, lang);
    write_text_atomic(dir / run_files::packs / (lang + ".json"), to_json(pack).dump(2) + "\n");
  }
  RunConfig snapshot = cfg;
  snapshot.run_id = manifest.run_id;
  snapshot.question_set = run_files::questions;
  snapshot.pack_dir = run_files::packs;
  snapshot.output_dir = ".";
  write_text_atomic(dir / run_files::config, to_json(snapshot).dump(2) + "\n");
  write_text_atomic(dir / run_files::manifest, to_json(manifest).dump(2) + "\n");
  return dir;
}

RunConfig load_run_snapshot(const fs::path& run_dir) {
  auto cfg = run_config_from_json(read_json_file(run_dir / run_files::config), run_dir);
  const auto abs = fs::absolute(run_dir).lexically_normal();
  cfg.output_dir = (abs.has_filename() ? abs : abs.parent_path()).parent_path();
  cfg.run_id = (abs.has_filename() ? abs : abs.parent_path()).filename().string();
  return cfg;
}

RunManifest load_run_manifest(const fs::path& run_dir) {
  auto m = run_manifest_from_json(read_json_file(run_dir / run_files::manifest));
  for (auto& [key, status] : load_ledger(run_dir)) m.completed.insert(key);
  return m;
}

std::vector<Json> load_records(const fs::path& run_dir) {
  const auto ledger = load_ledger(run_dir);
  auto [lines, good] = read_jsonl_prefix(run_dir / run_files::records);
  std::vector<Json> kept;
  std::set<std::string> seen;
  for (auto& l : lines) {
    const auto key = l.at("cell").get<std::string>();
    if (ledger.contains(key) && seen.insert(key).second) kept.push_back(std::move(l));
  }
  return kept;
}

ExecuteSummary execute(const RunManifest& manifest, const RunConfig& cfg, const ExecuteOptions& options) {
  cfg.validate();
  const fs::path dir = prepare_run_directory(manifest, cfg);
  const auto questions = load_question_set(dir / run_files::questions);
  std::map<LanguageCode, LanguagePack> packs;
  for (const auto& lang : cfg.languages) packs.emplace(lang, load_language_pack(dir / run_files::packs, lang));

  const auto ledger = load_ledger(dir);
  compact_records(dir, ledger);

  ExecuteSummary summary;
  summary.run_dir = dir;
  summary.total_cells = manifest.cells.size();
  std::vector<const Cell*> pending;
  for (const auto& c : manifest.cells) {
    if (ledger.contains(c.key())) {
      ++summary.already_done;
    } else {
      pending.push_back(&c);
    }
  }
  for (const auto* c : pending) {
    cfg.backend(c->backend_id);
    questions.at(c->question_id);
    if (!packs.contains(c->language)) throw ConfigurationError(fmt::format("no pack for language '{}'", c->language));
  }

  auto gw_options = options.gateway;
  if (!gw_options.capture) gw_options.capture = std::make_shared<CaptureSink>(dir / run_files::captures);
  Gateway gateway(gw_options, options.transport);
  RunWriter writer(dir);
  DebateConfig debate_cfg{cfg.debates_per_question, cfg.zero_pre_score_side};

  const std::size_t limit = std::min(pending.size(), options.max_cells.value_or(pending.size()));
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> executed{0}, failed{0};
  std::atomic<bool> stop{false};
  std::mutex fatal_mu;
  std::exception_ptr fatal;

  auto run_cell = [&](const Cell& cell) -> std::pair<Json, std::string> {
    const auto& backend = cfg.backend(cell.backend_id);
    const ModelContext ctx{gateway, backend, packs.at(cell.language)};
    const auto& question = questions.at(cell.question_id);
    Json record{{"cell", cell.key()}, {"cell_info", to_json(cell)}};
    try {
      switch (cell.mode) {
        case CellMode::baseline:
        case CellMode::paraphrase:
          record["kind"] = "sample";
          record["sample"] = to_json(probe_once(ctx, question, cell.paraphrase_index));
          break;
        case CellMode::fair:
        case CellMode::biased: {
          const auto mode = cell.mode == CellMode::fair ? DebateMode::fair : DebateMode::biased;
          record["kind"] = "debate";
          record["outcome"] = to_json(run_debate(ctx, question, mode, cell.index, debate_cfg));
          break;
        }
      }
      return {record, "done"};
    } catch (const ConfigurationError&) {
      throw;
    } catch (const DebateAbortedError& e) {
      record["kind"] = "failure";
      record["error"] = "debate-aborted";
      record["reason"] = e.what();
    } catch (const Error& e) {
      record["kind"] = "failure";
      record["error"] = "cell-failed";
      record["reason"] = e.what();
    }
    return {record, "failed"};
  };

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= limit) return;
      const Cell& cell = *pending[i];
      try {
        auto [record, status] = run_cell(cell);
        if (status == "failed") {
          spdlog::warn("cell {} failed: {}", cell.key(), record.value("reason", std::string()));
          ++failed;
        }
        writer.commit(cell, record, status, options.after_record);
        ++executed;
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        stop.store(true);
        return;
      }
    }
  };

  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.concurrency), limit));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  summary.executed = executed.load();
  summary.failed = failed.load();
  summary.remaining = pending.size() - summary.executed;
  return summary;
}

ExecuteSummary resume(const fs::path& run_dir, const ExecuteOptions& options) {
  const auto cfg = load_run_snapshot(run_dir);
  auto manifest = run_manifest_from_json(read_json_file(run_dir / run_files::manifest));
  return execute(manifest, cfg, options);
}

std::vector<fs::path> export_fixtures(const fs::path& run_dir) {
  const auto [lines, good] = read_jsonl_prefix(run_dir / run_files::captures);
  if (lines.empty()) throw ReportError(fmt::format("'{}' has no captured exchanges", run_dir.string()));
  struct Script {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::string>> replies;
  };
  std::map<std::string, Script> scripts;
  for (const auto& l : lines) {
    const auto thread = chat_thread_from_json(l.at("thread"));
    auto& s = scripts[l.at("backend_id").get<std::string>()];
    const auto text = thread.concatenated();
    auto [it, inserted] = s.replies.try_emplace(text);
    if (inserted) s.order.push_back(text);
    it->second.push_back(l.at("reply").get<std::string>());
  }
  fs::create_directories(run_dir / run_files::fixtures);
  std::vector<fs::path> written;
  for (const auto& [backend, s] : scripts) {
    std::vector<MockRule> rules;
    for (const auto& text : s.order) rules.push_back({MatchKind::exact, text, s.replies.at(text)});
    const MockScript script(std::move(rules), "0");
    const auto path = run_dir / run_files::fixtures / (backend + ".mock.json");
    write_text_atomic(path, script.to_json().dump(2) + "\n");
    written.push_back(path);
  }
  return written;
}

}  // namespace stanceshift
