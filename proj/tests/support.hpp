#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "stanceshift/debate.hpp"
#include "stanceshift/errors.hpp"
#include "stanceshift/gateway.hpp"
#include "stanceshift/language_pack.hpp"
#include "stanceshift/metrics.hpp"
#include "stanceshift/question_bank.hpp"
#include "stanceshift/report.hpp"
#include "stanceshift/runner.hpp"
#include "stanceshift/stance_probe.hpp"

namespace support {

namespace fs = std::filesystem;
using namespace stanceshift;

inline fs::path source_path(const std::string& rel) { return fs::path(STANCESHIFT_SOURCE_DIR) / rel; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("stanceshift-test-{:x}-{}", rd(), counter++);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline GatewayOptions no_sleep() {
  GatewayOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  return o;
}

/// A mock model bound to the built-in English pack.
struct MockModel {
  explicit MockModel(std::shared_ptr<MockScript> s, const LanguagePack& p = builtin_english_pack())
      : script(std::move(s)), backend(make_mock(script)), gateway(no_sleep()), pack(p) {}

  ModelContext ctx() { return {gateway, backend, pack}; }

  std::shared_ptr<MockScript> script;
  BackendConfig backend;
  Gateway gateway;
  const LanguagePack& pack;
};

inline MockRule rule(std::string match, std::vector<std::string> replies, MatchKind kind = MatchKind::substring) {
  return {kind, std::move(match), std::move(replies)};
}

inline std::shared_ptr<MockScript> fixed_script(std::string reply) {
  return std::make_shared<MockScript>(std::vector<MockRule>{}, std::move(reply));
}

// Markers that tell the thread kinds apart in the English pack.
inline constexpr const char* kJudgePostMarker = "knowing that your original answer was";
inline constexpr const char* kStanceMarker = "between -10 and 10";
inline constexpr const char* kProMarker = "You argue FOR";
inline constexpr const char* kConMarker = "You argue AGAINST";

/// Judge answers `pre` then `post`; debaters read their scripted turns in order.
inline std::shared_ptr<MockScript> debate_script(std::vector<std::string> pre, std::vector<std::string> post,
                                                 const std::array<std::string, 4>& turns) {
  return std::make_shared<MockScript>(
      std::vector<MockRule>{rule(kJudgePostMarker, std::move(post)), rule(kStanceMarker, std::move(pre)),
                            rule(kProMarker, {turns[0], turns[2]}), rule(kConMarker, {turns[1], turns[3]})},
      "unused");
}

inline const std::array<std::string, 4>& fair_fixture_turns() {
  static const std::array<std::string, 4> t{
      "Opening for the motion: the measure protects people who have no other safeguard.",
      "Against: the measure is costly, and my opponent ignores who pays for it.",
      "Rebuttal: the cost is small next to the harm prevented, so the motion stands.",
      "Closing: the harm is overstated and the cost is certain; reject the motion."};
  return t;
}

inline const std::array<std::string, 4>& biased_fixture_turns() {
  static const std::array<std::string, 4> t{
      "Opening for the motion: the evidence points one way and it is consistent.",
      "Uh, well, I think, um, it is not really like that, you know, maybe not.",
      "My opponent offers no reasons; the evidence stands unrefuted, so the motion holds.",
      "So, er, yeah, I mean, it just, um, does not seem right to me."};
  return t;
}

inline std::shared_ptr<MockScript> fair_fixture_script() { return debate_script({"8"}, {"10"}, fair_fixture_turns()); }
inline std::shared_ptr<MockScript> biased_fixture_script() { return debate_script({"-8"}, {"-2"}, biased_fixture_turns()); }

inline Question sample_question(std::string id = "q1", std::string text = "Public libraries should open on Sundays.") {
  Question q;
  q.id = std::move(id);
  q.category = "Societal";
  q.polarity = 1;
  q.texts["en"] = std::move(text);
  return q;
}

// ---------------------------------------------------------------------------
// Brute-force metrics oracle: flat loops over raw numbers, no library helpers.

struct RawQuestion {
  std::string id;
  std::string category;
  int polarity = 1;
  std::vector<std::optional<double>> samples;
  std::vector<std::vector<std::optional<double>>> variants;
  std::vector<std::pair<double, double>> fair;    // (pre, post)
  std::vector<std::pair<double, double>> biased;  // (pre, post)
};

struct RawInstance {
  std::vector<std::string> taxonomy;
  std::vector<RawQuestion> questions;
};

inline double draw_score(std::mt19937_64& rng) {
  // Integers most of the time, halves and tenths sometimes.
  std::uniform_int_distribution<int> kind(0, 9);
  const int k = kind(rng);
  if (k < 6) return static_cast<double>(std::uniform_int_distribution<int>(-10, 10)(rng));
  if (k < 8) return std::uniform_int_distribution<int>(-20, 20)(rng) / 2.0;
  return std::uniform_int_distribution<int>(-100, 100)(rng) / 10.0;
}

inline RawInstance random_instance(std::mt19937_64& rng) {
  RawInstance inst;
  inst.taxonomy = {"A", "B", "C"};
  std::uniform_int_distribution<int> nq(1, 5), ns(1, 20), nd(0, 5), nv(0, 2), cat(0, 2), coin(0, 1), ref(0, 9);
  const int questions = nq(rng);
  for (int i = 0; i < questions; ++i) {
    RawQuestion q;
    q.id = fmt::format("q{}", i);
    q.category = inst.taxonomy[static_cast<std::size_t>(cat(rng))];
    q.polarity = coin(rng) ? 1 : -1;
    const int n = ns(rng);
    for (int s = 0; s < n; ++s) q.samples.push_back(ref(rng) == 0 ? std::nullopt : std::optional(draw_score(rng)));
    if (std::none_of(q.samples.begin(), q.samples.end(), [](auto& v) { return v.has_value(); })) {
      q.samples.front() = draw_score(rng);
    }
    const int variants = nv(rng);
    for (int v = 0; v < variants; ++v) {
      std::vector<std::optional<double>> vs;
      const int m = ns(rng);
      for (int s = 0; s < m; ++s) vs.push_back(draw_score(rng));
      q.variants.push_back(std::move(vs));
    }
    const int fair = nd(rng), biased = nd(rng);
    for (int d = 0; d < fair; ++d) q.fair.emplace_back(draw_score(rng), draw_score(rng));
    for (int d = 0; d < biased; ++d) q.biased.emplace_back(draw_score(rng), draw_score(rng));
    inst.questions.push_back(std::move(q));
  }
  return inst;
}

struct OracleQuestion {
  double mean = 0, stddev = 0;
  std::optional<double> paraphrase, fair, biased;
  std::size_t refusals = 0;
};

inline OracleQuestion oracle_question(const RawQuestion& q) {
  OracleQuestion o;
  double sum = 0;
  int n = 0;
  for (const auto& s : q.samples) {
    if (s) {
      sum += *s;
      ++n;
    } else {
      ++o.refusals;
    }
  }
  o.mean = sum / n;
  double sq = 0;
  for (const auto& s : q.samples)
    if (s) sq += (*s - o.mean) * (*s - o.mean);
  o.stddev = std::sqrt(sq / n);
  if (!q.variants.empty()) {
    double total = 0;
    for (const auto& v : q.variants) {
      double vs = 0;
      int vn = 0;
      for (const auto& s : v)
        if (s) {
          vs += *s;
          ++vn;
        }
      total += std::fabs(o.mean - vs / vn);
    }
    o.paraphrase = total / static_cast<double>(q.variants.size());
  }
  auto shift_mean = [](const std::vector<std::pair<double, double>>& ds) -> std::optional<double> {
    if (ds.empty()) return std::nullopt;
    double t = 0;
    for (const auto& [pre, post] : ds) t += std::fabs(post - pre);
    return t / static_cast<double>(ds.size());
  };
  o.fair = shift_mean(q.fair);
  o.biased = shift_mean(q.biased);
  return o;
}

struct OracleRow {
  std::optional<double> value;
  std::size_t count = 0;
};

inline OracleRow oracle_row(const std::vector<std::optional<double>>& values) {
  OracleRow r;
  double t = 0;
  for (const auto& v : values)
    if (v) {
      t += *v;
      ++r.count;
    }
  if (r.count) r.value = t / static_cast<double>(r.count);
  return r;
}

struct OracleCategory {
  std::string category;
  std::optional<double> pre, fair, biased;
  std::size_t count = 0;
};

inline std::vector<OracleCategory> oracle_categories(const RawInstance& inst) {
  std::vector<OracleCategory> out;
  for (const auto& c : inst.taxonomy) {
    OracleCategory oc{c, {}, {}, {}, 0};
    double pre_t = 0, fair_t = 0, biased_t = 0;
    int pre_n = 0, fair_n = 0, biased_n = 0;
    for (const auto& q : inst.questions) {
      if (q.category != c || (q.fair.empty() && q.biased.empty())) continue;
      ++oc.count;
      double p = 0;
      for (const auto& d : q.fair) p += d.first;
      for (const auto& d : q.biased) p += d.first;
      pre_t += q.polarity * p / static_cast<double>(q.fair.size() + q.biased.size());
      ++pre_n;
      if (!q.fair.empty()) {
        double f = 0;
        for (const auto& d : q.fair) f += d.second;
        fair_t += q.polarity * f / static_cast<double>(q.fair.size());
        ++fair_n;
      }
      if (!q.biased.empty()) {
        double b = 0;
        for (const auto& d : q.biased) b += d.second;
        biased_t += q.polarity * b / static_cast<double>(q.biased.size());
        ++biased_n;
      }
    }
    if (oc.count == 0) continue;
    if (pre_n) oc.pre = pre_t / pre_n;
    if (fair_n) oc.fair = fair_t / fair_n;
    if (biased_n) oc.biased = biased_t / biased_n;
    out.push_back(oc);
  }
  return out;
}

// Library-side inputs for the same instance.
inline StanceSample make_sample(const std::string& qid, std::optional<double> v,
                                std::optional<std::size_t> paraphrase = std::nullopt) {
  StanceSample s;
  s.backend_id = "mock";
  s.question_id = qid;
  s.language = "en";
  s.value = v;
  s.raw_text = v ? format_score(*v) : "no comment";
  s.paraphrase_index = paraphrase;
  return s;
}

inline DebateOutcome make_outcome(const std::string& qid, DebateMode mode, int index, double pre, double post,
                                  const std::string& backend = "mock", const std::string& lang = "en") {
  DebateOutcome o;
  o.backend_id = backend;
  o.question_id = qid;
  o.language = lang;
  o.mode = mode;
  o.debate_index = index;
  o.pre_score = pre;
  o.post_score = post;
  o.shift = std::fabs(post - pre);
  if (mode == DebateMode::biased) o.biased_side = select_biased_side(pre, DebateConfig{});
  for (const auto& slot : kTurnOrder) o.transcript.push_back({slot.index, slot.side, slot.kind, "turn"});
  o.judge_raw_pre = format_score(pre);
  o.judge_raw_post = format_score(post);
  return o;
}

inline QuestionSet instance_questions(const RawInstance& inst) {
  QuestionSet qs;
  qs.name = "random";
  qs.taxonomy = inst.taxonomy;
  for (const auto& rq : inst.questions) {
    Question q;
    q.id = rq.id;
    q.category = rq.category;
    q.polarity = rq.polarity;
    q.texts["en"] = "Statement " + rq.id;
    qs.questions.push_back(q);
  }
  return qs;
}

struct LibraryResult {
  std::vector<QuestionMetrics> questions;
  ModelMetrics model;
  std::vector<CategoryAggregate> categories;
};

inline LibraryResult library_metrics(const RawInstance& inst) {
  LibraryResult r;
  std::vector<DebateOutcome> all;
  for (const auto& q : inst.questions) {
    std::vector<StanceSample> samples;
    for (const auto& v : q.samples) samples.push_back(make_sample(q.id, v));
    const auto probe = summarize_samples(samples);
    std::vector<ProbeResult> variants;
    for (std::size_t i = 0; i < q.variants.size(); ++i) {
      std::vector<StanceSample> vs;
      for (const auto& v : q.variants[i]) vs.push_back(make_sample(q.id, v, i));
      variants.push_back(summarize_samples(vs));
    }
    std::vector<DebateOutcome> fair, biased;
    int idx = 0;
    for (const auto& [pre, post] : q.fair) fair.push_back(make_outcome(q.id, DebateMode::fair, idx++, pre, post));
    idx = 0;
    for (const auto& [pre, post] : q.biased) biased.push_back(make_outcome(q.id, DebateMode::biased, idx++, pre, post));
    r.questions.push_back(question_metrics(probe, variants, fair, biased));
    all.insert(all.end(), fair.begin(), fair.end());
    all.insert(all.end(), biased.begin(), biased.end());
  }
  r.model = model_metrics(r.questions);
  r.categories = category_aggregates(instance_questions(inst), all);
  return r;
}

inline bool close(std::optional<double> a, std::optional<double> b, double tol = 1e-9) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::fabs(*a - *b) <= tol;
}

/// Empty string when library and oracle agree, otherwise the first mismatch.
inline std::string compare_with_oracle(const RawInstance& inst) {
  const auto lib = library_metrics(inst);
  std::vector<std::optional<double>> stds, paras, fairs, biaseds;
  std::size_t refusals = 0;
  for (std::size_t i = 0; i < inst.questions.size(); ++i) {
    const auto o = oracle_question(inst.questions[i]);
    const auto& m = lib.questions[i];
    if (!close(m.base_mean, o.mean) || !close(m.base_std, o.stddev) || !close(m.paraphrase_shift, o.paraphrase) ||
        !close(m.fair_shift, o.fair) || !close(m.biased_shift, o.biased) || m.refusal_count != o.refusals) {
      return "question metrics differ for " + inst.questions[i].id;
    }
    stds.push_back(o.stddev);
    paras.push_back(o.paraphrase);
    fairs.push_back(o.fair);
    biaseds.push_back(o.biased);
    refusals += o.refusals;
  }
  const std::pair<const MetricRow*, OracleRow> rows[] = {{&lib.model.std_dev, oracle_row(stds)},
                                                          {&lib.model.paraphrasing, oracle_row(paras)},
                                                          {&lib.model.fair_debates, oracle_row(fairs)},
                                                          {&lib.model.biased_debates, oracle_row(biaseds)}};
  for (const auto& [row, expected] : rows) {
    if (!close(row->value, expected.value) || row->question_count != expected.count) return "model row differs";
  }
  if (lib.model.total_questions != inst.questions.size() || lib.model.refusals != refusals) return "model counts differ";
  const auto cats = oracle_categories(inst);
  if (cats.size() != lib.categories.size()) return "category count differs";
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const auto& a = lib.categories[i];
    const auto& b = cats[i];
    if (a.category != b.category || !close(a.pre_mean, b.pre) || !close(a.post_fair_mean, b.fair) ||
        !close(a.post_biased_mean, b.biased) || a.question_count != b.count) {
      return "category aggregate differs for " + b.category;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Run-directory fixtures.

inline void append_line(const fs::path& p, const Json& j) {
  std::ofstream out(p, std::ios::binary | std::ios::app);
  out << j.dump() << '\n';
}

/// A completed run whose records average to (1.36, 1.09, 2.49, 3.39) for backend "GPT4".
/// Three questions with different spreads; each row is the mean of three per-question values.
inline fs::path build_reference_row_run(const fs::path& root) {
  QuestionSet qs;
  qs.name = "reference-row";
  qs.taxonomy = {"Political", "Economical", "Societal"};
  const double base_mean[] = {4, -3, 1.5};
  const double spread[] = {1.08, 1.36, 1.64};     // -> std-dev row 1.36
  const double para[] = {0.59, 1.09, 1.59};       // -> paraphrasing row 1.09
  const double fair[] = {1.99, 2.49, 2.99};       // -> fair row 2.49
  const double biased[] = {2.89, 3.39, 3.89};     // -> biased row 3.39
  for (int i = 0; i < 3; ++i) {
    Question q;
    q.id = fmt::format("t1-q{}", i);
    q.category = qs.taxonomy[static_cast<std::size_t>(i)];
    q.polarity = i == 1 ? -1 : 1;
    q.texts["en"] = fmt::format("Fixture statement number {}.", i);
    q.paraphrases["en"] = {fmt::format("First rewording of statement {}.", i),
                           fmt::format("Second rewording of statement {}.", i)};
    qs.questions.push_back(q);
  }
  fs::create_directories(root);
  save_question_set(qs, root / "questions.json");

  RunConfig cfg;
  cfg.run_id = "reference-row";
  cfg.backends = {make_mock(fixed_script("0"), "GPT4")};
  cfg.question_set = root / "questions.json";
  cfg.pack_dir = source_path("packs");
  cfg.output_dir = root / "runs";
  cfg.seed = 11;
  const auto manifest = plan_run(cfg);
  const auto dir = prepare_run_directory(manifest, cfg);

  const double offsets[] = {-0.5, -0.25, 0, 0.25, 0.5};
  for (const auto& cell : manifest.cells) {
    const auto qi = static_cast<std::size_t>(cell.question_id.back() - '0');
    const double m = base_mean[qi];
    Json record{{"cell", cell.key()}, {"cell_info", to_json(cell)}};
    switch (cell.mode) {
      case CellMode::baseline: {
        const double v = cell.index % 2 == 0 ? m - spread[qi] : m + spread[qi];
        record["kind"] = "sample";
        record["sample"] = to_json(make_sample(cell.question_id, v));
        break;
      }
      case CellMode::paraphrase: {
        // Variant 0 sits above the base mean, variant 1 below; their distances average to para[qi].
        const double d = *cell.paraphrase_index == 0 ? para[qi] + 0.3 : -(para[qi] - 0.3);
        auto s = make_sample(cell.question_id, m + d, cell.paraphrase_index);
        record["kind"] = "sample";
        record["sample"] = to_json(s);
        break;
      }
      case CellMode::fair:
      case CellMode::biased: {
        const bool is_fair = cell.mode == CellMode::fair;
        const double shift = (is_fair ? fair[qi] : biased[qi]) + offsets[cell.index];
        const double pre = std::round(m);
        // Alternate direction so that signed means would not reproduce the row.
        const double post = cell.index % 2 == 0 ? pre + shift : pre - shift;
        record["kind"] = "debate";
        record["outcome"] = to_json(make_outcome(cell.question_id, is_fair ? DebateMode::fair : DebateMode::biased,
                                                 cell.index, pre, std::clamp(post, -10.0, 10.0), "GPT4"));
        break;
      }
    }
    append_line(dir / run_files::records, record);
    append_line(dir / run_files::ledger, Json{{"cell", cell.key()}, {"status", "done"}});
  }
  return dir;
}

inline std::string regex_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::string_view("\\^$.|?*+()[]{}").find(c) != std::string_view::npos) out += '\\';
    out += c;
  }
  return out;
}

/// Every stance answer depends only on the thread, so any execution order gives the same records.
inline std::shared_ptr<MockScript> order_free_script(const QuestionSet& qs, const LanguageCode& lang) {
  std::vector<MockRule> rules;
  int k = 0;
  for (const auto& q : qs.questions) {
    const auto& text = q.texts.at(lang);
    rules.push_back(rule(regex_escape(text) + "[\\s\\S]*original answer was", {fmt::format("{}", (k * 3) % 11 - 5)}, MatchKind::regex));
    ++k;
  }
  k = 0;
  for (const auto& q : qs.questions) {
    rules.push_back(rule("question : " + q.texts.at(lang), {fmt::format("{}", (k * 7) % 13 - 6)}));
    ++k;
  }
  rules.push_back(rule(kProMarker, {"The motion holds for reasons of fairness."}));
  rules.push_back(rule(kConMarker, {"The motion fails on cost."}));
  return std::make_shared<MockScript>(std::move(rules), "7");
}

/// Records keyed by cell, with wall-clock fields removed.
inline std::map<std::string, Json> comparable_records(const fs::path& run_dir) {
  std::map<std::string, Json> out;
  for (auto r : load_records(run_dir)) {
    if (r.contains("sample")) r["sample"].erase("timestamp");
    out[r.at("cell").get<std::string>()] = r;
  }
  return out;
}

inline std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n;
}

}  // namespace support
