#include "stanceshift/language_pack.hpp"

#include <fmt/format.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

extern const char* const kBuiltinEnglishPackJson;

std::string LanguagePack::stance_message(std::string_view statement) const {
  return render_template(stance_prompt, {{"statement", std::string(statement)}});
}

std::string LanguagePack::judge_post_message(double pre_score) const {
  return render_template(judge_post, {{"pre", format_score(pre_score)}});
}

std::string LanguagePack::debater_system(Side side, bool bad_debater, std::string_view statement) const {
  const auto& table = bad_debater ? bad_system : fair_system;
  return render_template(table.at(side), {{"statement", std::string(statement)}});
}

namespace {

std::string required(const Json& j, const char* key, const std::string& lang) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw ParseError(fmt::format("language pack '{}': missing string field '{}'", lang, key));
  }
  return j.at(key).get<std::string>();
}

void require_placeholder(const std::string& tmpl, std::string_view placeholder, const std::string& lang,
                         std::string_view field) {
  if (tmpl.find(placeholder) == std::string::npos) {
    throw ValidationError(fmt::format("language pack '{}': '{}' must contain {}", lang, field, placeholder));
  }
}

std::map<Side, std::string> sided(const Json& j, const char* key, const std::string& lang) {
  if (!j.contains(key) || !j.at(key).is_object()) {
    throw ParseError(fmt::format("language pack '{}': missing object '{}'", lang, key));
  }
  const auto& obj = j.at(key);
  return {{Side::pro, required(obj, "pro", lang)}, {Side::con, required(obj, "con", lang)}};
}

}  // namespace

LanguagePack language_pack_from_json(const Json& j) {
  LanguagePack p;
  p.language = j.value("language", std::string());
  if (trim(p.language).empty()) throw ParseError("language pack: missing 'language'");
  const auto& lang = p.language;
  p.judge_system = j.value("judge_system", std::string());
  p.stance_prompt = required(j, "stance_prompt", lang);
  p.reprompt = required(j, "reprompt", lang);
  p.transcript_intro = j.value("transcript_intro", std::string());
  p.judge_post = required(j, "judge_post", lang);
  p.opponent_turn = j.value("opponent_turn", std::string("{label}: {content}"));
  p.side_labels = sided(j, "side_labels", lang);
  p.fair_system = sided(j, "fair_system", lang);
  p.bad_system = sided(j, "bad_system", lang);
  if (!j.contains("turn_instructions")) throw ParseError(fmt::format("language pack '{}': missing 'turn_instructions'", lang));
  for (const auto& slot : kTurnOrder) {
    p.turn_instructions[slot.kind] = required(j.at("turn_instructions"), std::string(to_string(slot.kind)).c_str(), lang);
  }
  p.ui = j.value("ui", Json::object());

  require_placeholder(p.stance_prompt, "{statement}", lang, "stance_prompt");
  require_placeholder(p.judge_post, "{pre}", lang, "judge_post");
  require_placeholder(p.opponent_turn, "{content}", lang, "opponent_turn");
  for (Side s : {Side::pro, Side::con}) {
    require_placeholder(p.fair_system.at(s), "{statement}", lang, "fair_system");
    require_placeholder(p.bad_system.at(s), "{statement}", lang, "bad_system");
  }
  return p;
}

Json to_json(const LanguagePack& p) {
  auto sided_json = [](const std::map<Side, std::string>& m) {
    return Json{{"pro", m.at(Side::pro)}, {"con", m.at(Side::con)}};
  };
  Json turns = Json::object();
  for (const auto& [kind, text] : p.turn_instructions) turns[std::string(to_string(kind))] = text;
  return Json{{"language", p.language},
              {"judge_system", p.judge_system},
              {"stance_prompt", p.stance_prompt},
              {"reprompt", p.reprompt},
              {"transcript_intro", p.transcript_intro},
              {"judge_post", p.judge_post},
              {"opponent_turn", p.opponent_turn},
              {"side_labels", sided_json(p.side_labels)},
              {"fair_system", sided_json(p.fair_system)},
              {"bad_system", sided_json(p.bad_system)},
              {"turn_instructions", turns},
              {"ui", p.ui}};
}

LanguagePack load_language_pack(const std::filesystem::path& path) {
  return language_pack_from_json(read_json_file(path));
}

LanguagePack load_language_pack(const std::filesystem::path& dir, const LanguageCode& lang) {
  const auto path = dir / (lang + ".json");
  if (!std::filesystem::exists(path)) {
    throw ConfigurationError(fmt::format("no language pack for '{}' in '{}'", lang, dir.string()));
  }
  auto pack = load_language_pack(path);
  if (pack.language != lang) {
    throw ValidationError(fmt::format("'{}' declares language '{}'", path.string(), pack.language));
  }
  return pack;
}

const LanguagePack& builtin_english_pack() {
  static const LanguagePack pack = language_pack_from_json(Json::parse(kBuiltinEnglishPackJson));
  return pack;
}

}  // namespace stanceshift
