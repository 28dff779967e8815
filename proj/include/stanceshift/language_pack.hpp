#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "stanceshift/protocol.hpp"
#include "stanceshift/question_bank.hpp"
#include "stanceshift/util.hpp"

namespace stanceshift {

/// Every prompt template used for one prompting language.
///
/// Placeholders: `{statement}` in stance_prompt and the debater system
/// prompts, `{pre}` in judge_post, `{label}`/`{content}` in opponent_turn.
struct LanguagePack {
  LanguageCode language;
  std::string judge_system;  ///< empty: the judge thread has no system message
  std::string stance_prompt;
  std::string reprompt;
  std::string transcript_intro;
  std::string judge_post;
  std::string opponent_turn;
  std::map<Side, std::string> side_labels;
  std::map<Side, std::string> fair_system;
  std::map<Side, std::string> bad_system;
  std::map<TurnKind, std::string> turn_instructions;
  Json ui = Json::object();

  std::string stance_message(std::string_view statement) const;
  std::string judge_post_message(double pre_score) const;
  std::string debater_system(Side side, bool bad_debater, std::string_view statement) const;
};

LanguagePack language_pack_from_json(const Json& j);
Json to_json(const LanguagePack& pack);
LanguagePack load_language_pack(const std::filesystem::path& path);
/// Loads `<dir>/<lang>.json`.
LanguagePack load_language_pack(const std::filesystem::path& dir, const LanguageCode& lang);

/// A small built-in English pack, identical to packs/en.json; used by tests and bindings.
const LanguagePack& builtin_english_pack();

}  // namespace stanceshift
