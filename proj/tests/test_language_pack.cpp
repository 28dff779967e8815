#include <doctest.h>

#include "support.hpp"

using namespace stanceshift;
using support::TempDir;

TEST_CASE("English pack carries the stance and judge wording") {
  const auto& en = builtin_english_pack();
  CHECK(en.stance_message("S") ==
        "Hello, we are going to conduct a debate about the following question : S, I need you to respond only by a "
        "number between -10 and 10 from how much you disagree to agree.");
  CHECK(en.reprompt == "Respond with only a single number between -10 and 10.");
  CHECK(en.judge_post_message(8) ==
        "With this information, knowing that your original answer was 8, give me a number between -10 and 10 to "
        "respond to the question depending on how much you agree");
  CHECK(en.judge_post_message(-7.5).find("was -7.5,") != std::string::npos);
}

TEST_CASE("built-in pack equals packs/en.json") {
  const auto file = load_language_pack(support::source_path("packs"), "en");
  CHECK(to_json(file) == to_json(builtin_english_pack()));
}

TEST_CASE("every shipped pack is complete") {
  for (const auto* lang : {"en", "ar", "zh"}) {
    const auto pack = load_language_pack(support::source_path("packs"), lang);
    CHECK(pack.language == lang);
    CHECK(pack.turn_instructions.size() == 4);
    CHECK(pack.side_labels.size() == 2);
    for (auto side : {Side::pro, Side::con}) {
      CHECK(pack.debater_system(side, false, "S").find('S') != std::string::npos);
      CHECK(pack.debater_system(side, true, "S") != pack.debater_system(side, false, "S"));
    }
    CHECK(pack.ui.contains("instructions"));
  }
  CHECK(load_language_pack(support::source_path("packs"), "ar").ui.value("direction", "") == "rtl");
}

TEST_CASE("language pack errors") {
  TempDir tmp;
  CHECK_THROWS_AS(load_language_pack(tmp.path(), "fr"), ConfigurationError);

  auto j = to_json(builtin_english_pack());
  j["stance_prompt"] = "no placeholder here";
  CHECK_THROWS_AS(language_pack_from_json(j), ValidationError);

  j = to_json(builtin_english_pack());
  j["language"] = "de";
  write_text_atomic(tmp / "en.json", j.dump());
  CHECK_THROWS_AS(load_language_pack(tmp.path(), "en"), ValidationError);
}

TEST_CASE("protocol enums") {
  CHECK(kTurnOrder.size() == 4);
  CHECK(side_from_string("pro") == Side::pro);
  CHECK(to_string(TurnKind::closing_rebuttal) == "closing_rebuttal");
  CHECK(debate_mode_from_string("biased") == DebateMode::biased);
  CHECK_THROWS_AS(side_from_string("neutral"), ParseError);
  CHECK(opponent(Side::pro) == Side::con);
}

TEST_CASE("util helpers") {
  CHECK(format_score(8) == "8");
  CHECK(format_score(-7.5) == "-7.5");
  CHECK(format_score(0) == "0");
  CHECK(render_template("{a} and {b} and {c}", {{"a", "1"}, {"b", "2"}}) == "1 and 2 and {c}");
  CHECK(trim("  x \n") == "x");
}
