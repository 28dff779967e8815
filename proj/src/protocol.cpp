#include "stanceshift/protocol.hpp"

#include <string>

#include "stanceshift/errors.hpp"

namespace stanceshift {

std::string_view to_string(Side s) { return s == Side::pro ? "pro" : "con"; }

std::string_view to_string(TurnKind k) {
  switch (k) {
    case TurnKind::opening:
      return "opening";
    case TurnKind::opening_rebuttal:
      return "opening_rebuttal";
    case TurnKind::rebuttal_conclusion:
      return "rebuttal_conclusion";
    case TurnKind::closing_rebuttal:
      return "closing_rebuttal";
  }
  return "opening";
}

std::string_view to_string(DebateMode m) { return m == DebateMode::fair ? "fair" : "biased"; }

Side side_from_string(std::string_view s) {
  if (s == "pro") return Side::pro;
  if (s == "con") return Side::con;
  throw ParseError("unknown debate side '" + std::string(s) + "'");
}

TurnKind turn_kind_from_string(std::string_view s) {
  for (const auto& slot : kTurnOrder)
    if (to_string(slot.kind) == s) return slot.kind;
  throw ParseError("unknown turn kind '" + std::string(s) + "'");
}

DebateMode debate_mode_from_string(std::string_view s) {
  if (s == "fair") return DebateMode::fair;
  if (s == "biased") return DebateMode::biased;
  throw ParseError("unknown debate mode '" + std::string(s) + "'");
}

}  // namespace stanceshift
