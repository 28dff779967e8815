#pragma once

#include <array>
#include <string_view>

namespace stanceshift {

enum class Side { pro, con };
enum class TurnKind { opening, opening_rebuttal, rebuttal_conclusion, closing_rebuttal };
enum class DebateMode { fair, biased };

struct TurnSlot {
  int index;
  Side side;
  TurnKind kind;
};

/// The fixed four-turn order: Pro opens, Con answers, Pro concludes, Con closes.
inline constexpr std::array<TurnSlot, 4> kTurnOrder{{
    {1, Side::pro, TurnKind::opening},
    {2, Side::con, TurnKind::opening_rebuttal},
    {3, Side::pro, TurnKind::rebuttal_conclusion},
    {4, Side::con, TurnKind::closing_rebuttal},
}};

inline constexpr int kDebateTurns = static_cast<int>(kTurnOrder.size());

constexpr Side opponent(Side s) { return s == Side::pro ? Side::con : Side::pro; }

std::string_view to_string(Side s);
std::string_view to_string(TurnKind k);
std::string_view to_string(DebateMode m);
Side side_from_string(std::string_view s);
TurnKind turn_kind_from_string(std::string_view s);
DebateMode debate_mode_from_string(std::string_view s);

}  // namespace stanceshift
