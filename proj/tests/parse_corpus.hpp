#pragma once

// Hand-valued parse corpus. Expected values follow the parse rule: the first
// standalone number (a maximal run of digits/sign/point, not glued to an
// ASCII letter, forming a valid decimal) decides; trailing sentence periods
// are not part of the number; native-script digits and minus signs are folded.

#include <optional>
#include <string>
#include <vector>

namespace corpus {

enum class Expect { value, unparseable, out_of_range };

struct Case {
  std::string text;
  Expect expect;
  double value = 0;
};

inline const std::vector<Case>& parse_corpus() {
  static const std::vector<Case> cases = {
      {"8", Expect::value, 8},
      {"-8", Expect::value, -8},
      {"I'd say -7.5, leaning against.", Expect::value, -7.5},
      {"I cannot take a position.", Expect::unparseable},
      {"15", Expect::out_of_range},
      {"10", Expect::value, 10},
      {"-10", Expect::value, -10},
      {"My answer is 3.", Expect::value, 3},
      {"Score: +4", Expect::value, 4},
      {"On 2024-05-01 I answer 6", Expect::value, 6},
      {"COVID19 vaccines: -9", Expect::value, -9},
      {"\xE6\x88\x91\xE7\x9A\x84\xE5\x9B\x9E\xE7\xAD\x94\xE6\x98\xAF" "8" "\xE5\x88\x86", Expect::value, 8},  // 我的回答是8分
      {"\xD8\xA5\xD8\xAC\xD8\xA7\xD8\xA8\xD8\xAA\xD9\x8A \xD9\xA7", Expect::value, 7},  // إجابتي ٧
      {"\xE2\x88\x92" "6", Expect::value, -6},                                      // U+2212 minus
      {"0.5", Expect::value, 0.5},
      {"I rate it 7/10", Expect::value, 7},
      {"10.5", Expect::out_of_range},
      {"-3-4", Expect::unparseable},
      {"**-2**", Expect::value, -2},
      {"Answer: 5\n\nReasoning: after 20 years of debate...", Expect::value, 5},
  };
  return cases;
}

}  // namespace corpus
