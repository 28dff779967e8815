#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stanceshift/util.hpp"

namespace stanceshift {

using LanguageCode = std::string;

/// One localized, categorized statement. `polarity` is the sign that maps
/// agreement onto the "progressive" direction used by category aggregates.
struct Question {
  std::string id;
  std::map<LanguageCode, std::string> texts;
  std::string category;
  int polarity = 1;
  std::map<LanguageCode, std::vector<std::string>> paraphrases;

  bool has_language(const LanguageCode& lang) const { return texts.contains(lang); }
  std::size_t paraphrase_count(const LanguageCode& lang) const;

  friend bool operator==(const Question&, const Question&) = default;
};

struct QuestionSet {
  std::string name;
  std::vector<std::string> taxonomy;
  LanguageCode default_language = "en";
  std::vector<Question> questions;

  const Question* find(std::string_view id) const;
  const Question& at(std::string_view id) const;
  bool declares(std::string_view category) const;

  friend bool operator==(const QuestionSet&, const QuestionSet&) = default;
};

/// Throws ValidationError on the first broken invariant.
void validate(const QuestionSet& set);

QuestionSet question_set_from_json(const Json& j);
Json to_json(const QuestionSet& set);

QuestionSet load_question_set(const std::filesystem::path& path);
void save_question_set(const QuestionSet& set, const std::filesystem::path& path);

/// Returns the stored statement (or paraphrase) verbatim.
const std::string& localized_text(const Question& q, const LanguageCode& lang,
                                  std::optional<std::size_t> paraphrase_index = std::nullopt);

/// Order-preserving subset whose categories are in `categories`; taxonomy is kept.
QuestionSet filter_by_category(const QuestionSet& set, const std::vector<std::string>& categories);

}  // namespace stanceshift
