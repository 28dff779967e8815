#include "stanceshift/question_bank.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "stanceshift/errors.hpp"

namespace stanceshift {

std::size_t Question::paraphrase_count(const LanguageCode& lang) const {
  auto it = paraphrases.find(lang);
  return it == paraphrases.end() ? 0 : it->second.size();
}

const Question* QuestionSet::find(std::string_view id) const {
  auto it = std::find_if(questions.begin(), questions.end(), [&](const Question& q) { return q.id == id; });
  return it == questions.end() ? nullptr : &*it;
}

const Question& QuestionSet::at(std::string_view id) const {
  if (const auto* q = find(id)) return *q;
  throw IntegrityError(fmt::format("unknown question id '{}'", id));
}

bool QuestionSet::declares(std::string_view category) const {
  return std::find(taxonomy.begin(), taxonomy.end(), category) != taxonomy.end();
}

void validate(const QuestionSet& set) {
  std::set<std::string> taxonomy;
  for (const auto& c : set.taxonomy) {
    if (trim(c).empty()) throw ValidationError("taxonomy contains an empty category");
    if (!taxonomy.insert(c).second) throw ValidationError(fmt::format("taxonomy repeats category '{}'", c));
  }
  std::set<std::string> ids;
  for (const auto& q : set.questions) {
    if (trim(q.id).empty()) throw ValidationError("question with empty id");
    if (!ids.insert(q.id).second) throw ValidationError(fmt::format("duplicate question id '{}'", q.id));
    if (!taxonomy.contains(q.category)) {
      throw ValidationError(fmt::format("question '{}' has unknown category '{}' (taxonomy: {})", q.id, q.category,
                                        fmt::join(set.taxonomy, ", ")));
    }
    if (q.polarity != 1 && q.polarity != -1) {
      throw ValidationError(fmt::format("question '{}' has polarity {}; expected +1 or -1", q.id, q.polarity));
    }
    if (q.texts.empty()) throw ValidationError(fmt::format("question '{}' has no texts", q.id));
    for (const auto& [lang, text] : q.texts) {
      if (trim(text).empty()) throw ValidationError(fmt::format("question '{}' has empty '{}' text", q.id, lang));
    }
    for (const auto& [lang, list] : q.paraphrases) {
      for (const auto& p : list) {
        if (trim(p).empty()) throw ValidationError(fmt::format("question '{}' has empty '{}' paraphrase", q.id, lang));
      }
    }
    if (!q.has_language(set.default_language)) {
      throw ValidationError(
          fmt::format("question '{}' lacks text for default language '{}'", q.id, set.default_language));
    }
  }
}

namespace {

template <typename T>
T field(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError(fmt::format("{}: missing field '{}'", where, key));
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("{}: field '{}' has the wrong type: {}", where, key, e.what()));
  }
}

}  // namespace

QuestionSet question_set_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("question set: top level must be an object");
  QuestionSet set;
  set.name = field<std::string>(j, "name", "question set");
  set.taxonomy = field<std::vector<std::string>>(j, "taxonomy", "question set");
  set.default_language = j.value("default_language", std::string("en"));
  const auto& qs = j.contains("questions") ? j.at("questions") : Json::array();
  if (!qs.is_array()) throw ParseError("question set: field 'questions' must be an array");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const auto& item = qs[i];
    const std::string where = fmt::format("questions[{}]", i);
    Question q;
    q.id = field<std::string>(item, "id", where);
    q.category = field<std::string>(item, "category", where);
    q.polarity = field<int>(item, "polarity", where);
    q.texts = field<std::map<LanguageCode, std::string>>(item, "texts", where);
    if (item.contains("paraphrases")) {
      q.paraphrases = field<std::map<LanguageCode, std::vector<std::string>>>(item, "paraphrases", where);
    }
    set.questions.push_back(std::move(q));
  }
  validate(set);
  return set;
}

Json to_json(const QuestionSet& set) {
  Json qs = Json::array();
  for (const auto& q : set.questions) {
    Json item{{"id", q.id}, {"category", q.category}, {"polarity", q.polarity}, {"texts", q.texts}};
    item["paraphrases"] = q.paraphrases.empty() ? Json::object() : Json(q.paraphrases);
    qs.push_back(std::move(item));
  }
  return Json{{"name", set.name},
              {"taxonomy", set.taxonomy},
              {"default_language", set.default_language},
              {"questions", std::move(qs)}};
}

QuestionSet load_question_set(const std::filesystem::path& path) {
  try {
    return question_set_from_json(read_json_file(path));
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ParseError(path.string() + ": " + msg);
  }
}

void save_question_set(const QuestionSet& set, const std::filesystem::path& path) {
  write_text_atomic(path, to_json(set).dump(2) + "\n");
}

const std::string& localized_text(const Question& q, const LanguageCode& lang,
                                  std::optional<std::size_t> paraphrase_index) {
  if (!paraphrase_index) {
    auto it = q.texts.find(lang);
    if (it == q.texts.end()) throw LanguageUnavailableError(q.id, lang);
    return it->second;
  }
  auto it = q.paraphrases.find(lang);
  if (it == q.paraphrases.end() || *paraphrase_index >= it->second.size()) {
    if (!q.has_language(lang) && it == q.paraphrases.end()) throw LanguageUnavailableError(q.id, lang);
    throw RangeError(fmt::format("question '{}' has {} '{}' paraphrase(s); index {} requested", q.id,
                                 it == q.paraphrases.end() ? 0 : it->second.size(), lang, *paraphrase_index));
  }
  return it->second[*paraphrase_index];
}

QuestionSet filter_by_category(const QuestionSet& set, const std::vector<std::string>& categories) {
  for (const auto& c : categories) {
    if (!set.declares(c)) throw ValidationError(fmt::format("category '{}' is not in the taxonomy", c));
  }
  QuestionSet out{set.name, set.taxonomy, set.default_language, {}};
  for (const auto& q : set.questions) {
    if (std::find(categories.begin(), categories.end(), q.category) != categories.end()) out.questions.push_back(q);
  }
  return out;
}

}  // namespace stanceshift
