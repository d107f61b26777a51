#include "lexmine/schema.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "lexmine/error.hpp"
#include "lexmine/text.hpp"

namespace lexmine {
namespace {

std::vector<std::string> form_words(std::string_view form) {
  std::vector<std::string> words;
  for (auto& tok : text::tokenize(form)) words.push_back(std::move(tok.folded));
  return words;
}

std::string joined(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

}  // namespace

LabelSchema::LabelSchema(Spec spec) : spec_(std::move(spec)) {
  if (spec_.categories.empty()) throw SchemaError("schema '" + spec_.name + "': no categories");
  std::set<CategoryId> seen;
  for (const auto& c : spec_.categories) {
    if (c.empty()) throw SchemaError("schema '" + spec_.name + "': empty category id");
    if (!seen.insert(c).second) throw SchemaError("schema '" + spec_.name + "': duplicate category " + c);
  }
  std::map<std::string, CategoryId> owner;
  for (const auto& c : spec_.categories) {
    auto& forms = spec_.display[c];
    if (forms.empty()) forms.push_back(c);
    for (const auto& f : forms) {
      const auto words = form_words(f);
      if (words.empty()) throw SchemaError("category " + c + ": surface form '" + f + "' has no words");
      const auto key = joined(words);
      auto [it, inserted] = owner.emplace(key, c);
      if (!inserted && it->second != c) {
        throw SchemaError("surface form '" + f + "' is shared by " + it->second + " and " + c);
      }
    }
  }
  for (const auto& [c, _] : spec_.display) {
    if (!seen.count(c)) throw SchemaError("display entry for unknown category " + c);
  }
  for (const auto& c : spec_.categories) {
    auto it = spec_.tier1_map.find(c);
    if (it == spec_.tier1_map.end()) {
      spec_.tier1_map.emplace(c, c);
    } else if (!seen.count(it->second)) {
      throw SchemaError("tier1_map: " + c + " maps to unknown category " + it->second);
    }
  }
  if (spec_.tier1_map.size() != spec_.categories.size()) {
    throw SchemaError("tier1_map names categories outside the schema");
  }
  if (spec_.none_category && !seen.count(*spec_.none_category)) {
    throw SchemaError("none_category " + *spec_.none_category + " is not a category");
  }
  for (const auto& [marker, c] : spec_.markers) {
    if (!seen.count(c)) throw SchemaError("marker " + marker + " maps to unknown category " + c);
  }
}

LabelSchema LabelSchema::from_json(const nlohmann::json& j) {
  Spec spec;
  spec.name = j.value("name", std::string("schema"));
  spec.categories = j.at("categories").get<std::vector<CategoryId>>();
  if (j.contains("display")) {
    spec.display = j.at("display").get<std::map<CategoryId, std::vector<std::string>>>();
  }
  if (j.contains("tier1_map")) spec.tier1_map = j.at("tier1_map").get<std::map<CategoryId, CategoryId>>();
  if (j.contains("none_category") && !j.at("none_category").is_null()) {
    spec.none_category = j.at("none_category").get<CategoryId>();
  }
  if (j.contains("markers")) spec.markers = j.at("markers").get<std::map<std::string, CategoryId>>();
  if (j.contains("unused_markers")) {
    spec.unused_markers = j.at("unused_markers").get<std::vector<std::string>>();
  }
  return LabelSchema(std::move(spec));
}

LabelSchema LabelSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

nlohmann::json LabelSchema::to_json() const {
  nlohmann::json j;
  j["name"] = spec_.name;
  j["categories"] = spec_.categories;
  j["display"] = spec_.display;
  j["tier1_map"] = spec_.tier1_map;
  j["none_category"] = spec_.none_category ? nlohmann::json(*spec_.none_category) : nlohmann::json();
  j["markers"] = spec_.markers;
  j["unused_markers"] = spec_.unused_markers;
  return j;
}

std::optional<std::size_t> LabelSchema::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < spec_.categories.size(); ++i) {
    if (spec_.categories[i] == id) return i;
  }
  return std::nullopt;
}

const std::vector<std::string>& LabelSchema::surface_forms(std::string_view id) const {
  auto it = spec_.display.find(CategoryId(id));
  if (it == spec_.display.end()) throw SchemaError("unknown category " + std::string(id));
  return it->second;
}

const CategoryId& LabelSchema::tier1(std::string_view id) const {
  auto it = spec_.tier1_map.find(CategoryId(id));
  if (it == spec_.tier1_map.end()) throw SchemaError("unknown category " + std::string(id));
  return it->second;
}

LabelSchema::Resolved LabelSchema::resolve_label(std::string_view raw) const {
  if (contains(raw)) return {LabelKind::category, CategoryId(raw)};
  if (auto it = spec_.markers.find(std::string(raw)); it != spec_.markers.end()) {
    return {LabelKind::marker, it->second};
  }
  if (std::find(spec_.unused_markers.begin(), spec_.unused_markers.end(), raw) !=
      spec_.unused_markers.end()) {
    return {LabelKind::unused_marker, std::nullopt};
  }
  return {LabelKind::unknown, std::nullopt};
}

SurfaceMatcher::SurfaceMatcher(const LabelSchema& schema) {
  for (std::size_t c = 0; c < schema.size(); ++c) {
    for (const auto& f : schema.surface_forms(schema.category(c))) {
      forms_.push_back({form_words(f), c});
    }
  }
  std::stable_sort(forms_.begin(), forms_.end(),
                   [](const Form& a, const Form& b) { return a.words.size() > b.words.size(); });
}

std::vector<SurfaceMatcher::Mention> SurfaceMatcher::find_all(std::string_view text_in) const {
  const auto tokens = text::tokenize(text_in);
  std::vector<Mention> mentions;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const Form* hit = nullptr;
    for (const auto& form : forms_) {
      const auto n = form.words.size();
      if (i + n > tokens.size()) continue;
      bool match = true;
      for (std::size_t w = 0; w < n && match; ++w) match = tokens[i + w].folded == form.words[w];
      if (match) {
        hit = &form;
        break;
      }
    }
    if (hit) {
      const auto n = hit->words.size();
      mentions.push_back({hit->category, tokens[i].begin, tokens[i + n - 1].end});
      i += n;
    } else {
      ++i;
    }
  }
  return mentions;
}

}  // namespace lexmine
