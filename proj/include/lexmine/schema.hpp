#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace lexmine {

using CategoryId = std::string;

/// Closed category set with surface forms and the tier-1 projection.
///
/// Surface forms are what a model writes ("Subsumption", "Subsumtion");
/// the first form of each category is its primary name and is what prompts
/// render. Annotation markers (e.g. "e1".."e7") are alternative labels that
/// source files may carry; markers listed as unused are dropped at load time.
class LabelSchema {
 public:
  struct Spec {
    std::string name;
    std::vector<CategoryId> categories;
    std::map<CategoryId, std::vector<std::string>> display;
    std::map<CategoryId, CategoryId> tier1_map;  // empty: identity
    std::optional<CategoryId> none_category;
    std::map<std::string, CategoryId> markers;
    std::vector<std::string> unused_markers;
  };

  explicit LabelSchema(Spec spec);

  static LabelSchema from_json(const nlohmann::json& j);
  static LabelSchema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::string& name() const noexcept { return spec_.name; }
  std::span<const CategoryId> categories() const noexcept { return spec_.categories; }
  std::size_t size() const noexcept { return spec_.categories.size(); }
  const CategoryId& category(std::size_t index) const { return spec_.categories.at(index); }
  std::optional<std::size_t> index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return index_of(id).has_value(); }

  const std::vector<std::string>& surface_forms(std::string_view id) const;
  const std::string& primary_form(std::string_view id) const { return surface_forms(id).front(); }
  const CategoryId& tier1(std::string_view id) const;
  const std::optional<CategoryId>& none_category() const noexcept { return spec_.none_category; }

  enum class LabelKind { category, marker, unused_marker, unknown };
  struct Resolved {
    LabelKind kind;
    std::optional<CategoryId> category;
  };
  /// Maps a raw label from a source file to a category.
  Resolved resolve_label(std::string_view raw) const;

 private:
  Spec spec_;
};

/// Locates category mentions in free text.
///
/// Matching works on word tokens: case-folded, punctuation-insensitive and
/// bounded by word edges, so "Subsumtion" does not fire inside
/// "Subsumtionsschluss" and "major-claim" matches "Major Claim". At each
/// position the longest surface form wins.
class SurfaceMatcher {
 public:
  struct Mention {
    std::size_t category;  // index into the schema
    std::size_t begin;     // byte offsets into the searched text
    std::size_t end;
  };

  explicit SurfaceMatcher(const LabelSchema& schema);

  std::vector<Mention> find_all(std::string_view text) const;

 private:
  struct Form {
    std::vector<std::string> words;
    std::size_t category;
  };
  std::vector<Form> forms_;  // longest first
};

}  // namespace lexmine
