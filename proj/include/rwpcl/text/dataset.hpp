#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwpcl/core/errors.hpp"
#include "rwpcl/text/clean.hpp"
#include "rwpcl/text/emoji.hpp"
#include "rwpcl/text/tokenize.hpp"

namespace rwpcl::text {

struct RawPost {
  std::string text;
  int label = 0;
  // Label before synthetic label-flip noise; only synthetic data carries it.
  std::optional<int> clean_label;
};

/// JSON-lines dataset: a header object {"name", "num_classes"} followed by one
/// {"text", "label"} object per line.
struct Dataset {
  std::string name;
  int num_classes = 0;
  std::vector<RawPost> posts;

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(posts.size());
    for (const auto& p : posts) out.push_back(p.label);
    return out;
  }
};

// Reference sizes of the health-mention benchmarks this format was designed for.
struct DatasetPreset {
  const char* name;
  std::size_t examples;
  int num_classes;
  std::size_t max_len;
};
inline constexpr DatasetPreset kPresets[] = {
    {"HMC-2019", 15742, 2, 64},
    {"RHMD", 10015, 3, 215},
    {"COVID-19 PHM", 9219, 2, 68},
};

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path);
  Dataset ds;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!header) {
      if (!j.contains("num_classes") || !j["num_classes"].is_number_integer())
        throw InputError(where + "first line must be a header with integer \"num_classes\"");
      ds.num_classes = j["num_classes"].get<int>();
      ds.name = j.value("name", std::string{});
      if (ds.num_classes < 2) throw InputError(where + "num_classes must be >= 2");
      header = true;
      continue;
    }
    if (!j.contains("text") || !j["text"].is_string() || !j.contains("label") || !j["label"].is_number_integer())
      throw InputError(where + "expected {\"text\": string, \"label\": integer}");
    RawPost p;
    p.text = j["text"].get<std::string>();
    p.label = j["label"].get<int>();
    if (collapse_whitespace(p.text).empty()) throw InputError(where + "empty text");
    if (p.label < 0 || p.label >= ds.num_classes)
      throw InputError(where + "label " + std::to_string(p.label) + " outside [0," + std::to_string(ds.num_classes) + ")");
    if (j.contains("clean_label")) p.clean_label = j["clean_label"].get<int>();
    ds.posts.push_back(std::move(p));
  }
  if (!header) throw InputError(path + ": missing header line");
  return ds;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset: " + path);
  out << nlohmann::json{{"name", ds.name}, {"num_classes", ds.num_classes}}.dump() << '\n';
  for (const auto& p : ds.posts) {
    nlohmann::json j{{"text", p.text}, {"label", p.label}};
    if (p.clean_label) j["clean_label"] = *p.clean_label;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

/// clean -> emoji_to_text -> split_words.
struct Preprocessor {
  CleanOptions clean_options;
  const EmojiTable* emoji = nullptr;

  std::string normalize(std::string_view raw) const {
    std::string s = clean(raw, clean_options);
    return emoji ? emoji_to_text(s, *emoji) : s;
  }
  std::vector<std::string> words(std::string_view raw) const { return split_words(normalize(raw)); }
};

}  // namespace rwpcl::text
