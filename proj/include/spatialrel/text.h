#ifndef SPATIALREL_TEXT_H_
#define SPATIALREL_TEXT_H_

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace spatialrel {

// Lowercased whitespace tokens of `text`.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// Lowercase, trimmed, internally single-spaced.
inline std::string normalize_text(std::string_view text) {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace spatialrel

#endif  // SPATIALREL_TEXT_H_
