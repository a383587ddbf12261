#include "attnforge/tokenizer.hpp"

#include "attnforge/encoder.hpp"

namespace attnforge {

CharTokenizer::CharTokenizer(std::string_view corpus) {
  for (char c : corpus) {
    if (ids_.contains(c)) continue;
    ids_.emplace(c, static_cast<std::int32_t>(3 + chars_.size()));
    chars_.push_back(c);
  }
}

std::vector<std::int32_t> CharTokenizer::encode(std::string_view text) const {
  std::vector<std::int32_t> out;
  out.reserve(text.size());
  for (char c : text) {
    auto it = ids_.find(c);
    out.push_back(it == ids_.end() ? kUnknown : it->second);
  }
  return out;
}

std::string CharTokenizer::decode(const std::vector<std::int32_t>& ids) const {
  std::string out;
  for (auto id : ids) {
    if (id == kMaskToken) {
      out += "[MASK]";
    } else if (id == kPadToken) {
      out += "[PAD]";
    } else if (id >= 3 && static_cast<std::size_t>(id - 3) < chars_.size()) {
      out += chars_[id - 3];
    } else {
      out += "[UNK]";
    }
  }
  return out;
}

}  // namespace attnforge
