#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attnforge {

/// Character-level toy tokenizer. Ids 0 and 1 are [MASK] and [PAD], id 2 is
/// [UNK]; characters seen in the fitting corpus get ids from 3 upward in
/// first-seen order.
class CharTokenizer {
 public:
  static constexpr std::int32_t kUnknown = 2;

  explicit CharTokenizer(std::string_view corpus);

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(const std::vector<std::int32_t>& ids) const;
  std::size_t vocab_size() const { return 3 + chars_.size(); }

 private:
  std::vector<char> chars_;
  std::unordered_map<char, std::int32_t> ids_;
};

}  // namespace attnforge
