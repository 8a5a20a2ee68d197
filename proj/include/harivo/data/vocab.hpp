#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace harivo {

// Closed caption vocabulary of the synthetic dataset. Id 0 is the
// end-of-sequence token, which also pads captions to M slots.
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> words);

    // "<eos>", colors, shapes, "moving", motions.
    static const Vocabulary& builtin();

    static constexpr std::int64_t eos_id = 0;

    std::size_t size() const { return words_.size(); }
    const std::string& word(std::int64_t id) const { return words_.at(static_cast<std::size_t>(id)); }
    // Throws VocabularyError for unknown words.
    std::int64_t id(std::string_view word) const;

    // Whitespace-split ids padded with eos to exactly `max_tokens` slots.
    // Throws VocabularyError when the caption is longer than max_tokens.
    std::vector<std::int64_t> encode(std::string_view caption, std::int64_t max_tokens) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::int64_t> index_;
};

}  // namespace harivo
