#include "harivo/data/vocab.hpp"

#include "harivo/errors.hpp"

#include <sstream>

namespace harivo {

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) {
        index_.emplace(words_[i], static_cast<std::int64_t>(i));
    }
}

const Vocabulary& Vocabulary::builtin() {
    static const Vocabulary vocab({"<eos>", "red", "green", "blue", "yellow", "square", "circle", "triangle",
                                   "moving", "left", "right", "up", "down", "grow", "shrink", "still"});
    return vocab;
}

std::int64_t Vocabulary::id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) throw VocabularyError("out-of-vocabulary word '" + std::string(word) + "'");
    return it->second;
}

std::vector<std::int64_t> Vocabulary::encode(std::string_view caption, std::int64_t max_tokens) const {
    std::vector<std::int64_t> ids;
    std::istringstream words{std::string(caption)};
    for (std::string w; words >> w;) ids.push_back(id(w));
    if (static_cast<std::int64_t>(ids.size()) > max_tokens) {
        throw VocabularyError("caption has " + std::to_string(ids.size()) + " words, more than M = " +
                              std::to_string(max_tokens));
    }
    ids.resize(static_cast<std::size_t>(max_tokens), eos_id);
    return ids;
}

}  // namespace harivo
