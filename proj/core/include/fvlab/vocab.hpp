#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fvlab {

// Closed word-level vocabulary. Tokens are whole words plus a few structural
// specials. Tokenization splits lines on single spaces; an empty segment
// (produced by a doubled space, as in the blank-slot prompt "a : b ::  :")
// maps to the blank token, whose surface form is the empty string.
class Vocabulary {
public:
    static constexpr const char* kNewline = "\n";
    static constexpr const char* kDoubleNewline = "\n\n";
    static constexpr const char* kBlank = "<blank>";
    static constexpr const char* kSlot = "<slot>";  // template substitution sentinel

    Vocabulary() = default;

    // Builds ids: structural specials first, then `words` in the given order.
    static Vocabulary build(const std::vector<std::string>& words);

    int size() const { return static_cast<int>(id_to_word_.size()); }
    bool contains(const std::string& w) const { return word_to_id_.count(w) > 0; }
    int id(const std::string& w) const;  // throws a data error on unknown words
    const std::string& word(int id) const;

    std::vector<int> tokenize(const std::string& s) const;
    std::string detokenize(std::span<const int> ids) const;

    int newline_id() const { return newline_id_; }
    int double_newline_id() const { return double_newline_id_; }
    int blank_id() const { return blank_id_; }
    int slot_id() const { return slot_id_; }

    const std::vector<std::string>& words() const { return id_to_word_; }
    uint64_t digest() const;

private:
    std::vector<std::string> id_to_word_;
    std::unordered_map<std::string, int> word_to_id_;
    int newline_id_ = -1, double_newline_id_ = -1, blank_id_ = -1, slot_id_ = -1;
};

}  // namespace fvlab
