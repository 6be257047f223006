#include "fvlab/vocab.hpp"

#include "fvlab/error.hpp"
#include "fvlab/rng.hpp"

namespace fvlab {

Vocabulary Vocabulary::build(const std::vector<std::string>& words) {
    Vocabulary v;
    auto push = [&v](const std::string& w) {
        if (v.word_to_id_.count(w)) fail(ErrorKind::data, "duplicate vocabulary word: '" + w + "'");
        v.word_to_id_.emplace(w, v.size());
        v.id_to_word_.push_back(w);
    };
    push(kNewline);
    push(kDoubleNewline);
    push(kBlank);
    push(kSlot);
    v.newline_id_ = 0;
    v.double_newline_id_ = 1;
    v.blank_id_ = 2;
    v.slot_id_ = 3;
    for (const auto& w : words) {
        if (w.empty()) fail(ErrorKind::data, "empty vocabulary word");
        push(w);
    }
    return v;
}

int Vocabulary::id(const std::string& w) const {
    auto it = word_to_id_.find(w);
    if (it == word_to_id_.end()) fail(ErrorKind::data, "word not in vocabulary: '" + w + "'");
    return it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) fail(ErrorKind::contract, "token id out of range");
    return id_to_word_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::tokenize(const std::string& s) const {
    std::vector<int> out;
    const size_t n = s.size();
    size_t i = 0;
    while (i < n) {
        if (s[i] == '\n') {
            if (i + 1 < n && s[i + 1] == '\n') {
                out.push_back(double_newline_id_);
                i += 2;
            } else {
                out.push_back(newline_id_);
                ++i;
            }
            continue;
        }
        // one line: space-separated segments; an empty segment is the blank slot
        size_t end = s.find('\n', i);
        if (end == std::string::npos) end = n;
        size_t seg_begin = i;
        for (size_t p = i; p <= end; ++p) {
            if (p == end || s[p] == ' ') {
                if (p == seg_begin) {
                    out.push_back(blank_id_);
                } else {
                    out.push_back(id(s.substr(seg_begin, p - seg_begin)));
                }
                seg_begin = p + 1;
            }
        }
        i = end;
    }
    return out;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
    std::string out;
    bool suppress_space = true;  // no leading space, none after newlines
    for (int t : ids) {
        if (t == newline_id_ || t == double_newline_id_) {
            out += word(t);
            suppress_space = true;
            continue;
        }
        if (!suppress_space) out += ' ';
        if (t != blank_id_) out += word(t);
        suppress_space = false;
    }
    return out;
}

uint64_t Vocabulary::digest() const {
    Digest d;
    for (const auto& w : id_to_word_) {
        d.update(w);
        d.update("\x1f");
    }
    return d.value();
}

}  // namespace fvlab
