#include "fvlab/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <set>

#include "fvlab/error.hpp"
#include "fvlab/rng.hpp"

namespace fvlab {

namespace {

const std::vector<std::string> kKnownGenerators = {
    "uppercase-map", "successor", "antonym-lookup", "plural-rule",
    "capital-lookup", "reverse-word", "word-class",
};

std::string to_upper(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string reversed(const std::string& s) { return std::string(s.rbegin(), s.rend()); }

// pronounceable CV(C) stems, deterministic under the rng
std::string make_stem(Rng& rng) {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    const int syllables = rng.uniform_int(2, 3);
    std::string w;
    for (int i = 0; i < syllables; ++i) {
        w += consonants[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(consonants.size()) - 1))];
        w += vowels[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(vowels.size()) - 1))];
    }
    return w;
}

struct StemPool {
    std::vector<std::string> adjectives, ordinals, countries, nouns, capitals;
    std::vector<std::string> all_base;  // adjectives + ordinals + countries + nouns
};

StemPool make_stems(Rng& rng, const SyntheticSpec& spec) {
    StemPool pool;
    std::set<std::string> taken;
    auto claim = [&taken](const std::string& w) {
        // every surface form a stem will ever produce must be globally unique
        const std::string forms[] = {w, to_upper(w), reversed(w), to_upper(reversed(w)), w + "s"};
        for (const auto& f : forms)
            if (taken.count(f)) return false;
        for (const auto& f : forms) taken.insert(f);
        return true;
    };
    auto fill = [&](std::vector<std::string>& dst, int count) {
        while (static_cast<int>(dst.size()) < count) {
            const std::string w = make_stem(rng);
            if (w == reversed(w)) continue;  // palindromes collapse base and reverse forms
            if (claim(w)) dst.push_back(w);
        }
    };
    if (spec.adjective_stems % 2 != 0) fail(ErrorKind::config, "adjective_stems must be even");
    fill(pool.adjectives, spec.adjective_stems);
    fill(pool.ordinals, spec.ordinal_stems);
    fill(pool.countries, spec.country_stems);
    fill(pool.nouns, spec.noun_stems);
    fill(pool.capitals, spec.country_stems);
    pool.all_base = pool.adjectives;
    pool.all_base.insert(pool.all_base.end(), pool.ordinals.begin(), pool.ordinals.end());
    pool.all_base.insert(pool.all_base.end(), pool.countries.begin(), pool.countries.end());
    pool.all_base.insert(pool.all_base.end(), pool.nouns.begin(), pool.nouns.end());
    return pool;
}

RelationDataset make_relation(std::string id, std::vector<WordPair> pairs) {
    RelationDataset ds;
    ds.relation_id = std::move(id);
    ds.family = "synthetic";
    ds.pairs = std::move(pairs);
    ds.validate();
    return ds;
}

}  // namespace

SyntheticData generate_synthetic_relations(uint64_t seed, const SyntheticSpec& spec,
                                           const PromptTemplate& tmpl) {
    for (const auto& g : spec.generators) {
        if (std::find(kKnownGenerators.begin(), kKnownGenerators.end(), g) == kKnownGenerators.end())
            fail(ErrorKind::config, "unknown synthetic generator: '" + g + "'");
    }

    Rng stem_rng(mix_seed(seed, "stems"));
    const StemPool pool = make_stems(stem_rng, spec);

    SyntheticData data;

    auto category_of = [&](size_t i) -> const char* {
        const size_t na = pool.adjectives.size(), no = pool.ordinals.size(), nc = pool.countries.size();
        if (i < na) return "adjective";
        if (i < na + no) return "ordinal";
        if (i < na + no + nc) return "country";
        return "noun";
    };

    for (const auto& gen : spec.generators) {
        std::vector<WordPair> pairs;
        if (gen == "uppercase-map") {
            for (const auto& w : pool.all_base) pairs.push_back({w, to_upper(w)});
            for (const auto& w : pool.all_base) pairs.push_back({reversed(w), to_upper(reversed(w))});
        } else if (gen == "reverse-word") {
            for (const auto& w : pool.all_base) {
                pairs.push_back({w, reversed(w)});
                pairs.push_back({reversed(w), w});
                pairs.push_back({to_upper(w), to_upper(reversed(w))});
                pairs.push_back({to_upper(reversed(w)), to_upper(w)});
            }
        } else if (gen == "plural-rule") {
            for (const auto& w : pool.all_base) pairs.push_back({w, w + "s"});
        } else if (gen == "antonym-lookup") {
            for (size_t i = 0; i + 1 < pool.adjectives.size(); i += 2) {
                pairs.push_back({pool.adjectives[i], pool.adjectives[i + 1]});
                pairs.push_back({pool.adjectives[i + 1], pool.adjectives[i]});
            }
        } else if (gen == "successor") {
            const size_t n = pool.ordinals.size();
            for (size_t i = 0; i < n; ++i) pairs.push_back({pool.ordinals[i], pool.ordinals[(i + 1) % n]});
        } else if (gen == "capital-lookup") {
            for (size_t i = 0; i < pool.countries.size(); ++i)
                pairs.push_back({pool.countries[i], pool.capitals[i]});
        } else if (gen == "word-class") {
            for (size_t i = 0; i < pool.all_base.size(); ++i)
                pairs.push_back({pool.all_base[i], category_of(i)});
        }
        data.relations.push_back(make_relation(gen, std::move(pairs)));
    }

    if (spec.inverse_coverage) {
        std::vector<WordPair> lower, singular, pred, origin;
        for (const auto& w : pool.all_base) {
            lower.push_back({to_upper(w), w});
            lower.push_back({to_upper(reversed(w)), reversed(w)});
            singular.push_back({w + "s", w});
        }
        const size_t n = pool.ordinals.size();
        for (size_t i = 0; i < n; ++i) pred.push_back({pool.ordinals[(i + 1) % n], pool.ordinals[i]});
        for (size_t i = 0; i < pool.countries.size(); ++i)
            origin.push_back({pool.capitals[i], pool.countries[i]});
        data.coverage_relations.push_back(make_relation("lowercase-map", std::move(lower)));
        data.coverage_relations.push_back(make_relation("singular-rule", std::move(singular)));
        data.coverage_relations.push_back(make_relation("predecessor", std::move(pred)));
        data.coverage_relations.push_back(make_relation("country-of-capital", std::move(origin)));
    }

    // vocabulary: category labels, steering-prompt label words, then all forms
    std::vector<std::string> words = {"adjective", "ordinal", "country", "noun"};
    for (const char* w : {"uppercase", "lowercase", "reverse", "plural", "singular",
                          "antonym", "successor", "predecessor", "capital", "class"})
        words.push_back(w);
    for (const auto& w : pool.all_base) {
        words.push_back(w);
        words.push_back(to_upper(w));
        words.push_back(reversed(w));
        words.push_back(to_upper(reversed(w)));
        words.push_back(w + "s");
    }
    for (const auto& w : pool.capitals) words.push_back(w);
    // template words ("Q:", "A:", ":", "::", ...) — collect from the templates
    {
        std::set<std::string> tmpl_words;
        for (const std::string* t : {&tmpl.pair, &tmpl.query, &tmpl.analogy, &tmpl.blank}) {
            std::string s = *t;
            for (const char* key : {"{x}", "{y}", "{a}", "{b}", "{c}"}) {
                size_t pos;
                while ((pos = s.find(key)) != std::string::npos) s.replace(pos, strlen(key), "");
            }
            std::string word;
            for (char c : s + " ") {
                if (c == ' ' || c == '\n') {
                    if (!word.empty()) tmpl_words.insert(word);
                    word.clear();
                } else {
                    word += c;
                }
            }
        }
        for (const auto& w : tmpl_words)
            if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    }
    data.vocab = Vocabulary::build(words);

    // corpus: n-shot formatted sequences over extract splits only
    struct Task {
        const RelationDataset* extract;
        std::string id;
    };
    std::vector<RelationSplits> splits;
    splits.reserve(data.relations.size() + data.coverage_relations.size());
    std::vector<Task> tasks;
    for (const auto& rel : data.relations) {
        splits.push_back(split_relation(rel, spec.split));
        tasks.push_back({nullptr, rel.relation_id});
    }
    for (const auto& rel : data.coverage_relations) {
        splits.push_back(split_relation(rel, spec.split));
        tasks.push_back({nullptr, rel.relation_id});
    }
    for (size_t i = 0; i < tasks.size(); ++i) tasks[i].extract = &splits[i].extract;

    Rng corpus_rng(mix_seed(seed, "corpus"));
    data.corpus.sequences.reserve(static_cast<size_t>(spec.corpus_sequences));
    for (int s = 0; s < spec.corpus_sequences; ++s) {
        const Task& task = tasks[static_cast<size_t>(corpus_rng.uniform_int(0, static_cast<int>(tasks.size()) - 1))];
        const auto& pairs = task.extract->pairs;
        const int shots = corpus_rng.uniform_int(spec.min_shots, spec.max_shots);
        const int want = shots + 1;
        std::vector<const WordPair*> chosen;
        if (static_cast<int>(pairs.size()) >= want) {
            for (int idx : corpus_rng.sample_indices(static_cast<int>(pairs.size()), want))
                chosen.push_back(&pairs[static_cast<size_t>(idx)]);
        } else {
            for (int i = 0; i < want; ++i)
                chosen.push_back(&pairs[static_cast<size_t>(corpus_rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))]);
        }
        Corpus::Sequence seq;
        seq.relation_id = task.id;
        std::vector<size_t> answer_positions;
        for (const WordPair* p : chosen) {
            const std::pair<std::string, std::string> subs[] = {{"x", p->input}, {"y", Vocabulary::kSlot}};
            std::vector<int> toks = data.vocab.tokenize(substitute(tmpl.pair, subs));
            const int y_id = data.vocab.id(p->output);
            for (size_t i = 0; i < toks.size(); ++i) {
                if (toks[i] == data.vocab.slot_id()) {
                    toks[i] = y_id;
                    answer_positions.push_back(seq.tokens.size() + i);
                }
            }
            seq.tokens.insert(seq.tokens.end(), toks.begin(), toks.end());
        }
        seq.targets.assign(seq.tokens.size(), -1);
        if (spec.lm_all_positions) {
            for (size_t t = 0; t + 1 < seq.tokens.size(); ++t) seq.targets[t] = seq.tokens[t + 1];
        }
        // supervision at each demonstration answer (the position just before it)
        for (size_t y_pos : answer_positions) {
            if (y_pos >= 1) seq.targets[y_pos - 1] = seq.tokens[y_pos];
        }
        data.corpus.sequences.push_back(std::move(seq));
    }

    // the held-out splits must never be spelled out in the corpus
    return data;
}

std::vector<AnalogyProblem> make_within_relation_analogies(std::span<const RelationDataset> splits,
                                                           int per_relation, uint64_t seed) {
    std::vector<AnalogyProblem> out;
    for (const auto& split : splits) {
        if (split.pairs.size() < 2) continue;
        Rng rng(mix_seed(seed, "analogies:" + split.relation_id));
        for (int i = 0; i < per_relation; ++i) {
            const auto idx = rng.sample_indices(static_cast<int>(split.pairs.size()), 2);
            const WordPair& src = split.pairs[static_cast<size_t>(idx[0])];
            const WordPair& tgt = split.pairs[static_cast<size_t>(idx[1])];
            out.push_back({src.input, src.output, tgt.input, tgt.output, split.relation_id});
        }
    }
    return out;
}

std::vector<AnalogyProblem> make_training_analogies(std::span<const RelationDataset> splits,
                                                    int pairs_per_side, uint64_t seed) {
    std::vector<AnalogyProblem> out;
    for (const auto& split : splits) {
        const int want = 2 * pairs_per_side;
        if (static_cast<int>(split.pairs.size()) < 2) continue;
        Rng rng(mix_seed(seed, "train-analogies:" + split.relation_id));
        std::vector<const WordPair*> chosen;
        if (static_cast<int>(split.pairs.size()) >= want) {
            for (int idx : rng.sample_indices(static_cast<int>(split.pairs.size()), want))
                chosen.push_back(&split.pairs[static_cast<size_t>(idx)]);
        } else {
            // small split: reuse pairs, keeping source/target sides disjoint per analogy
            for (int i = 0; i < want; ++i)
                chosen.push_back(&split.pairs[static_cast<size_t>(i % split.pairs.size())]);
        }
        for (int s = 0; s < pairs_per_side; ++s) {
            for (int t = 0; t < pairs_per_side; ++t) {
                const WordPair& src = *chosen[static_cast<size_t>(s)];
                const WordPair& tgt = *chosen[static_cast<size_t>(pairs_per_side + t)];
                if (src.input == tgt.input) continue;
                out.push_back({src.input, src.output, tgt.input, tgt.output, split.relation_id});
            }
        }
    }
    return out;
}

bool corpus_contains_pair(const Corpus& corpus, const Vocabulary& vocab,
                          const PromptTemplate& tmpl, const WordPair& pair) {
    const std::pair<std::string, std::string> subs[] = {{"x", pair.input}, {"y", pair.output}};
    const std::vector<int> needle = vocab.tokenize(substitute(tmpl.pair, subs));
    for (const auto& seq : corpus.sequences) {
        if (seq.tokens.size() < needle.size()) continue;
        for (size_t i = 0; i + needle.size() <= seq.tokens.size(); ++i) {
            if (std::equal(needle.begin(), needle.end(), seq.tokens.begin() + static_cast<long>(i))) return true;
        }
    }
    return false;
}

}  // namespace fvlab
