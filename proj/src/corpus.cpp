#include "think/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace think {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isspace(ch)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(ch < 128 ? std::tolower(ch) : ch));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

void Vocabulary::push(const std::string& token) {
    token_to_id_.emplace(token, id_to_token_.size());
    id_to_token_.push_back(token);
}

std::size_t Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
    if (id >= id_to_token_.size()) throw std::out_of_range("token id out of range");
    return id_to_token_[id];
}

std::vector<std::size_t> Vocabulary::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (const auto& t : id_to_token_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        v.push(line);
    }
    if (v.size() < 3 || v.id_to_token_[kPad] != pad_token() || v.id_to_token_[kUnk] != unk_token() ||
        v.id_to_token_[kEos] != eos_token())
        throw std::runtime_error("vocabulary file missing special tokens: " + path);
    return v;
}

Vocabulary build_vocabulary(const std::vector<DialoguePair>& pairs, std::size_t max_size) {
    if (pairs.empty()) throw std::invalid_argument("empty corpus");
    std::vector<std::vector<std::string>> texts;
    texts.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        texts.push_back(p.context);
        texts.push_back(p.response);
    }
    return build_vocabulary_from_texts(texts, max_size);
}

Vocabulary build_vocabulary_from_texts(const std::vector<std::vector<std::string>>& texts,
                                       std::size_t max_size) {
    if (texts.empty()) throw std::invalid_argument("empty corpus");
    if (max_size < 4) throw std::invalid_argument("vocabulary max_size must be >= 4");

    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& text : texts)
        for (const auto& t : text) ++counts[t];

    std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.push(Vocabulary::pad_token());
    v.push(Vocabulary::unk_token());
    v.push(Vocabulary::eos_token());
    for (const auto& [token, count] : ordered) {
        (void)count;
        if (v.size() >= max_size) break;
        v.push(token);
    }
    return v;
}

EncodedPair encode_pair(const DialoguePair& pair, const Vocabulary& vocab, std::size_t c_len,
                        std::size_t r_len) {
    if (c_len == 0 || r_len == 0) throw std::invalid_argument("c_len and r_len must be >= 1");
    EncodedPair out;
    out.context_len = std::min(pair.context.size(), c_len);
    out.response_len = std::min(pair.response.size(), r_len);

    out.context.assign(c_len, Vocabulary::kPad);
    for (std::size_t i = 0; i < out.context_len; ++i) out.context[i] = vocab.id(pair.context[i]);

    out.response.assign(r_len, Vocabulary::kPad);
    if (pair.response.size() >= r_len) {
        for (std::size_t i = 0; i < r_len; ++i) out.response[i] = vocab.id(pair.response[i]);
    } else {
        for (std::size_t i = 0; i < pair.response.size(); ++i)
            out.response[i] = vocab.id(pair.response[i]);
        out.response[pair.response.size()] = Vocabulary::kEos;
    }
    return out;
}

std::vector<std::string> decode_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab) {
    std::vector<std::string> tokens;
    for (std::size_t id : ids) {
        if (id == Vocabulary::kEos) break;
        if (id == Vocabulary::kPad) continue;
        tokens.push_back(vocab.token(id));
    }
    return tokens;
}

TokenizedBatch encode_pairs(const std::vector<DialoguePair>& pairs, const Vocabulary& vocab,
                            std::size_t c_len, std::size_t r_len) {
    TokenizedBatch batch;
    batch.c_len = c_len;
    batch.r_len = r_len;
    batch.pairs.reserve(pairs.size());
    for (const auto& p : pairs) batch.pairs.push_back(encode_pair(p, vocab, c_len, r_len));
    return batch;
}

void NgramVocabulary::add_reference(const std::vector<std::string>& tokens) {
    for (auto& g : ngrams_of(tokens, n_)) grams_.insert(std::move(g));
}

void NgramVocabulary::save(const std::string& path) const {
    std::vector<std::string> sorted(grams_.begin(), grams_.end());
    std::sort(sorted.begin(), sorted.end());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write ngram file: " + path);
    for (const auto& g : sorted) out << g << "\n";
}

NgramVocabulary NgramVocabulary::load(const std::string& path, std::size_t n) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read ngram file: " + path);
    NgramVocabulary v(n);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (ngrams_of(tokenize(line), n).size() != 1)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected exactly " + std::to_string(n) + " tokens");
        v.grams_.insert(line);
    }
    return v;
}

NgramVocabulary build_ngram_vocabulary(const std::vector<std::vector<std::string>>& references,
                                       std::size_t n) {
    NgramVocabulary v(n);
    for (const auto& ref : references) v.add_reference(ref);
    return v;
}

std::vector<std::string> ngrams_of(const std::vector<std::string>& tokens, std::size_t n) {
    std::vector<std::string> out;
    if (n == 0 || tokens.size() < n) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string joined = tokens[i];
        for (std::size_t j = 1; j < n; ++j) {
            joined.push_back(' ');
            joined += tokens[i + j];
        }
        out.push_back(std::move(joined));
    }
    return out;
}

std::vector<DialoguePair> load_pair_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read pair file: " + path);
    std::vector<DialoguePair> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected `context\\tresponse`");
        DialoguePair p;
        p.context = tokenize(line.substr(0, tab));
        p.response = tokenize(line.substr(tab + 1));
        if (p.context.empty() || p.response.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": empty context or response");
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw std::runtime_error("empty corpus: " + path);
    return pairs;
}

void save_pair_file(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write pair file: " + path);
    for (const auto& [c, r] : lines) out << c << "\t" << r << "\n";
}

}  // namespace think
