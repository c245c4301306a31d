#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace think {

/// A single-turn (context, response) pair, already tokenized.
struct DialoguePair {
    std::vector<std::string> context;
    std::vector<std::string> response;
};

/// Lowercase + whitespace tokenization. Lossless round trip for text that is
/// already space-separated and lowercase.
std::vector<std::string> tokenize(const std::string& text);
std::string detokenize(const std::vector<std::string>& tokens);

/// Token <-> id mapping. Ids 0,1,2 are PAD/UNK/EOS; the rest are corpus tokens
/// ordered by descending frequency, ties broken lexicographically.
class Vocabulary {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::size_t kEos = 2;
    static const char* pad_token() { return "<pad>"; }
    static const char* unk_token() { return "<unk>"; }
    static const char* eos_token() { return "<eos>"; }

    std::size_t size() const { return id_to_token_.size(); }
    std::size_t id(const std::string& token) const;  // kUnk when absent
    const std::string& token(std::size_t id) const;
    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

    std::vector<std::size_t> encode_tokens(const std::vector<std::string>& tokens) const;

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    friend Vocabulary build_vocabulary_from_texts(const std::vector<std::vector<std::string>>&,
                                                  std::size_t);

private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
    void push(const std::string& token);
};

/// Frequency-ordered vocabulary over all context and response tokens,
/// capped at max_size (specials included in the cap).
Vocabulary build_vocabulary(const std::vector<DialoguePair>& pairs, std::size_t max_size);

Vocabulary build_vocabulary_from_texts(const std::vector<std::vector<std::string>>& texts,
                                       std::size_t max_size);

struct EncodedPair {
    std::vector<std::size_t> context;   // length c_len
    std::vector<std::size_t> response;  // length r_len
    std::size_t context_len = 0;        // true length before pad/truncation
    std::size_t response_len = 0;
};

/// Context: truncate to c_len or right-pad with PAD.
/// Response: truncate to r_len (truncation consumes the EOS slot), otherwise
/// tokens + EOS + PAD... to exactly r_len.
EncodedPair encode_pair(const DialoguePair& pair, const Vocabulary& vocab, std::size_t c_len,
                        std::size_t r_len);

/// Inverse of encode for one id row: cut at the first EOS, drop PAD, map ids
/// back to surface tokens.
std::vector<std::string> decode_ids(const std::vector<std::size_t>& ids, const Vocabulary& vocab);

struct TokenizedBatch {
    std::vector<EncodedPair> pairs;
    std::size_t c_len = 0;
    std::size_t r_len = 0;

    std::size_t size() const { return pairs.size(); }
};

TokenizedBatch encode_pairs(const std::vector<DialoguePair>& pairs, const Vocabulary& vocab,
                            std::size_t c_len, std::size_t r_len);

/// Set of contiguous n-grams harvested from reference token sequences.
/// Tokens never contain spaces, so grams are stored space-joined.
class NgramVocabulary {
public:
    explicit NgramVocabulary(std::size_t n) : n_(n) {
        if (n == 0) throw std::invalid_argument("ngram order must be >= 1");
    }

    std::size_t order() const { return n_; }
    std::size_t size() const { return grams_.size(); }
    bool contains(const std::string& joined) const { return grams_.count(joined) > 0; }

    void add_reference(const std::vector<std::string>& tokens);

    void save(const std::string& path) const;  // sorted, one gram per line
    static NgramVocabulary load(const std::string& path, std::size_t n);

private:
    std::size_t n_;
    std::unordered_set<std::string> grams_;
};

NgramVocabulary build_ngram_vocabulary(const std::vector<std::vector<std::string>>& references,
                                       std::size_t n);

/// Enumerate the space-joined n-grams of one token sequence, in order.
std::vector<std::string> ngrams_of(const std::vector<std::string>& tokens, std::size_t n);

/// Pair file: UTF-8, one `context\tresponse` per line. Malformed lines raise
/// with the 1-based line number.
std::vector<DialoguePair> load_pair_file(const std::string& path);
void save_pair_file(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& lines);

}  // namespace think
