#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "think/corpus.hpp"

namespace think {

/// One evaluation item: context, model output, gold reference (all tokenized).
struct ResponseItem {
    std::vector<std::string> context;
    std::vector<std::string> generated;
    std::vector<std::string> reference;
};
using ResponseSet = std::vector<ResponseItem>;

/// Unique n-grams across all responses divided by total n-gram occurrences.
/// 0 when no response contributes an n-gram.
double distinct_n(const std::vector<std::vector<std::string>>& responses, std::size_t n);

/// Like distinct_n, but only unique n-grams that also occur in the reference
/// n-gram vocabulary count toward the numerator.
double q_phrase_n(const std::vector<std::vector<std::string>>& responses,
                  const NgramVocabulary& gram_vocab);

/// Word vectors for the embedding-based metrics. Out-of-vocabulary tokens map
/// to the zero vector.
class EmbeddingTable {
public:
    static EmbeddingTable load(const std::string& path);
    static EmbeddingTable from_entries(
        const std::vector<std::pair<std::string, std::vector<double>>>& entries);

    std::size_t dim() const { return dim_; }
    std::vector<double> lookup(const std::string& token) const;

private:
    std::unordered_map<std::string, std::vector<double>> vectors_;
    std::size_t dim_ = 0;
};

/// Cosine similarity; defined as 0 whenever either vector is zero.
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Sentence vector: per dimension, the word-vector value of largest
/// magnitude with sign preserved.
std::vector<double> extrema_vector(const std::vector<std::string>& tokens,
                                   const EmbeddingTable& table);
std::vector<double> mean_vector(const std::vector<std::string>& tokens,
                                const EmbeddingTable& table);

double embedding_average(const std::vector<std::string>& generated,
                         const std::vector<std::string>& reference, const EmbeddingTable& table);
double embedding_greedy(const std::vector<std::string>& generated,
                        const std::vector<std::string>& reference, const EmbeddingTable& table);
double embedding_extrema(const std::vector<std::string>& generated,
                         const std::vector<std::string>& reference, const EmbeddingTable& table);

/// Smoothed sentence-level BLEU-k (uniform weights over orders 1..k, brevity
/// penalty, add-epsilon smoothing on zero clipped counts).
double sentence_bleu(const std::vector<std::string>& hypothesis,
                     const std::vector<std::string>& reference, std::size_t max_order);

/// Mean over the set of the mean of BLEU-{1,2,3}.
double bleu_avg(const ResponseSet& items);

/// Mean over the set of the mean of embedding-{greedy, average, extrema}.
double embedding_avg(const ResponseSet& items, const EmbeddingTable& table);

/// Cosine between the mean word vectors of context and generated response.
double coherence(const std::vector<std::string>& context,
                 const std::vector<std::string>& generated, const EmbeddingTable& table);
double coherence_avg(const ResponseSet& items, const EmbeddingTable& table);

/// Raw per-model inputs to the cross-model normalization.
struct ModelScores {
    std::string id;
    double avg_bleu = 0.0;
    double avg_embed = 0.0;
    double coherence = 0.0;
};

/// Share-normalized scores; each component divides by its sum over the model
/// set (all zeros when the sum is zero), and mix_coh adds the three shares.
struct MixCohRow {
    std::string id;
    double b_score = 0.0;
    double e_score = 0.0;
    double c_score = 0.0;
    double mix_coh = 0.0;
};

std::vector<MixCohRow> mix_coh(const std::vector<ModelScores>& models);

/// Everything `evaluate` emits for one model.
struct MetricReport {
    std::string model;
    std::size_t items = 0;
    std::map<std::size_t, double> distinct;  // orders 3,4,5
    std::map<std::size_t, double> q_phrase;
    double avg_bleu = 0.0;
    double avg_embed = 0.0;
    double coherence = 0.0;
};

void save_report(const std::string& path, const MetricReport& report);
MetricReport load_report(const std::string& path);

}  // namespace think
