#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "think/corpus.hpp"
#include "think/deform_conv.hpp"
#include "think/tensor.hpp"

namespace think {

struct ProbeExample {
    std::vector<std::string> tokens;
    std::string label;
};

/// Labeled sentences for the topic-classification probe. File format is one
/// example per line: `label<TAB>sentence`.
struct ProbeDataset {
    std::vector<ProbeExample> items;
    std::vector<std::string> labels;  // sorted unique label names

    static ProbeDataset load(const std::string& path);
    static ProbeDataset from_items(std::vector<ProbeExample> items);

    std::size_t label_index(const std::string& label) const;
    /// >= 2 labels and every sentence non-empty.
    void validate() const;
};

/// Synthetic dataset where a single keyword token determines the topic; the
/// rest of each sentence is filler drawn from a shared pool. Used by the
/// separability checks.
ProbeDataset make_keyword_probe_dataset(std::size_t topics, std::size_t per_topic,
                                        std::size_t sentence_len, std::uint64_t seed);

struct ProbeConfig {
    std::size_t max_len = 12;     // sentences padded / truncated to this many rows
    std::size_t embed_dim = 24;
    std::size_t k = 3;
    std::size_t head = 2;
    std::size_t p = 4;
    std::size_t vocab_cap = 4000;
    std::size_t epochs = 40;
    std::size_t batch_size = 16;
    double lr = 3e-3;
    double test_fraction = 0.25;
    std::uint64_t seed = 7;
    bool shuffle_labels = false;  // destroys the token/label correlation first

    void validate() const;
};

/// Extractor plus a single affine head over f_se.
struct ProbeModel {
    SEConfig se;
    std::size_t num_labels = 0;
    Tensor embedding;  // (vocab, m)
    std::vector<DeformHeadParams> heads;
    Tensor Wc;  // (num_labels, feature_len)
    Tensor bc;  // (num_labels)

    static ProbeModel init(const SEConfig& se, std::size_t vocab, std::size_t num_labels,
                           std::uint64_t seed);
};

std::vector<std::pair<std::string, Tensor*>> parameter_entries(ProbeModel& model);

struct ClassStats {
    std::string label;
    std::size_t support = 0;  // gold count in the test split
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;  // one-vs-rest: (TP + TN) / total
};

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [gold][pred]

std::vector<ClassStats> stats_from_confusion(const ConfusionMatrix& confusion,
                                             const std::vector<std::string>& labels);
double accuracy_from_confusion(const ConfusionMatrix& confusion);

struct ProbeReport {
    std::vector<std::string> labels;
    ConfusionMatrix confusion;
    std::vector<ClassStats> per_class;
    double accuracy = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t epochs_run = 0;
    double final_train_loss = 0.0;
};

/// Seeded split, cross-entropy training of the probe model, statistics on the
/// held-out portion.
ProbeReport train_probe(const ProbeDataset& data, const ProbeConfig& cfg);

std::string format_probe_report(const ProbeReport& report);
void save_probe_report(const std::string& path, const ProbeReport& report);

}  // namespace think
