#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "think/corpus.hpp"
#include "think/model.hpp"

namespace think {

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    double init_lr = 1e-3;
    std::size_t warmup_steps = 4000;
    double label_smoothing = 0.1;
    double l2_weight = 1e-6;
    double grad_clip = 5.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Linear warmup to init_lr at warmup_steps, then inverse-sqrt decay:
/// init_lr * min(step / w, sqrt(w / step)). step counts from 1.
double lr_schedule(std::size_t step, const TrainConfig& cfg);

/// Optimizer moments plus the step counter; survives checkpointing so a
/// resumed run continues the schedule where it left off.
struct TrainState {
    GeneratorPool m;
    GeneratorPool v;
    std::size_t step = 0;

    static TrainState fresh(const GeneratorPool& pool);
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double lr = 0.0;  // rate of the epoch's last step
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t final_step = 0;
};

/// Teacher-forcing training over shuffled minibatches with Adam at the
/// warmup/inverse-sqrt schedule. Throws on a non-finite loss, naming the
/// offending batch. Updated parameters stay float32-representable.
TrainResult train(GeneratorPool& pool, const TokenizedBatch& data, const TrainConfig& cfg,
                  TrainState* state = nullptr);

/// Scale gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_global_norm(GeneratorPool& grads, double max_norm);

void save_history_csv(const std::string& path, const std::vector<EpochStats>& history);

/// Checkpoint directory: manifest.json plus one little-endian float32 .bin
/// per named array (parameters and Adam moments). Writes are
/// write-temp-then-rename.
void save_checkpoint(const std::string& dir, const GeneratorPool& pool, const TrainConfig& cfg,
                     const TrainState& state, const std::string& vocab_ref);

struct Checkpoint {
    GeneratorPool pool;
    TrainConfig train;
    TrainState state;
    std::string vocab_ref;
};

Checkpoint load_checkpoint(const std::string& dir);

}  // namespace think
