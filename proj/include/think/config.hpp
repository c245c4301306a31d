#pragma once

#include <string>

#include "think/model.hpp"
#include "think/trainer.hpp"

namespace think {

/// Everything a CLI run needs: model and training hyperparameters plus the
/// file locations the commands read and write.
struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;

    std::string corpus;          // pair TSV (context<TAB>response per line)
    std::string vocab;           // one token per line, specials first
    std::string embeddings;      // `token v1 .. vd` per line, for the E metrics
    std::string checkpoint_dir;  // manifest.json + per-array blobs
    std::string out_dir;         // reports, generations, plots
};

/// Small model that trains in minutes on one core.
ExperimentConfig desk_profile();
/// The published hyperparameters (V=23000, m=256, c_len=r_len=25, head=6,
/// p=8, batch 64, 100 epochs, warmup 4000).
ExperimentConfig paper_profile();
ExperimentConfig profile_by_name(const std::string& name);

/// Apply one `key=value` setting; throws on unknown keys or bad values.
void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Flat key=value file; `#` starts a comment, blank lines ignored.
void load_config_file(ExperimentConfig& cfg, const std::string& path);

/// All settings in a fixed order, parseable by load_config_file.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace think
