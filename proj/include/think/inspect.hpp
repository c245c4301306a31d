#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "think/corpus.hpp"
#include "think/model.hpp"

namespace think {

/// Row-selection decisions of generator 0 on one sentence: for every head and
/// every target row, the source row index whose embedding was copied there.
struct InspectResult {
    std::vector<std::string> tokens;                  // surface form per input row
    std::vector<std::vector<std::size_t>> selected;   // [head][target row] -> source row
    bool truncated = false;                           // sentence exceeded c_len
};

InspectResult inspect_deform(const GeneratorPool& pool, const Vocabulary& vocab,
                             const std::string& sentence);

std::string format_trace(const InspectResult& r);
void save_trace_json(const std::string& path, const InspectResult& r);

/// Scatter of (source index, target row) pairs, one color per head, with
/// uniform jitter of +-0.25 on the abscissa and +-0.125 on the ordinate so
/// coinciding selections stay visible. Deterministic for a fixed seed.
void write_scatter_svg(const std::string& path, const InspectResult& r, std::uint64_t seed);

}  // namespace think
