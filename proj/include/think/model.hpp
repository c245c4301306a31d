#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "think/corpus.hpp"
#include "think/deform_conv.hpp"
#include "think/tensor.hpp"

namespace think {

struct ModelConfig {
    std::size_t c_len = 0;
    std::size_t r_len = 0;
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 0;
    std::size_t hidden = 0;
    std::size_t k = 0;
    std::size_t head = 1;
    std::size_t p = 1;

    // one generator per response position; generator `pos` (0-based) reads
    // the context plus the first `pos` response tokens
    std::size_t generator_count() const { return r_len; }
    std::size_t input_len(std::size_t pos) const { return c_len + pos; }
    SEConfig se_config(std::size_t pos) const;
    void validate() const;
};

/// One generator: per-head extractor parameters plus a two-layer MLP
/// (affine -> ReLU -> affine) mapping f_se to vocabulary logits.
struct GeneratorParams {
    std::vector<DeformHeadParams> heads;
    Tensor W1, b1;  // (hidden, feature_len), (hidden)
    Tensor W2, b2;  // (V, hidden), (V)
};

/// N independent generators sharing one embedding table.
struct GeneratorPool {
    ModelConfig config;
    Tensor embedding;  // (V, m)
    std::vector<GeneratorParams> generators;

    static GeneratorPool init(const ModelConfig& cfg, std::uint64_t seed);
    /// All-zero tensors in the layout the config dictates.
    static GeneratorPool shaped(const ModelConfig& cfg);
    /// Same layout, all zeros; used as a gradient accumulator.
    static GeneratorPool zeros_like(const GeneratorPool& other);
};

/// Visit every trainable tensor with a stable name ("embedding",
/// "gen3.head1.K", "gen3.mlp.W2", ...). Iteration order is fixed.
void for_each_parameter(GeneratorPool& pool,
                        const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_parameter(const GeneratorPool& pool,
                        const std::function<void(const std::string&, const Tensor&)>& fn);

std::vector<std::pair<std::string, Tensor*>> parameter_entries(GeneratorPool& pool);
std::vector<std::pair<std::string, const Tensor*>> parameter_entries(const GeneratorPool& pool);

/// Sum of squared parameter values over the whole pool.
double squared_parameter_norm(const GeneratorPool& pool);

/// Embed a row of token ids against the pool's table.
Tensor embed_ids(const GeneratorPool& pool, const std::vector<std::size_t>& ids);

struct GeneratorOutput {
    std::vector<double> logits;  // length V
    std::size_t token = 0;       // argmax id
};

struct GeneratorActivations {
    Tensor X;  // (n_pos, m) input embeddings
    std::vector<DeformTrace> traces;
    std::vector<double> f_se;
    std::vector<double> hidden_pre;
    std::vector<double> hidden_act;
    std::vector<double> logits;

    std::size_t argmax() const;
};

/// Full forward pass of generator `pos` on pre-embedded input (exactly
/// c_len + pos rows).
GeneratorActivations generator_forward_embedded(const GeneratorPool& pool, std::size_t pos,
                                                const Tensor& X,
                                                const SelectionOptions& opts = {});

/// Embeds `ids` (context plus generated prefix) and runs generator `pos`.
GeneratorOutput generator_forward(const GeneratorPool& pool, std::size_t pos,
                                  const std::vector<std::size_t>& ids,
                                  const SelectionOptions& opts = {});

/// Accumulate gradients for one generator given d(loss)/d(logits).
/// When `token_ids` is given, input-embedding gradients are scattered into
/// grads.embedding; dX_out (optional) receives d(loss)/dX.
void generator_backward(const GeneratorPool& pool, std::size_t pos,
                        const GeneratorActivations& acts, const std::vector<double>& dlogits,
                        GeneratorPool& grads, const std::vector<std::size_t>* token_ids = nullptr,
                        Tensor* dX_out = nullptr);

/// Greedy decoding: each generator appends its argmax token to the running
/// context. Always emits exactly r_len ids.
std::vector<std::size_t> generate_response(const GeneratorPool& pool,
                                           const std::vector<std::size_t>& context_row);

/// Text in, text out: tokenize, encode, generate, strip EOS/PAD, join.
std::string generate_text(const GeneratorPool& pool, const Vocabulary& vocab,
                          const std::string& context_text);

/// Teacher forcing: row i holds generator_i's logits over the embedded
/// concatenation of the gold context and response prefix.
Tensor teacher_forcing_logits(const GeneratorPool& pool, const EncodedPair& pair,
                              const SelectionOptions& opts = {});

/// Teacher forcing with all activations kept (training path).
std::vector<GeneratorActivations> teacher_forcing_activations(const GeneratorPool& pool,
                                                              const EncodedPair& pair,
                                                              const SelectionOptions& opts = {});

/// Number of response positions included in the loss: everything up to and
/// including the first EOS (all of them when no EOS is present).
std::size_t loss_mask_len(const std::vector<std::size_t>& response_row);

/// Label-smoothed cross entropy of one position: 1-eps on the gold id,
/// eps/(V-1) spread over the rest.
double smoothed_cross_entropy(const double* logits, std::size_t V, std::size_t gold, double eps);

/// d(smoothed CE)/d(logits) scaled by `scale`, added into dlogits.
void smoothed_cross_entropy_grad(const double* logits, std::size_t V, std::size_t gold, double eps,
                                 double scale, double* dlogits);

/// Mean smoothed cross entropy over the masked positions of one pair plus
/// l2_weight times the squared parameter norm.
double sequence_loss(const Tensor& logits, const std::vector<std::size_t>& response_row,
                     double label_smoothing, double l2_weight, const GeneratorPool& pool);

}  // namespace think
