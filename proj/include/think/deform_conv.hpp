#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "think/tensor.hpp"

namespace think {

/// Hyperparameters of the multi-head semantics extractor. The first
/// convolution uses a valid window of k rows over an (n x m) embedding
/// matrix, so its output length is L = n - k + 1.
struct SEConfig {
    std::size_t n = 0;     // input token rows
    std::size_t m = 0;     // embedding dimension
    std::size_t k = 0;     // receptive field size
    std::size_t head = 1;  // number of independent heads
    std::size_t p = 1;     // final convolution channels

    std::size_t conv_len() const { return n - k + 1; }
    std::size_t feature_len() const { return head * conv_len() * p; }
    void validate() const;
};

/// Trainable parameters of one head. The paper's 4-d kernel shapes
/// (k, m, 1, c) are stored with the unit axis dropped.
struct DeformHeadParams {
    Tensor K;           // (k, m, n)  first conv, n output channels
    Tensor conv_bias;   // (n)
    Tensor W;           // (L, n)     translation matrix
    Tensor K_final;     // (k, m, p)  final conv
    Tensor final_bias;  // (p)

    static DeformHeadParams init(const SEConfig& cfg, std::mt19937_64& rng);
    static DeformHeadParams zeros(const SEConfig& cfg);
    void check(const SEConfig& cfg) const;
};

/// How the row-selection matrix is produced from the shift probabilities.
///  Hard: one-hot argmax forward, straight-through backward (default).
///  Soft: the probabilities themselves (relaxed path, used by gradient checks).
///  GumbelHard: Gumbel noise at temperature tau, then hard + straight-through.
enum class SelectionMode { Hard, Soft, GumbelHard };

struct SelectionOptions {
    SelectionMode mode = SelectionMode::Hard;
    double tau = 1.0;
    std::mt19937_64* rng = nullptr;  // required for GumbelHard
};

/// Every intermediate of one head's forward pass, kept for inspection and
/// for the backward pass.
struct DeformTrace {
    Tensor M_f;        // (L, n)
    Tensor P;          // (n, n) row-stochastic shift probabilities
    Tensor P_hard;     // (n, n) one-hot rows (valid in Hard/GumbelHard modes)
    Tensor selection;  // the matrix actually multiplied against X
    std::vector<std::size_t> selected;  // argmax source index per row
    Tensor X_deform;   // (n, m)
    Tensor f_final;    // (L, p)
    double inv_tau = 1.0;  // 1/tau applied between shift logits and P
};

/// M_f[l,c] = sum over the k x m window of X starting at row l, weighted by
/// output channel c of K, plus bias. Valid convolution, stride 1.
Tensor first_conv(const Tensor& X, const Tensor& K, const Tensor& bias);

/// The pre-softmax position-shift scores M_f^T * W, shaped (n, n).
Tensor shift_logits(const Tensor& M_f, const Tensor& W);

/// P = row-wise softmax of M_f^T * W. P[i,j] is the probability that the
/// token at source position j shifts to target position i.
Tensor translation_probabilities(const Tensor& M_f, const Tensor& W);

/// One-hot argmax per row; ties resolve to the lowest index. The backward
/// treatment (gradient passes through unchanged) lives in head_backward.
Tensor discretize(const Tensor& P, std::vector<std::size_t>* selected = nullptr);

/// X_deform = S * X. For one-hot S this copies the selected rows bit-exactly.
Tensor deform(const Tensor& S, const Tensor& X);

/// Valid convolution of X_deform with the p-channel final kernel.
Tensor final_conv(const Tensor& X_deform, const Tensor& K_final, const Tensor& bias);

DeformTrace head_forward(const Tensor& X, const DeformHeadParams& params, const SEConfig& cfg,
                         const SelectionOptions& opts = {});

/// Concatenation of the flattened per-head f_final features; every head sees
/// the full X with its own parameters. traces (when non-null) receives one
/// DeformTrace per head.
std::vector<double> semantics_extract(const Tensor& X, const std::vector<DeformHeadParams>& heads,
                                      const SEConfig& cfg, const SelectionOptions& opts = {},
                                      std::vector<DeformTrace>* traces = nullptr);

/// Accumulates parameter gradients (into `grad`) and input gradients (into
/// `dX`, same shape as X) for one head, given d(loss)/d(f_final).
/// The selection step is straight-through: d(loss)/dP = d(loss)/dS.
void head_backward(const Tensor& X, const DeformHeadParams& params, const DeformTrace& trace,
                   const Tensor& d_f_final, DeformHeadParams& grad, Tensor& dX);

}  // namespace think
