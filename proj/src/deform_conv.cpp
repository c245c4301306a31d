#include "think/deform_conv.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace think {

void SEConfig::validate() const {
    if (m < 1) throw std::invalid_argument("SEConfig: embedding dim m must be >= 1");
    if (k < 1 || k > n)
        throw std::invalid_argument("SEConfig: receptive field k must satisfy 1 <= k <= n (k=" +
                                    std::to_string(k) + ", n=" + std::to_string(n) + ")");
    if (head < 1) throw std::invalid_argument("SEConfig: head count must be >= 1");
    if (p < 1) throw std::invalid_argument("SEConfig: channel count p must be >= 1");
}

DeformHeadParams DeformHeadParams::init(const SEConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    std::size_t L = cfg.conv_len();
    DeformHeadParams h;
    h.K = Tensor({cfg.k, cfg.m, cfg.n});
    h.conv_bias = Tensor({cfg.n});
    h.W = Tensor({L, cfg.n});
    h.K_final = Tensor({cfg.k, cfg.m, cfg.p});
    h.final_bias = Tensor({cfg.p});
    init_fan_in_uniform(h.K, cfg.k * cfg.m, rng);
    init_fan_in_uniform(h.W, L, rng);
    init_fan_in_uniform(h.K_final, cfg.k * cfg.m, rng);
    return h;
}

DeformHeadParams DeformHeadParams::zeros(const SEConfig& cfg) {
    cfg.validate();
    std::size_t L = cfg.conv_len();
    DeformHeadParams h;
    h.K = Tensor({cfg.k, cfg.m, cfg.n});
    h.conv_bias = Tensor({cfg.n});
    h.W = Tensor({L, cfg.n});
    h.K_final = Tensor({cfg.k, cfg.m, cfg.p});
    h.final_bias = Tensor({cfg.p});
    return h;
}

void DeformHeadParams::check(const SEConfig& cfg) const {
    std::size_t L = cfg.conv_len();
    check_shape(K, {cfg.k, cfg.m, cfg.n}, "DeformHeadParams.K");
    check_shape(conv_bias, {cfg.n}, "DeformHeadParams.conv_bias");
    check_shape(W, {L, cfg.n}, "DeformHeadParams.W");
    check_shape(K_final, {cfg.k, cfg.m, cfg.p}, "DeformHeadParams.K_final");
    check_shape(final_bias, {cfg.p}, "DeformHeadParams.final_bias");
}

// Shared by both convolutions: valid window, stride 1, channels = last K axis.
static Tensor conv_valid(const Tensor& X, const Tensor& K, const Tensor& bias, const char* what) {
    if (X.rank() != 2 || K.rank() != 3)
        throw std::invalid_argument(std::string(what) + ": X must be rank 2 and K rank 3");
    std::size_t n = X.dim(0), m = X.dim(1);
    std::size_t k = K.dim(0), channels = K.dim(2);
    if (K.dim(1) != m)
        throw std::invalid_argument(std::string(what) + ": kernel width " +
                                    std::to_string(K.dim(1)) + " != embedding dim " +
                                    std::to_string(m));
    if (k == 0 || k > n)
        throw std::invalid_argument(std::string(what) + ": receptive field " + std::to_string(k) +
                                    " exceeds input rows " + std::to_string(n));
    check_shape(bias, {channels}, what);

    std::size_t L = n - k + 1;
    Tensor out({L, channels});
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t c = 0; c < channels; ++c) {
            double acc = bias(c);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < m; ++b) acc += X(l + a, b) * K(a, b, c);
            out(l, c) = acc;
        }
    }
    return out;
}

Tensor first_conv(const Tensor& X, const Tensor& K, const Tensor& bias) {
    return conv_valid(X, K, bias, "first_conv");
}

Tensor shift_logits(const Tensor& M_f, const Tensor& W) {
    if (M_f.rank() != 2 || W.rank() != 2 || !M_f.same_shape(W))
        throw std::invalid_argument("translation_probabilities: M_f and W must both be (L, n)");
    if (!M_f.all_finite() || !W.all_finite())
        throw std::invalid_argument("translation_probabilities: non-finite input");
    std::size_t L = M_f.dim(0), n = M_f.dim(1);
    Tensor logits({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t l = 0; l < L; ++l) acc += M_f(l, i) * W(l, j);
            logits(i, j) = acc;
        }
    return logits;
}

Tensor translation_probabilities(const Tensor& M_f, const Tensor& W) {
    return softmax_rows(shift_logits(M_f, W));
}

Tensor discretize(const Tensor& P, std::vector<std::size_t>* selected) {
    std::size_t n = P.dim(0), cols = P.dim(1);
    Tensor hard({n, cols});
    if (selected) selected->assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < cols; ++j)
            if (P(i, j) > P(i, best)) best = j;
        hard(i, best) = 1.0;
        if (selected) (*selected)[i] = best;
    }
    return hard;
}

Tensor deform(const Tensor& S, const Tensor& X) {
    if (S.rank() != 2 || X.rank() != 2 || S.dim(1) != X.dim(0))
        throw std::invalid_argument("deform: need (n,n) selection against (n,m) embeddings");
    std::size_t n = S.dim(0), m = X.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < S.dim(1); ++j) {
            double s = S(i, j);
            if (s == 0.0) continue;
            if (s == 1.0) {
                // one-hot rows copy their source bit-exactly
                for (std::size_t b = 0; b < m; ++b) out(i, b) += X(j, b);
            } else {
                for (std::size_t b = 0; b < m; ++b) out(i, b) += s * X(j, b);
            }
        }
    return out;
}

Tensor final_conv(const Tensor& X_deform, const Tensor& K_final, const Tensor& bias) {
    return conv_valid(X_deform, K_final, bias, "final_conv");
}

DeformTrace head_forward(const Tensor& X, const DeformHeadParams& params, const SEConfig& cfg,
                         const SelectionOptions& opts) {
    cfg.validate();
    params.check(cfg);
    check_shape(X, {cfg.n, cfg.m}, "head_forward.X");

    DeformTrace t;
    t.M_f = first_conv(X, params.K, params.conv_bias);
    Tensor logits = shift_logits(t.M_f, params.W);
    if (opts.mode == SelectionMode::GumbelHard) {
        if (!opts.rng) throw std::invalid_argument("GumbelHard selection requires an RNG");
        if (opts.tau <= 0.0) throw std::invalid_argument("Gumbel temperature must be positive");
        // softmax is shift-invariant per row, so perturbing the raw logits
        // is equivalent to perturbing log-probabilities
        std::uniform_real_distribution<double> unit(1e-12, 1.0);
        t.inv_tau = 1.0 / opts.tau;
        for (double& v : logits.data) {
            double g = -std::log(-std::log(unit(*opts.rng)));
            v = (v + g) * t.inv_tau;
        }
    }
    t.P = softmax_rows(logits);
    t.P_hard = discretize(t.P, &t.selected);
    t.selection = (opts.mode == SelectionMode::Soft) ? t.P : t.P_hard;
    t.X_deform = deform(t.selection, X);
    t.f_final = final_conv(t.X_deform, params.K_final, params.final_bias);
    return t;
}

std::vector<double> semantics_extract(const Tensor& X, const std::vector<DeformHeadParams>& heads,
                                      const SEConfig& cfg, const SelectionOptions& opts,
                                      std::vector<DeformTrace>* traces) {
    cfg.validate();
    if (heads.size() != cfg.head)
        throw std::invalid_argument("semantics_extract: expected " + std::to_string(cfg.head) +
                                    " head parameter sets, got " + std::to_string(heads.size()));
    if (traces) traces->clear();
    std::vector<double> f_se;
    f_se.reserve(cfg.feature_len());
    for (const auto& h : heads) {
        DeformTrace t = head_forward(X, h, cfg, opts);
        f_se.insert(f_se.end(), t.f_final.data.begin(), t.f_final.data.end());
        if (traces) traces->push_back(std::move(t));
    }
    return f_se;
}

void head_backward(const Tensor& X, const DeformHeadParams& params, const DeformTrace& trace,
                   const Tensor& d_f_final, DeformHeadParams& grad, Tensor& dX) {
    std::size_t n = X.dim(0), m = X.dim(1);
    std::size_t k = params.K.dim(0), p = params.K_final.dim(2);
    std::size_t L = n - k + 1;
    check_shape(d_f_final, {L, p}, "head_backward.d_f_final");

    // final conv
    Tensor dXdef({n, m});
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < p; ++c) {
            double g = d_f_final(l, c);
            if (g == 0.0) continue;
            grad.final_bias(c) += g;
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < m; ++b) {
                    grad.K_final(a, b, c) += g * trace.X_deform(l + a, b);
                    dXdef(l + a, b) += g * params.K_final(a, b, c);
                }
        }

    // X_deform = S * X: gradient reaches both the selection matrix and X.
    // Straight-through: d(loss)/dP is taken to be d(loss)/dS.
    Tensor dP({n, n});
    const Tensor& S = trace.selection;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t b = 0; b < m; ++b) acc += dXdef(i, b) * X(j, b);
            dP(i, j) = acc;
            double s = S(i, j);
            if (s != 0.0)
                for (std::size_t b = 0; b < m; ++b) dX(j, b) += s * dXdef(i, b);
        }

    // softmax rows; inv_tau covers the Gumbel temperature scaling
    Tensor dLogits({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dP(i, j) * trace.P(i, j);
        for (std::size_t j = 0; j < n; ++j)
            dLogits(i, j) = trace.P(i, j) * (dP(i, j) - dot) * trace.inv_tau;
    }

    // logits = M_f^T * W
    Tensor dMf({L, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < L; ++l) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += dLogits(i, j) * params.W(l, j);
            dMf(l, i) = acc;
        }
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += trace.M_f(l, i) * dLogits(i, j);
            grad.W(l, j) += acc;
        }

    // first conv
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t c = 0; c < n; ++c) {
            double g = dMf(l, c);
            if (g == 0.0) continue;
            grad.conv_bias(c) += g;
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < m; ++b) {
                    grad.K(a, b, c) += g * X(l + a, b);
                    dX(l + a, b) += g * params.K(a, b, c);
                }
        }
}

}  // namespace think
