#include "think/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace think {

SEConfig ModelConfig::se_config(std::size_t pos) const {
    return SEConfig{input_len(pos), embed_dim, k, head, p};
}

void ModelConfig::validate() const {
    if (c_len < 1 || r_len < 1) throw std::invalid_argument("ModelConfig: lengths must be >= 1");
    if (vocab_size < 4) throw std::invalid_argument("ModelConfig: vocab_size must be >= 4");
    if (embed_dim < 1 || hidden < 1)
        throw std::invalid_argument("ModelConfig: embed_dim and hidden must be >= 1");
    if (k < 1 || k > c_len)
        throw std::invalid_argument(
            "ModelConfig: k must satisfy 1 <= k <= c_len (smallest generator input)");
    se_config(0).validate();
}

GeneratorPool GeneratorPool::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    GeneratorPool pool;
    pool.config = cfg;
    pool.embedding = Tensor({cfg.vocab_size, cfg.embed_dim});
    init_uniform(pool.embedding, -0.1, 0.1, rng);

    pool.generators.resize(cfg.generator_count());
    for (std::size_t pos = 0; pos < cfg.generator_count(); ++pos) {
        SEConfig se = cfg.se_config(pos);
        GeneratorParams& g = pool.generators[pos];
        for (std::size_t h = 0; h < cfg.head; ++h) g.heads.push_back(DeformHeadParams::init(se, rng));
        std::size_t D = se.feature_len();
        g.W1 = Tensor({cfg.hidden, D});
        g.b1 = Tensor({cfg.hidden});
        g.W2 = Tensor({cfg.vocab_size, cfg.hidden});
        g.b2 = Tensor({cfg.vocab_size});
        init_fan_in_uniform(g.W1, D, rng);
        init_fan_in_uniform(g.W2, cfg.hidden, rng);
    }
    return pool;
}

GeneratorPool GeneratorPool::shaped(const ModelConfig& cfg) {
    cfg.validate();
    GeneratorPool pool;
    pool.config = cfg;
    pool.embedding = Tensor({cfg.vocab_size, cfg.embed_dim});
    pool.generators.resize(cfg.generator_count());
    for (std::size_t pos = 0; pos < cfg.generator_count(); ++pos) {
        SEConfig se = cfg.se_config(pos);
        GeneratorParams& g = pool.generators[pos];
        for (std::size_t h = 0; h < cfg.head; ++h) g.heads.push_back(DeformHeadParams::zeros(se));
        g.W1 = Tensor({cfg.hidden, se.feature_len()});
        g.b1 = Tensor({cfg.hidden});
        g.W2 = Tensor({cfg.vocab_size, cfg.hidden});
        g.b2 = Tensor({cfg.vocab_size});
    }
    return pool;
}

GeneratorPool GeneratorPool::zeros_like(const GeneratorPool& other) {
    GeneratorPool pool;
    pool.config = other.config;
    pool.embedding = Tensor(other.embedding.shape);
    pool.generators.resize(other.generators.size());
    for (std::size_t i = 0; i < other.generators.size(); ++i) {
        const GeneratorParams& src = other.generators[i];
        GeneratorParams& dst = pool.generators[i];
        for (const auto& h : src.heads) {
            DeformHeadParams z;
            z.K = Tensor(h.K.shape);
            z.conv_bias = Tensor(h.conv_bias.shape);
            z.W = Tensor(h.W.shape);
            z.K_final = Tensor(h.K_final.shape);
            z.final_bias = Tensor(h.final_bias.shape);
            dst.heads.push_back(std::move(z));
        }
        dst.W1 = Tensor(src.W1.shape);
        dst.b1 = Tensor(src.b1.shape);
        dst.W2 = Tensor(src.W2.shape);
        dst.b2 = Tensor(src.b2.shape);
    }
    return pool;
}

template <typename Pool, typename Fn>
static void visit_parameters(Pool& pool, const Fn& fn) {
    fn("embedding", pool.embedding);
    for (std::size_t i = 0; i < pool.generators.size(); ++i) {
        auto& g = pool.generators[i];
        std::string base = "gen" + std::to_string(i) + ".";
        for (std::size_t h = 0; h < g.heads.size(); ++h) {
            std::string hb = base + "head" + std::to_string(h) + ".";
            fn(hb + "K", g.heads[h].K);
            fn(hb + "conv_bias", g.heads[h].conv_bias);
            fn(hb + "W", g.heads[h].W);
            fn(hb + "K_final", g.heads[h].K_final);
            fn(hb + "final_bias", g.heads[h].final_bias);
        }
        fn(base + "mlp.W1", g.W1);
        fn(base + "mlp.b1", g.b1);
        fn(base + "mlp.W2", g.W2);
        fn(base + "mlp.b2", g.b2);
    }
}

void for_each_parameter(GeneratorPool& pool,
                        const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_parameters(pool, fn);
}

void for_each_parameter(const GeneratorPool& pool,
                        const std::function<void(const std::string&, const Tensor&)>& fn) {
    visit_parameters(pool, fn);
}

std::vector<std::pair<std::string, Tensor*>> parameter_entries(GeneratorPool& pool) {
    std::vector<std::pair<std::string, Tensor*>> out;
    for_each_parameter(pool, [&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> parameter_entries(const GeneratorPool& pool) {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for_each_parameter(pool,
                       [&](const std::string& name, const Tensor& t) { out.emplace_back(name, &t); });
    return out;
}

double squared_parameter_norm(const GeneratorPool& pool) {
    double sum = 0.0;
    for_each_parameter(pool, [&](const std::string&, const Tensor& t) {
        for (double v : t.data) sum += v * v;
    });
    return sum;
}

Tensor embed_ids(const GeneratorPool& pool, const std::vector<std::size_t>& ids) {
    std::size_t m = pool.config.embed_dim;
    Tensor X({ids.size(), m});
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= pool.config.vocab_size)
            throw std::invalid_argument("embed_ids: token id out of range");
        const double* src = pool.embedding.row(ids[r]);
        std::copy(src, src + m, X.row(r));
    }
    return X;
}

std::size_t GeneratorActivations::argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i;
    return best;
}

GeneratorActivations generator_forward_embedded(const GeneratorPool& pool, std::size_t pos,
                                                const Tensor& X, const SelectionOptions& opts) {
    if (pos >= pool.generators.size())
        throw std::invalid_argument("generator position out of range");
    SEConfig se = pool.config.se_config(pos);
    if (X.rank() != 2 || X.dim(0) != se.n || X.dim(1) != se.m)
        throw std::invalid_argument("generator " + std::to_string(pos) + " expects " +
                                    std::to_string(se.n) + " embedded rows of width " +
                                    std::to_string(se.m) + ", got " + X.shape_str());

    const GeneratorParams& g = pool.generators[pos];
    GeneratorActivations acts;
    acts.X = X;
    acts.f_se = semantics_extract(X, g.heads, se, opts, &acts.traces);

    std::size_t H = pool.config.hidden, V = pool.config.vocab_size, D = acts.f_se.size();
    acts.hidden_pre.resize(H);
    acts.hidden_act.resize(H);
    for (std::size_t i = 0; i < H; ++i) {
        double acc = g.b1(i);
        const double* w = g.W1.row(i);
        for (std::size_t j = 0; j < D; ++j) acc += w[j] * acts.f_se[j];
        acts.hidden_pre[i] = acc;
        acts.hidden_act[i] = acc > 0.0 ? acc : 0.0;
    }
    acts.logits.resize(V);
    for (std::size_t i = 0; i < V; ++i) {
        double acc = g.b2(i);
        const double* w = g.W2.row(i);
        for (std::size_t j = 0; j < H; ++j) acc += w[j] * acts.hidden_act[j];
        acts.logits[i] = acc;
    }
    return acts;
}

GeneratorOutput generator_forward(const GeneratorPool& pool, std::size_t pos,
                                  const std::vector<std::size_t>& ids,
                                  const SelectionOptions& opts) {
    GeneratorActivations acts = generator_forward_embedded(pool, pos, embed_ids(pool, ids), opts);
    GeneratorOutput out;
    out.token = acts.argmax();
    out.logits = std::move(acts.logits);
    return out;
}

void generator_backward(const GeneratorPool& pool, std::size_t pos,
                        const GeneratorActivations& acts, const std::vector<double>& dlogits,
                        GeneratorPool& grads, const std::vector<std::size_t>* token_ids,
                        Tensor* dX_out) {
    const GeneratorParams& g = pool.generators[pos];
    GeneratorParams& gg = grads.generators[pos];
    std::size_t H = pool.config.hidden, V = pool.config.vocab_size, D = acts.f_se.size();
    if (dlogits.size() != V) throw std::invalid_argument("generator_backward: dlogits length");

    std::vector<double> dh(H, 0.0);
    for (std::size_t i = 0; i < V; ++i) {
        double go = dlogits[i];
        if (go == 0.0) continue;
        gg.b2(i) += go;
        double* wg = gg.W2.row(i);
        const double* w = g.W2.row(i);
        for (std::size_t j = 0; j < H; ++j) {
            wg[j] += go * acts.hidden_act[j];
            dh[j] += go * w[j];
        }
    }
    std::vector<double> dfse(D, 0.0);
    for (std::size_t i = 0; i < H; ++i) {
        double gh = acts.hidden_pre[i] > 0.0 ? dh[i] : 0.0;
        if (gh == 0.0) continue;
        gg.b1(i) += gh;
        double* wg = gg.W1.row(i);
        const double* w = g.W1.row(i);
        for (std::size_t j = 0; j < D; ++j) {
            wg[j] += gh * acts.f_se[j];
            dfse[j] += gh * w[j];
        }
    }

    SEConfig se = pool.config.se_config(pos);
    std::size_t per_head = se.conv_len() * se.p;
    Tensor dX({se.n, se.m});
    for (std::size_t h = 0; h < g.heads.size(); ++h) {
        Tensor dff({se.conv_len(), se.p});
        std::copy(dfse.begin() + h * per_head, dfse.begin() + (h + 1) * per_head,
                  dff.data.begin());
        head_backward(acts.X, g.heads[h], acts.traces[h], dff, gg.heads[h], dX);
    }
    if (token_ids) {
        if (token_ids->size() != se.n)
            throw std::invalid_argument("generator_backward: token id count mismatch");
        for (std::size_t r = 0; r < se.n; ++r) {
            double* erow = grads.embedding.row((*token_ids)[r]);
            const double* drow = dX.row(r);
            for (std::size_t b = 0; b < se.m; ++b) erow[b] += drow[b];
        }
    }
    if (dX_out) *dX_out = std::move(dX);
}

std::vector<std::size_t> generate_response(const GeneratorPool& pool,
                                           const std::vector<std::size_t>& context_row) {
    if (context_row.size() != pool.config.c_len)
        throw std::invalid_argument("generate_response: context row must have length c_len");
    std::vector<std::size_t> ids = context_row;
    std::vector<std::size_t> emitted;
    emitted.reserve(pool.config.r_len);
    for (std::size_t pos = 0; pos < pool.config.generator_count(); ++pos) {
        GeneratorOutput out = generator_forward(pool, pos, ids);
        emitted.push_back(out.token);
        ids.push_back(out.token);
    }
    return emitted;
}

std::string generate_text(const GeneratorPool& pool, const Vocabulary& vocab,
                          const std::string& context_text) {
    DialoguePair probe;
    probe.context = tokenize(context_text);
    probe.response = {"?"};  // unused; encode_pair wants a non-degenerate pair
    EncodedPair enc = encode_pair(probe, vocab, pool.config.c_len, pool.config.r_len);
    std::vector<std::size_t> ids = generate_response(pool, enc.context);
    return detokenize(decode_ids(ids, vocab));
}

Tensor teacher_forcing_logits(const GeneratorPool& pool, const EncodedPair& pair,
                              const SelectionOptions& opts) {
    auto acts = teacher_forcing_activations(pool, pair, opts);
    Tensor out({pool.config.r_len, pool.config.vocab_size});
    for (std::size_t i = 0; i < acts.size(); ++i)
        std::copy(acts[i].logits.begin(), acts[i].logits.end(), out.row(i));
    return out;
}

std::vector<GeneratorActivations> teacher_forcing_activations(const GeneratorPool& pool,
                                                              const EncodedPair& pair,
                                                              const SelectionOptions& opts) {
    const ModelConfig& cfg = pool.config;
    if (pair.context.size() != cfg.c_len || pair.response.size() != cfg.r_len)
        throw std::invalid_argument("teacher forcing: pair lengths do not match (c_len, r_len)");

    std::vector<std::size_t> all_ids = pair.context;
    all_ids.insert(all_ids.end(), pair.response.begin(), pair.response.end());
    Tensor X_ue = embed_ids(pool, all_ids);

    std::vector<GeneratorActivations> acts;
    acts.reserve(cfg.generator_count());
    for (std::size_t pos = 0; pos < cfg.generator_count(); ++pos) {
        std::size_t rows = cfg.input_len(pos);
        Tensor X({rows, cfg.embed_dim});
        std::copy(X_ue.data.begin(), X_ue.data.begin() + rows * cfg.embed_dim, X.data.begin());
        acts.push_back(generator_forward_embedded(pool, pos, X, opts));
    }
    return acts;
}

std::size_t loss_mask_len(const std::vector<std::size_t>& response_row) {
    for (std::size_t i = 0; i < response_row.size(); ++i)
        if (response_row[i] == Vocabulary::kEos) return i + 1;
    return response_row.size();
}

double smoothed_cross_entropy(const double* logits, std::size_t V, std::size_t gold, double eps) {
    if (gold >= V) throw std::invalid_argument("smoothed_cross_entropy: gold id out of range");
    double lse = log_sum_exp(logits, V);
    if (eps == 0.0) return lse - logits[gold];
    double off = eps / static_cast<double>(V - 1);
    double weighted = 0.0;
    for (std::size_t y = 0; y < V; ++y)
        weighted += (y == gold ? 1.0 - eps : off) * logits[y];
    return lse - weighted;
}

void smoothed_cross_entropy_grad(const double* logits, std::size_t V, std::size_t gold, double eps,
                                 double scale, double* dlogits) {
    double lse = log_sum_exp(logits, V);
    double off = eps / static_cast<double>(V - 1);
    for (std::size_t y = 0; y < V; ++y) {
        double target = (y == gold ? 1.0 - eps : off);
        dlogits[y] += scale * (std::exp(logits[y] - lse) - target);
    }
}

double sequence_loss(const Tensor& logits, const std::vector<std::size_t>& response_row,
                     double label_smoothing, double l2_weight, const GeneratorPool& pool) {
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw std::invalid_argument("label smoothing must lie in [0, 1)");
    if (logits.rank() != 2 || logits.dim(0) != response_row.size())
        throw std::invalid_argument("sequence_loss: logits rows must match response length");
    std::size_t V = logits.dim(1);
    std::size_t masked = loss_mask_len(response_row);
    double sum = 0.0;
    for (std::size_t i = 0; i < masked; ++i)
        sum += smoothed_cross_entropy(logits.row(i), V, response_row[i], label_smoothing);
    double data = masked ? sum / static_cast<double>(masked) : 0.0;
    return data + l2_weight * squared_parameter_norm(pool);
}

}  // namespace think
