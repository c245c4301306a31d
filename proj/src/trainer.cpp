#include "think/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace think {

void TrainConfig::validate() const {
    if (batch_size < 1 || epochs < 1 || warmup_steps < 1)
        throw std::invalid_argument("TrainConfig: counts must be positive");
    if (init_lr <= 0.0) throw std::invalid_argument("TrainConfig: init_lr must be positive");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw std::invalid_argument("TrainConfig: label_smoothing must lie in [0, 1)");
    if (l2_weight < 0.0) throw std::invalid_argument("TrainConfig: l2_weight must be >= 0");
}

double lr_schedule(std::size_t step, const TrainConfig& cfg) {
    if (step < 1) throw std::invalid_argument("lr_schedule: step counts from 1");
    double s = static_cast<double>(step);
    double w = static_cast<double>(cfg.warmup_steps);
    return cfg.init_lr * std::min(s / w, std::sqrt(w / s));
}

TrainState TrainState::fresh(const GeneratorPool& pool) {
    TrainState st;
    st.m = GeneratorPool::zeros_like(pool);
    st.v = GeneratorPool::zeros_like(pool);
    st.step = 0;
    return st;
}

double clip_global_norm(GeneratorPool& grads, double max_norm) {
    double sq = squared_parameter_norm(grads);
    double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        double scale = max_norm / norm;
        for_each_parameter(grads, [&](const std::string&, Tensor& t) {
            for (double& g : t.data) g *= scale;
        });
    }
    return norm;
}

static void adam_step(GeneratorPool& pool, GeneratorPool& grads, TrainState& state,
                      const TrainConfig& cfg, double lr) {
    double t = static_cast<double>(state.step);
    double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
    double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
    auto params = parameter_entries(pool);
    auto gs = parameter_entries(grads);
    auto ms = parameter_entries(state.m);
    auto vs = parameter_entries(state.v);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].second;
        Tensor& g = *gs[i].second;
        Tensor& m = *ms[i].second;
        Tensor& v = *vs[i].second;
        for (std::size_t j = 0; j < p.numel(); ++j) {
            double mj = cfg.adam_beta1 * m.data[j] + (1.0 - cfg.adam_beta1) * g.data[j];
            double vj = cfg.adam_beta2 * v.data[j] + (1.0 - cfg.adam_beta2) * g.data[j] * g.data[j];
            double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.adam_eps);
            // keep everything float32-representable so checkpoints are lossless
            m.data[j] = static_cast<double>(static_cast<float>(mj));
            v.data[j] = static_cast<double>(static_cast<float>(vj));
            p.data[j] = static_cast<double>(static_cast<float>(p.data[j] - update));
        }
    }
}

TrainResult train(GeneratorPool& pool, const TokenizedBatch& data, const TrainConfig& cfg,
                  TrainState* state) {
    cfg.validate();
    if (data.pairs.empty()) throw std::invalid_argument("train: empty data");
    if (data.c_len != pool.config.c_len || data.r_len != pool.config.r_len)
        throw std::invalid_argument("train: batch lengths do not match model config");

    TrainState local;
    if (!state) {
        local = TrainState::fresh(pool);
        state = &local;
    }

    std::mt19937_64 shuffle_rng(cfg.seed);
    GeneratorPool grads = GeneratorPool::zeros_like(pool);
    std::vector<std::size_t> order(data.pairs.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    std::size_t V = pool.config.vocab_size;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        double last_lr = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, order.size());
            for_each_parameter(grads, [](const std::string&, Tensor& t) { t.fill(0.0); });

            std::size_t total_positions = 0;
            for (std::size_t idx = start; idx < end; ++idx)
                total_positions += loss_mask_len(data.pairs[order[idx]].response);
            double inv_total = total_positions ? 1.0 / static_cast<double>(total_positions) : 0.0;

            double ce_sum = 0.0;
            std::vector<double> dlogits(V);
            for (std::size_t idx = start; idx < end; ++idx) {
                const EncodedPair& pr = data.pairs[order[idx]];
                std::vector<std::size_t> all_ids = pr.context;
                all_ids.insert(all_ids.end(), pr.response.begin(), pr.response.end());
                std::size_t masked = loss_mask_len(pr.response);
                for (std::size_t pos = 0; pos < masked; ++pos) {
                    std::size_t rows = pool.config.input_len(pos);
                    std::vector<std::size_t> ids(all_ids.begin(), all_ids.begin() + rows);
                    GeneratorActivations acts =
                        generator_forward_embedded(pool, pos, embed_ids(pool, ids));
                    ce_sum += smoothed_cross_entropy(acts.logits.data(), V, pr.response[pos],
                                                     cfg.label_smoothing);
                    std::fill(dlogits.begin(), dlogits.end(), 0.0);
                    smoothed_cross_entropy_grad(acts.logits.data(), V, pr.response[pos],
                                                cfg.label_smoothing, inv_total, dlogits.data());
                    generator_backward(pool, pos, acts, dlogits, grads, &ids);
                }
            }

            double loss = ce_sum * inv_total + cfg.l2_weight * squared_parameter_norm(pool);
            if (!std::isfinite(loss)) {
                std::ostringstream msg;
                msg << "non-finite loss (" << loss << ") at epoch " << epoch << ", batch "
                    << batches << " (step " << (state->step + 1) << ")";
                throw std::runtime_error(msg.str());
            }

            if (cfg.l2_weight > 0.0) {
                auto ps = parameter_entries(pool);
                auto gs = parameter_entries(grads);
                for (std::size_t i = 0; i < ps.size(); ++i)
                    for (std::size_t j = 0; j < ps[i].second->numel(); ++j)
                        gs[i].second->data[j] += 2.0 * cfg.l2_weight * ps[i].second->data[j];
            }

            clip_global_norm(grads, cfg.grad_clip);
            state->step += 1;
            last_lr = lr_schedule(state->step, cfg);
            adam_step(pool, grads, *state, cfg, last_lr);

            epoch_loss += loss;
            ++batches;
        }

        result.history.push_back({epoch, epoch_loss / static_cast<double>(batches), last_lr});
    }
    result.final_step = state->step;
    return result;
}

void save_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write history file: " + path);
    out << "epoch,mean_loss,lr\n";
    out.precision(17);
    for (const auto& e : history) out << e.epoch << "," << e.mean_loss << "," << e.lr << "\n";
}

// ---- checkpoint IO ----

static void write_f32_le(const fs::path& file, const Tensor& t) {
    std::vector<unsigned char> bytes(t.numel() * 4);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        float f = static_cast<float>(t.data[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        bytes[4 * i + 0] = static_cast<unsigned char>(bits & 0xff);
        bytes[4 * i + 1] = static_cast<unsigned char>((bits >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<unsigned char>((bits >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<unsigned char>((bits >> 24) & 0xff);
    }
    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint blob: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    fs::rename(tmp, file);
}

static void read_f32_le(const fs::path& file, Tensor& t, const std::string& name) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint missing blob for array " + name);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() != t.numel() * 4)
        throw std::runtime_error("array " + name + ": blob holds " +
                                 std::to_string(bytes.size() / 4) + " values but manifest shape " +
                                 t.shape_str() + " declares " + std::to_string(t.numel()));
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                             (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        t.data[i] = static_cast<double>(f);
    }
}

static json model_config_json(const ModelConfig& c) {
    return json{{"c_len", c.c_len},   {"r_len", c.r_len},   {"vocab_size", c.vocab_size},
                {"embed_dim", c.embed_dim}, {"hidden", c.hidden}, {"k", c.k},
                {"head", c.head},     {"p", c.p}};
}

static ModelConfig model_config_from_json(const json& j) {
    ModelConfig c;
    c.c_len = j.at("c_len").get<std::size_t>();
    c.r_len = j.at("r_len").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.k = j.at("k").get<std::size_t>();
    c.head = j.at("head").get<std::size_t>();
    c.p = j.at("p").get<std::size_t>();
    return c;
}

static json train_config_json(const TrainConfig& c) {
    return json{{"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"init_lr", c.init_lr},
                {"warmup_steps", c.warmup_steps},
                {"label_smoothing", c.label_smoothing},
                {"l2_weight", c.l2_weight},
                {"grad_clip", c.grad_clip},
                {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},
                {"adam_eps", c.adam_eps},
                {"seed", c.seed}};
}

static TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.init_lr = j.at("init_lr").get<double>();
    c.warmup_steps = j.at("warmup_steps").get<std::size_t>();
    c.label_smoothing = j.at("label_smoothing").get<double>();
    c.l2_weight = j.at("l2_weight").get<double>();
    c.grad_clip = j.at("grad_clip").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

void save_checkpoint(const std::string& dir, const GeneratorPool& pool, const TrainConfig& cfg,
                     const TrainState& state, const std::string& vocab_ref) {
    fs::create_directories(dir);
    json arrays = json::array();

    auto dump = [&](const std::string& name, const Tensor& t) {
        write_f32_le(fs::path(dir) / (name + ".bin"), t);
        arrays.push_back(json{{"name", name}, {"shape", t.shape}, {"file", name + ".bin"}});
    };
    for_each_parameter(pool, [&](const std::string& name, const Tensor& t) { dump(name, t); });
    for_each_parameter(state.m,
                       [&](const std::string& name, const Tensor& t) { dump("opt.m." + name, t); });
    for_each_parameter(state.v,
                       [&](const std::string& name, const Tensor& t) { dump("opt.v." + name, t); });

    json manifest{{"format", "think-checkpoint"},
                  {"version", 1},
                  {"step", state.step},
                  {"vocab", json{{"file", vocab_ref}, {"size", pool.config.vocab_size}}},
                  {"model", model_config_json(pool.config)},
                  {"train", train_config_json(cfg)},
                  {"arrays", arrays}};

    fs::path tmp = fs::path(dir) / "manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
        out << manifest.dump(2) << "\n";
    }
    fs::rename(tmp, fs::path(dir) / "manifest.json");
}

Checkpoint load_checkpoint(const std::string& dir) {
    fs::path mpath = fs::path(dir) / "manifest.json";
    std::ifstream in(mpath, std::ios::binary);
    if (!in) throw std::runtime_error("no checkpoint manifest at " + mpath.string());
    json manifest = json::parse(in);
    if (manifest.value("format", "") != "think-checkpoint")
        throw std::runtime_error("not a checkpoint manifest: " + mpath.string());

    Checkpoint ck;
    ck.pool = GeneratorPool::shaped(model_config_from_json(manifest.at("model")));
    ck.train = train_config_from_json(manifest.at("train"));
    ck.state = TrainState::fresh(ck.pool);
    ck.state.step = manifest.at("step").get<std::size_t>();
    ck.vocab_ref = manifest.at("vocab").at("file").get<std::string>();

    struct Entry {
        std::vector<std::size_t> shape;
        std::string file;
    };
    std::unordered_map<std::string, Entry> listed;
    for (const auto& a : manifest.at("arrays"))
        listed[a.at("name").get<std::string>()] = {
            a.at("shape").get<std::vector<std::size_t>>(), a.at("file").get<std::string>()};

    auto restore = [&](const std::string& name, Tensor& t, bool required) {
        auto it = listed.find(name);
        if (it == listed.end()) {
            if (required) throw std::runtime_error("checkpoint missing array " + name);
            return;
        }
        if (it->second.shape != t.shape) {
            Tensor claim;
            claim.shape = it->second.shape;
            throw std::runtime_error("array " + name + ": manifest shape " + claim.shape_str() +
                                     " does not match expected " + t.shape_str());
        }
        read_f32_le(fs::path(dir) / it->second.file, t, name);
    };
    for_each_parameter(ck.pool, [&](const std::string& name, Tensor& t) { restore(name, t, true); });
    for_each_parameter(ck.state.m, [&](const std::string& name, Tensor& t) {
        restore("opt.m." + name, t, false);
    });
    for_each_parameter(ck.state.v, [&](const std::string& name, Tensor& t) {
        restore("opt.v." + name, t, false);
    });
    return ck;
}

}  // namespace think
