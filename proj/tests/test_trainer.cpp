#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "temp_dir.hpp"
#include "think/trainer.hpp"

using namespace think;

namespace {

ModelConfig toy_model() {
    ModelConfig cfg;
    cfg.c_len = 3;
    cfg.r_len = 2;
    cfg.vocab_size = 8;
    cfg.embed_dim = 4;
    cfg.hidden = 6;
    cfg.k = 2;
    cfg.head = 2;
    cfg.p = 2;
    return cfg;
}

TokenizedBatch toy_batch(const ModelConfig& cfg, std::size_t pairs, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> tok(3, cfg.vocab_size - 1);
    TokenizedBatch batch;
    batch.c_len = cfg.c_len;
    batch.r_len = cfg.r_len;
    for (std::size_t i = 0; i < pairs; ++i) {
        EncodedPair p;
        for (std::size_t j = 0; j < cfg.c_len; ++j) p.context.push_back(tok(rng));
        p.response = {tok(rng), Vocabulary::kEos};
        p.context_len = cfg.c_len;
        p.response_len = 1;
        batch.pairs.push_back(std::move(p));
    }
    return batch;
}

bool pools_identical(const GeneratorPool& a, const GeneratorPool& b) {
    bool same = true;
    auto ea = parameter_entries(a);
    auto eb = parameter_entries(b);
    if (ea.size() != eb.size()) return false;
    for (std::size_t i = 0; i < ea.size(); ++i)
        if (ea[i].second->data != eb[i].second->data) same = false;
    return same;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedule warms up linearly then decays as 1/sqrt") {
    TrainConfig cfg;
    cfg.init_lr = 0.002;
    cfg.warmup_steps = 100;
    CHECK(lr_schedule(1, cfg) == doctest::Approx(0.002 / 100));
    CHECK(lr_schedule(50, cfg) == doctest::Approx(0.001));
    CHECK(lr_schedule(100, cfg) == doctest::Approx(0.002));
    CHECK(lr_schedule(400, cfg) == doctest::Approx(0.001));  // sqrt(100/400) = 1/2
    CHECK_THROWS_AS(lr_schedule(0, cfg), std::invalid_argument);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.validate();
    TrainConfig bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.init_lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.label_smoothing = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.l2_weight = -0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("first optimizer step moves parameters by about one learning rate") {
    // with fresh moments the bias-corrected Adam update is lr * g / (|g| + eps),
    // so any coordinate with a non-negligible gradient moves by nearly +-lr
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 42);
    TokenizedBatch batch = toy_batch(mc, 1, 7);

    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 1;
    tc.init_lr = 0.1;
    tc.warmup_steps = 10;  // first-step lr = 0.01
    tc.l2_weight = 0.0;
    tc.seed = 5;
    const double lr1 = lr_schedule(1, tc);

    const std::size_t gold = batch.pairs[0].response[0];
    const double before = pool.generators[0].b2(gold);
    train(pool, batch, tc);
    const double delta = pool.generators[0].b2(gold) - before;

    // the gold logit's gradient is negative, so its bias climbs
    CHECK(delta > 0.95 * lr1);
    CHECK(delta < 1.05 * lr1);

    // and no parameter can move further than one learning rate
    GeneratorPool fresh = GeneratorPool::init(mc, 42);
    auto now = parameter_entries(pool);
    auto was = parameter_entries(fresh);
    for (std::size_t t = 0; t < now.size(); ++t)
        for (std::size_t i = 0; i < now[t].second->numel(); ++i)
            CHECK(std::fabs(now[t].second->data[i] - was[t].second->data[i]) < 1.05 * lr1);
}

TEST_CASE("a few epochs of training lower the mean loss") {
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 3);
    TokenizedBatch batch = toy_batch(mc, 16, 11);

    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 5;
    tc.init_lr = 0.005;
    tc.warmup_steps = 8;
    tc.seed = 2;

    TrainResult result = train(pool, batch, tc);
    REQUIRE(result.history.size() == 5);
    CHECK(result.history.back().mean_loss < result.history.front().mean_loss);
    CHECK(result.final_step == 5 * 4);
    for (const auto& e : result.history) CHECK(std::isfinite(e.mean_loss));
}

TEST_CASE("training is reproducible under a fixed seed") {
    ModelConfig mc = toy_model();
    TokenizedBatch batch = toy_batch(mc, 12, 9);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 3;
    tc.warmup_steps = 5;
    tc.seed = 21;

    GeneratorPool a = GeneratorPool::init(mc, 1);
    GeneratorPool b = GeneratorPool::init(mc, 1);
    TrainResult ra = train(a, batch, tc);
    TrainResult rb = train(b, batch, tc);
    CHECK(pools_identical(a, b));
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        CHECK(ra.history[i].mean_loss == rb.history[i].mean_loss);
        CHECK(ra.history[i].lr == rb.history[i].lr);
    }

    GeneratorPool c = GeneratorPool::init(mc, 1);
    TrainConfig other = tc;
    other.seed = 22;
    train(c, batch, other);
    CHECK_FALSE(pools_identical(a, c));
}

TEST_CASE("trained parameters stay float32-representable") {
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 6);
    TokenizedBatch batch = toy_batch(mc, 8, 13);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.warmup_steps = 4;
    train(pool, batch, tc);
    for_each_parameter(pool, [](const std::string&, Tensor& t) {
        for (double v : t.data)
            CHECK(v == static_cast<double>(static_cast<float>(v)));
    });
}

TEST_CASE("global norm clipping rescales exactly at the threshold") {
    ModelConfig mc = toy_model();
    GeneratorPool grads = GeneratorPool::zeros_like(GeneratorPool::init(mc, 1));
    // put all mass on two coordinates: norm = 5, so a cap of 2.5 halves them
    grads.embedding(0, 0) = 3.0;
    grads.embedding(0, 1) = 4.0;
    double norm = clip_global_norm(grads, 2.5);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(grads.embedding(0, 0) == doctest::Approx(1.5));
    CHECK(grads.embedding(0, 1) == doctest::Approx(2.0));

    double small = clip_global_norm(grads, 100.0);
    CHECK(small == doctest::Approx(2.5));
    CHECK(grads.embedding(0, 0) == doctest::Approx(1.5));  // untouched
}

TEST_CASE("history csv is headed and parseable") {
    TempDir tmp;
    save_history_csv(tmp.file("h.csv"), {{1, 2.5, 0.001}, {2, 1.25, 0.002}});
    std::string text = read_file(tmp.file("h.csv"));
    CHECK(text.rfind("epoch,mean_loss,lr\n", 0) == 0);
    CHECK(text.find("\n1,2.5") != std::string::npos);
    CHECK(text.find("\n2,1.25") != std::string::npos);
}

TEST_CASE("a poisoned parameter surfaces as a non-finite loss error") {
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 4);
    pool.generators[0].b2(0) = std::numeric_limits<double>::quiet_NaN();
    TokenizedBatch batch = toy_batch(mc, 4, 3);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 1;
    CHECK_THROWS_WITH_AS(train(pool, batch, tc), doctest::Contains("non-finite"),
                         std::runtime_error);
}

TEST_CASE("checkpoints round-trip parameters, moments and step bit-exactly") {
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 101);
    TokenizedBatch batch = toy_batch(mc, 8, 5);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.warmup_steps = 6;
    TrainState state = TrainState::fresh(pool);
    train(pool, batch, tc, &state);

    TempDir tmp;
    save_checkpoint(tmp.file("ckpt"), pool, tc, state, "somewhere/vocab.txt");
    Checkpoint loaded = load_checkpoint(tmp.file("ckpt"));

    CHECK(pools_identical(pool, loaded.pool));
    CHECK(pools_identical(state.m, loaded.state.m));
    CHECK(pools_identical(state.v, loaded.state.v));
    CHECK(loaded.state.step == state.step);
    CHECK(loaded.vocab_ref == "somewhere/vocab.txt");
    CHECK(loaded.train.warmup_steps == 6);
    CHECK(loaded.pool.config.vocab_size == mc.vocab_size);
}

TEST_CASE("checkpoint loading rejects corrupted layouts") {
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 55);
    TrainState state = TrainState::fresh(pool);
    TrainConfig tc;

    TempDir tmp;
    CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("nowhere")),
                         doctest::Contains("no checkpoint manifest"), std::runtime_error);

    SUBCASE("manifest with a wrong shape is named in the error") {
        save_checkpoint(tmp.file("ckpt"), pool, tc, state, "v.txt");
        std::ifstream in(tmp.file("ckpt") + "/manifest.json");
        nlohmann::json manifest = nlohmann::json::parse(in);
        in.close();
        for (auto& a : manifest["arrays"])
            if (a["name"] == "gen0.mlp.b1") a["shape"] = {4};
        std::ofstream out(tmp.file("ckpt") + "/manifest.json");
        out << manifest.dump(2);
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("ckpt")),
                             doctest::Contains("gen0.mlp.b1"), std::runtime_error);
    }
    SUBCASE("a missing required array is named in the error") {
        save_checkpoint(tmp.file("ckpt"), pool, tc, state, "v.txt");
        std::ifstream in(tmp.file("ckpt") + "/manifest.json");
        nlohmann::json manifest = nlohmann::json::parse(in);
        in.close();
        auto& arrays = manifest["arrays"];
        for (auto it = arrays.begin(); it != arrays.end(); ++it) {
            if ((*it)["name"] == "embedding") {
                arrays.erase(it);
                break;
            }
        }
        std::ofstream out(tmp.file("ckpt") + "/manifest.json");
        out << manifest.dump(2);
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("ckpt")),
                             doctest::Contains("missing array embedding"), std::runtime_error);
    }
    SUBCASE("a truncated blob is rejected") {
        save_checkpoint(tmp.file("ckpt"), pool, tc, state, "v.txt");
        std::ofstream out(tmp.file("ckpt") + "/embedding.bin",
                          std::ios::binary | std::ios::trunc);
        out << "xx";
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(tmp.file("ckpt")), doctest::Contains("embedding"),
                             std::runtime_error);
    }
}

TEST_CASE("resumed training continues the schedule step count") {
    ModelConfig mc = toy_model();
    GeneratorPool pool = GeneratorPool::init(mc, 9);
    TokenizedBatch batch = toy_batch(mc, 8, 17);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.epochs = 2;
    tc.warmup_steps = 100;

    TrainState state = TrainState::fresh(pool);
    TrainResult first = train(pool, batch, tc, &state);
    CHECK(state.step == 4);

    TempDir tmp;
    save_checkpoint(tmp.file("ckpt"), pool, tc, state, "v.txt");
    Checkpoint loaded = load_checkpoint(tmp.file("ckpt"));

    TrainResult second = train(loaded.pool, batch, tc, &loaded.state);
    CHECK(loaded.state.step == 8);
    // the resumed epochs keep walking up the warmup ramp
    CHECK(second.history.front().lr > first.history.back().lr);
    CHECK(second.history.back().lr == doctest::Approx(lr_schedule(8, tc)));
}

}  // TEST_SUITE
