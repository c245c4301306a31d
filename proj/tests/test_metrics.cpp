#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "temp_dir.hpp"
#include "think/metrics.hpp"

using namespace think;

namespace {

using Responses = std::vector<std::vector<std::string>>;

EmbeddingTable toy_table() {
    return EmbeddingTable::from_entries({
        {"a", {1.0, 0.0}},
        {"b", {0.0, 1.0}},
        {"c", {1.0, 1.0}},
        {"d", {2.0, 0.0}},
        {"e", {-3.0, 0.5}},
    });
}

/// Brute-force distinct / q_phrase using plain maps, no shared code.
std::pair<double, double> brute_force(const Responses& responses, std::size_t n,
                                      const std::set<std::string>& vocab) {
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& r : responses) {
        if (r.size() < n) continue;
        for (std::size_t i = 0; i + n <= r.size(); ++i) {
            std::string g = r[i];
            for (std::size_t j = 1; j < n; ++j) g += " " + r[i + j];
            ++counts[g];
            ++total;
        }
    }
    if (total == 0) return {0.0, 0.0};
    std::size_t effective = 0;
    for (const auto& [g, c] : counts)
        if (vocab.count(g)) ++effective;
    return {static_cast<double>(counts.size()) / static_cast<double>(total),
            static_cast<double>(effective) / static_cast<double>(total)};
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("the published five-response example scores exactly") {
    Responses responses = {
        {"i", "am", "fine"}, {"i", "are", "fine"}, {"are", "fine", "i"},
        {"i", "are", "you"}, {"are", "are", "are"},
    };
    NgramVocabulary vocab = build_ngram_vocabulary({{"i", "am", "fine"}}, 3);

    CHECK(distinct_n(responses, 3) == 1.0);
    CHECK(q_phrase_n(responses, vocab) == 0.2);
}

TEST_CASE("distinct handles repetition and degenerate inputs") {
    CHECK(distinct_n({{"a", "a", "a", "a"}}, 3) == 0.5);  // two occurrences, one unique
    CHECK(distinct_n({{"a", "b"}}, 3) == 0.0);            // nothing long enough
    CHECK(distinct_n({}, 2) == 0.0);
    CHECK(distinct_n({{"x", "y", "z"}}, 1) == 1.0);
    CHECK_THROWS_AS(distinct_n({{"a"}}, 0), std::invalid_argument);
}

TEST_CASE("a six-token drone gives q_phrase one quarter") {
    // "a a a a a a" has four sliding trigram occurrences of one unique gram
    Responses responses = {{"a", "a", "a", "a", "a", "a"}};
    NgramVocabulary vocab = build_ngram_vocabulary({{"a", "a", "a"}}, 3);
    CHECK(distinct_n(responses, 3) == 0.25);
    CHECK(q_phrase_n(responses, vocab) == 0.25);
}

TEST_CASE("distinct and q_phrase match brute force and respect ordering") {
    std::mt19937_64 rng(1312);
    const std::vector<std::string> alphabet = {"u", "v", "w"};
    for (int trial = 0; trial < 200; ++trial) {
        Responses responses(rng() % 8);
        for (auto& r : responses) {
            r.resize(rng() % 7);
            for (auto& t : r) t = alphabet[rng() % alphabet.size()];
        }
        std::set<std::string> vocab_set;
        const std::size_t n = 1 + rng() % 4;
        NgramVocabulary vocab(n);
        for (int g = 0; g < 4; ++g) {
            std::vector<std::string> ref(n);
            for (auto& t : ref) t = alphabet[rng() % alphabet.size()];
            vocab.add_reference(ref);
            std::string joined = ref[0];
            for (std::size_t j = 1; j < n; ++j) joined += " " + ref[j];
            vocab_set.insert(joined);
        }

        auto [want_distinct, want_q] = brute_force(responses, n, vocab_set);
        double got_distinct = distinct_n(responses, n);
        double got_q = q_phrase_n(responses, vocab);
        CHECK(got_distinct == want_distinct);
        CHECK(got_q == want_q);
        CHECK(got_q <= got_distinct);

        Responses shuffled = responses;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(distinct_n(shuffled, n) == got_distinct);
        CHECK(q_phrase_n(shuffled, vocab) == got_q);
    }
}

TEST_CASE("sentence BLEU has hand-checkable corners") {
    using V = std::vector<std::string>;
    SUBCASE("identity scores 1 at any order") {
        CHECK(sentence_bleu({"to", "be", "or", "not"}, {"to", "be", "or", "not"}, 3) ==
              doctest::Approx(1.0));
    }
    SUBCASE("unigram and bigram precision with no brevity penalty") {
        V hyp = {"the", "cat", "sat"}, ref = {"the", "cat"};
        CHECK(sentence_bleu(hyp, ref, 1) == doctest::Approx(2.0 / 3.0));
        CHECK(sentence_bleu(hyp, ref, 2) == doctest::Approx(std::sqrt((2.0 / 3.0) * 0.5)));
    }
    SUBCASE("brevity penalty kicks in for short hypotheses") {
        V hyp = {"the", "cat"}, ref = {"the", "cat", "sat"};
        CHECK(sentence_bleu(hyp, ref, 1) == doctest::Approx(std::exp(1.0 - 1.5)));
    }
    SUBCASE("clipping limits repeated words") {
        V hyp = {"the", "the", "the"}, ref = {"the", "mat"};
        CHECK(sentence_bleu(hyp, ref, 1) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("zero overlap bottoms out at the smoothing floor") {
        V hyp = {"x", "y", "z"}, ref = {"q", "r", "s"};
        CHECK(sentence_bleu(hyp, ref, 3) == doctest::Approx(1e-9).epsilon(1e-3));
    }
    SUBCASE("orders beyond both lengths are neutral") {
        // both sides lack trigrams: order 3 contributes log 1
        V hyp = {"a", "b"}, ref = {"x", "y"};
        double expect = std::exp((std::log(1e-9) + std::log(1e-9) + 0.0) / 3.0);
        CHECK(sentence_bleu(hyp, ref, 3) == doctest::Approx(expect));
    }
    SUBCASE("an empty hypothesis scores 0") {
        CHECK(sentence_bleu({}, {"a"}, 2) == 0.0);
    }
}

TEST_CASE("bleu_avg averages orders one through three per item") {
    ResponseSet items(1);
    items[0].generated = {"the", "cat", "sat"};
    items[0].reference = {"the", "cat", "mat"};
    // p1 = 2/3; p2 = 1/2; p3 floors; lengths match so no penalty
    double b1 = 2.0 / 3.0;
    double b2 = std::sqrt((2.0 / 3.0) * 0.5);
    double b3 = std::cbrt((2.0 / 3.0) * 0.5 * 1e-9);
    CHECK(bleu_avg(items) == doctest::Approx((b1 + b2 + b3) / 3.0));
    CHECK(bleu_avg({}) == 0.0);
}

TEST_CASE("embedding metrics agree with two-dimensional pencil work") {
    EmbeddingTable table = toy_table();

    SUBCASE("average: mean of a and b points along c") {
        CHECK(embedding_average({"a", "b"}, {"c"}, table) == doctest::Approx(1.0));
    }
    SUBCASE("greedy is symmetric and matches the hand value") {
        // both directions give 1/sqrt(2) for {a, d} against {c}
        CHECK(embedding_greedy({"a", "d"}, {"c"}, table) ==
              doctest::Approx(1.0 / std::sqrt(2.0)));
    }
    SUBCASE("extrema keeps the dominant magnitude with its sign") {
        std::vector<double> ex = extrema_vector({"a", "e"}, table);
        REQUIRE(ex.size() == 2);
        CHECK(ex[0] == doctest::Approx(-3.0));
        CHECK(ex[1] == doctest::Approx(0.5));
        CHECK(embedding_extrema({"a", "b"}, {"c"}, table) == doctest::Approx(1.0));
    }
    SUBCASE("out-of-vocabulary tokens embed to zero and cosine guards zeros") {
        CHECK(cosine({0.0, 0.0}, {1.0, 2.0}) == 0.0);
        CHECK(embedding_average({"zzz"}, {"c"}, table) == 0.0);
        std::vector<double> mv = mean_vector({"zzz", "a"}, table);
        CHECK(mv[0] == doctest::Approx(0.5));
        CHECK(mv[1] == doctest::Approx(0.0));
    }
    SUBCASE("coherence is the context/generated mean cosine") {
        // mean("a","b") = (.5,.5) vs mean("c") = (1,1) -> cosine 1
        CHECK(coherence({"a", "b"}, {"c"}, table) == doctest::Approx(1.0));
        CHECK(coherence({"a"}, {"b"}, table) == doctest::Approx(0.0));
    }
}

TEST_CASE("table-driven mix_coh reproduces the published comparison") {
    std::vector<ModelScores> table = {
        {"Seq2Seq", 0.2267, 0.4744, 0.4885}, {"CVAE", 0.2536, 0.4734, 0.5116},
        {"TransFM", 0.2532, 0.4533, 0.4855}, {"CMHAM", 0.2684, 0.4560, 0.4917},
        {"THINK", 0.2680, 0.4757, 0.5117},
    };
    std::vector<MixCohRow> rows = mix_coh(table);
    const std::map<std::string, double> printed = {{"Seq2Seq", 0.5781},
                                                   {"CVAE", 0.6082},
                                                   {"TransFM", 0.5888},
                                                   {"CMHAM", 0.6044},
                                                   {"THINK", 0.6205}};
    for (const auto& row : rows)
        CHECK(std::fabs(row.mix_coh - printed.at(row.id)) < 0.002);

    double b_sum = 0.0, mix_sum = 0.0;
    for (const auto& row : rows) {
        b_sum += row.b_score;
        mix_sum += row.mix_coh;
    }
    CHECK(b_sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(mix_sum == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("mix_coh trivial cases") {
    SUBCASE("a single model takes the whole pot") {
        auto rows = mix_coh({{"only", 0.4, 0.2, 0.9}});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].mix_coh == doctest::Approx(3.0));
    }
    SUBCASE("an equal pair splits every component") {
        auto rows = mix_coh({{"x", 0.3, 0.5, 0.2}, {"y", 0.3, 0.5, 0.2}});
        CHECK(rows[0].mix_coh == doctest::Approx(1.5));
        CHECK(rows[1].mix_coh == doctest::Approx(1.5));
    }
    SUBCASE("an all-zero component contributes nothing") {
        auto rows = mix_coh({{"x", 0.0, 0.5, 0.5}, {"y", 0.0, 0.5, 0.5}});
        CHECK(rows[0].b_score == 0.0);
        CHECK(rows[0].mix_coh == doctest::Approx(1.0));
    }
    SUBCASE("no models is an error") {
        CHECK_THROWS_AS(mix_coh({}), std::invalid_argument);
    }
}

TEST_CASE("share sums are exact over random tables") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<ModelScores> table(2 + rng() % 5);
        for (std::size_t i = 0; i < table.size(); ++i)
            table[i] = {"m" + std::to_string(i), u(rng), u(rng), u(rng)};
        auto rows = mix_coh(table);
        double b = 0, e = 0, c = 0, mix = 0;
        for (const auto& r : rows) {
            b += r.b_score;
            e += r.e_score;
            c += r.c_score;
            mix += r.mix_coh;
        }
        CHECK(std::fabs(b - 1.0) < 1e-9);
        CHECK(std::fabs(e - 1.0) < 1e-9);
        CHECK(std::fabs(c - 1.0) < 1e-9);
        CHECK(std::fabs(mix - 3.0) < 1e-9);
    }
}

TEST_CASE("embedding table IO validates its input") {
    TempDir tmp;
    std::string good = tmp.write("vec.txt", "a 1 0\nb 0 1\n");
    EmbeddingTable table = EmbeddingTable::load(good);
    CHECK(table.dim() == 2);
    CHECK(table.lookup("a") == std::vector<double>{1.0, 0.0});
    CHECK(table.lookup("missing") == std::vector<double>{0.0, 0.0});

    std::string ragged = tmp.write("ragged.txt", "a 1 0\nb 0\n");
    CHECK_THROWS_WITH_AS(EmbeddingTable::load(ragged), doctest::Contains(":2"),
                         std::runtime_error);
    std::string garbage = tmp.write("garbage.txt", "a one two\n");
    CHECK_THROWS_AS(EmbeddingTable::load(garbage), std::runtime_error);
}

TEST_CASE("metric reports survive a disk round trip and reject foreign files") {
    MetricReport report;
    report.model = "demo";
    report.items = 7;
    report.distinct = {{3, 0.5}, {4, 0.25}, {5, 0.125}};
    report.q_phrase = {{3, 0.4}, {4, 0.2}, {5, 0.1}};
    report.avg_bleu = 0.37;
    report.avg_embed = 0.42;
    report.coherence = 0.61;

    TempDir tmp;
    save_report(tmp.file("r.json"), report);
    MetricReport loaded = load_report(tmp.file("r.json"));
    CHECK(loaded.model == "demo");
    CHECK(loaded.items == 7);
    CHECK(loaded.distinct.at(4) == 0.25);
    CHECK(loaded.q_phrase.at(5) == 0.1);
    CHECK(loaded.avg_bleu == 0.37);
    CHECK(loaded.coherence == 0.61);

    std::string foreign = tmp.write("x.json", "{\"hello\": 1}\n");
    CHECK_THROWS_AS(load_report(foreign), std::exception);
}

TEST_CASE("set-level embedding scores hit their perfect fixed point") {
    EmbeddingTable table = toy_table();
    ResponseSet items(2);
    items[0] = {{"a", "b"}, {"c", "d"}, {"c", "d"}};
    items[1] = {{"b"}, {"a"}, {"a"}};
    CHECK(embedding_avg(items, table) == doctest::Approx(1.0));
    CHECK(coherence_avg(items, table) ==
          doctest::Approx(0.5 * (coherence({"a", "b"}, {"c", "d"}, table) +
                                 coherence({"b"}, {"a"}, table))));
}

}  // TEST_SUITE
