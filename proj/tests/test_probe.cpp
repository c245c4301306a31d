#include <algorithm>
#include <set>

#include "doctest.h"
#include "temp_dir.hpp"
#include "think/probe.hpp"

using namespace think;

TEST_SUITE("probe") {

TEST_CASE("confusion statistics match a worked two-class example") {
    // gold rows, predicted columns
    ConfusionMatrix confusion = {{5, 1}, {2, 4}};
    auto stats = stats_from_confusion(confusion, {"pos", "neg"});
    REQUIRE(stats.size() == 2);

    CHECK(stats[0].label == "pos");
    CHECK(stats[0].support == 6);
    CHECK(stats[0].precision == doctest::Approx(5.0 / 7.0));
    CHECK(stats[0].recall == doctest::Approx(5.0 / 6.0));
    CHECK(stats[0].f1 == doctest::Approx(2.0 * (5.0 / 7.0) * (5.0 / 6.0) /
                                         ((5.0 / 7.0) + (5.0 / 6.0))));
    CHECK(stats[0].accuracy == doctest::Approx(9.0 / 12.0));

    CHECK(stats[1].support == 6);
    CHECK(stats[1].precision == doctest::Approx(4.0 / 5.0));
    CHECK(stats[1].recall == doctest::Approx(4.0 / 6.0));
    CHECK(stats[1].accuracy == doctest::Approx(9.0 / 12.0));

    CHECK(accuracy_from_confusion(confusion) == doctest::Approx(0.75));
}

TEST_CASE("degenerate confusion cells do not divide by zero") {
    // nothing predicted as class 1, nothing gold in class 1
    ConfusionMatrix confusion = {{3, 0}, {0, 0}};
    auto stats = stats_from_confusion(confusion, {"a", "b"});
    CHECK(stats[1].support == 0);
    CHECK(stats[1].precision == 0.0);
    CHECK(stats[1].recall == 0.0);
    CHECK(stats[1].f1 == 0.0);
    CHECK(stats[1].accuracy == doctest::Approx(1.0));
    CHECK(accuracy_from_confusion(confusion) == doctest::Approx(1.0));
}

TEST_CASE("dataset validation catches unusable input") {
    ProbeDataset single = ProbeDataset::from_items({{{"hello"}, "only"}});
    CHECK_THROWS_AS(single.validate(), std::invalid_argument);

    ProbeDataset hollow =
        ProbeDataset::from_items({{{}, "x"}, {{"word"}, "y"}});
    CHECK_THROWS_AS(hollow.validate(), std::invalid_argument);

    ProbeDataset fine =
        ProbeDataset::from_items({{{"word"}, "x"}, {{"word"}, "y"}});
    CHECK_NOTHROW(fine.validate());
    CHECK(fine.labels == std::vector<std::string>{"x", "y"});
    CHECK(fine.label_index("y") == 1);
    CHECK_THROWS_AS(fine.label_index("z"), std::invalid_argument);
}

TEST_CASE("probe files round trip and malformed lines carry line numbers") {
    TempDir tmp;
    std::string path =
        tmp.write("probe.tsv", "travel\twhere should we fly\nfood\tpass the salt\n");
    ProbeDataset data = ProbeDataset::load(path);
    REQUIRE(data.items.size() == 2);
    CHECK(data.items[0].label == "travel");
    CHECK(data.items[1].tokens == std::vector<std::string>{"pass", "the", "salt"});
    CHECK(data.labels == std::vector<std::string>{"food", "travel"});

    std::string bad = tmp.write("bad.tsv", "travel\tok line\nno tab here\n");
    CHECK_THROWS_WITH_AS(ProbeDataset::load(bad), doctest::Contains(":2"),
                         std::runtime_error);
    std::string blank = tmp.write("blank.tsv", "travel\t\n");
    CHECK_THROWS_AS(ProbeDataset::load(blank), std::runtime_error);
}

TEST_CASE("the synthetic keyword dataset has the advertised shape") {
    ProbeDataset data = make_keyword_probe_dataset(3, 5, 9, 42);
    CHECK(data.items.size() == 15);
    CHECK(data.labels.size() == 3);
    std::set<std::string> seen_labels;
    for (const auto& ex : data.items) {
        CHECK(ex.tokens.size() == 9);
        seen_labels.insert(ex.label);
        // exactly one keyword token, and it names the topic
        std::size_t keywords = 0;
        for (const auto& t : ex.tokens)
            if (t.rfind("keyword", 0) == 0) {
                ++keywords;
                CHECK("topic" + t.substr(7) == ex.label);
            }
        CHECK(keywords == 1);
    }
    CHECK(seen_labels.size() == 3);
    CHECK_NOTHROW(data.validate());

    // seeded determinism and seed sensitivity
    ProbeDataset again = make_keyword_probe_dataset(3, 5, 9, 42);
    REQUIRE(again.items.size() == data.items.size());
    bool same = true;
    for (std::size_t i = 0; i < data.items.size(); ++i)
        same = same && data.items[i].tokens == again.items[i].tokens;
    CHECK(same);
    ProbeDataset other = make_keyword_probe_dataset(3, 5, 9, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < data.items.size(); ++i)
        any_diff = any_diff || data.items[i].tokens != other.items[i].tokens;
    CHECK(any_diff);
}

TEST_CASE("a separable dataset trains to high held-out accuracy") {
    ProbeDataset data = make_keyword_probe_dataset(3, 100, 8, 5);
    ProbeConfig cfg;
    cfg.max_len = 8;
    cfg.embed_dim = 16;
    cfg.epochs = 30;
    cfg.seed = 11;
    ProbeReport report = train_probe(data, cfg);

    CHECK(report.labels.size() == 3);
    CHECK(report.train_size + report.test_size == data.items.size());
    CHECK(report.test_size == 75);  // a quarter of 300
    CHECK(report.accuracy >= 0.9);
    CHECK(report.per_class.size() == 3);

    // confusion row sums must equal per-class support
    for (std::size_t g = 0; g < 3; ++g) {
        std::size_t row = 0;
        for (std::size_t p = 0; p < 3; ++p) row += report.confusion[g][p];
        CHECK(row == report.per_class[g].support);
    }

    // same seed reproduces the exact confusion matrix
    ProbeReport again = train_probe(data, cfg);
    CHECK(again.confusion == report.confusion);
    CHECK(again.final_train_loss == report.final_train_loss);
}

TEST_CASE("label shuffling collapses accuracy to chance") {
    ProbeDataset data = make_keyword_probe_dataset(4, 40, 8, 5);
    ProbeConfig cfg;
    cfg.max_len = 8;
    cfg.embed_dim = 16;
    cfg.epochs = 10;
    cfg.seed = 11;
    cfg.shuffle_labels = true;
    ProbeReport report = train_probe(data, cfg);
    CHECK(report.accuracy >= 0.05);
    CHECK(report.accuracy <= 0.45);
}

TEST_CASE("probe configs reject nonsense") {
    ProbeConfig cfg;
    cfg.test_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ProbeConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ProbeConfig{};
    cfg.max_len = 2;  // below the kernel width
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("report formatting and JSON output carry the headline numbers") {
    ProbeDataset data = make_keyword_probe_dataset(2, 30, 7, 9);
    ProbeConfig cfg;
    cfg.max_len = 7;
    cfg.embed_dim = 12;
    cfg.epochs = 25;
    ProbeReport report = train_probe(data, cfg);

    std::string text = format_probe_report(report);
    CHECK(text.find("accuracy") != std::string::npos);
    CHECK(text.find("topic0") != std::string::npos);
    CHECK(text.find("topic1") != std::string::npos);

    TempDir tmp;
    save_probe_report(tmp.file("probe.json"), report);
    std::string blob = read_file(tmp.file("probe.json"));
    CHECK(blob.find("\"accuracy\"") != std::string::npos);
    CHECK(blob.find("\"confusion\"") != std::string::npos);
    CHECK(blob.find("topic1") != std::string::npos);
}

}  // TEST_SUITE
