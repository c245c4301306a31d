#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "think/config.hpp"
#include "think/corpus.hpp"
#include "think/inspect.hpp"
#include "think/metrics.hpp"
#include "think/model.hpp"
#include "think/probe.hpp"
#include "think/trainer.hpp"

namespace fs = std::filesystem;
using namespace think;

namespace {

struct CommonOpts {
    std::string config_file;
    std::string profile = "desk";
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_file, "flat key=value settings file");
    cmd->add_option("--profile", opts.profile, "hyperparameter profile: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--seed", opts.seed, "RNG seed override");
    cmd->add_option("--out", opts.out, "output file or directory");
}

ExperimentConfig resolve_config(const CommonOpts& opts) {
    ExperimentConfig cfg = profile_by_name(opts.profile);
    if (!opts.config_file.empty()) load_config_file(cfg, opts.config_file);
    if (opts.seed) cfg.train.seed = *opts.seed;
    if (!opts.out.empty()) cfg.out_dir = opts.out;
    return cfg;
}

std::string out_path(const ExperimentConfig& cfg, const std::string& name) {
    if (cfg.out_dir.empty()) return name;
    fs::create_directories(cfg.out_dir);
    return (fs::path(cfg.out_dir) / name).string();
}

/// Pair TSV, but tolerant of missing responses: a line without a tab is a
/// bare context (used by generate, whose inputs need no gold column).
std::vector<std::pair<std::string, std::string>> load_context_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open input file: " + path);
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            out.emplace_back(line, "");
        else
            out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    if (out.empty()) throw std::runtime_error("empty corpus: " + path);
    return out;
}

Vocabulary load_vocab_for_checkpoint(const Checkpoint& ckpt, const std::string& override_path) {
    const std::string path = override_path.empty() ? ckpt.vocab_ref : override_path;
    if (path.empty())
        throw std::runtime_error("checkpoint records no vocabulary path; pass --vocab");
    Vocabulary vocab = Vocabulary::load(path);
    if (vocab.size() != ckpt.pool.config.vocab_size)
        throw std::runtime_error("vocabulary size " + std::to_string(vocab.size()) +
                                 " does not match checkpoint vocab_size " +
                                 std::to_string(ckpt.pool.config.vocab_size));
    return vocab;
}

int cmd_prepare(const CommonOpts& common, const std::string& corpus_flag) {
    ExperimentConfig cfg = resolve_config(common);
    if (!corpus_flag.empty()) cfg.corpus = corpus_flag;
    if (cfg.corpus.empty()) throw std::runtime_error("prepare needs --corpus");

    auto pairs = load_pair_file(cfg.corpus);
    Vocabulary vocab = build_vocabulary(pairs, cfg.model.vocab_size);
    const std::string vocab_path = out_path(cfg, "vocab.txt");
    vocab.save(vocab_path);
    std::cout << "wrote " << vocab_path << " (" << vocab.size() << " tokens from " << pairs.size()
              << " pairs)\n";

    std::vector<std::vector<std::string>> responses;
    responses.reserve(pairs.size());
    for (const auto& p : pairs) responses.push_back(p.response);
    for (std::size_t n = 3; n <= 5; ++n) {
        NgramVocabulary grams = build_ngram_vocabulary(responses, n);
        const std::string path = out_path(cfg, "ngrams." + std::to_string(n) + ".txt");
        grams.save(path);
        std::cout << "wrote " << path << " (" << grams.size() << " " << n << "-grams)\n";
    }
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& corpus_flag,
              const std::string& vocab_flag, const std::string& checkpoint_flag, bool resume) {
    ExperimentConfig cfg = resolve_config(common);
    if (!corpus_flag.empty()) cfg.corpus = corpus_flag;
    if (!vocab_flag.empty()) cfg.vocab = vocab_flag;
    if (!checkpoint_flag.empty()) cfg.checkpoint_dir = checkpoint_flag;
    if (cfg.checkpoint_dir.empty() && !cfg.out_dir.empty()) cfg.checkpoint_dir = cfg.out_dir;
    if (cfg.corpus.empty() || cfg.vocab.empty() || cfg.checkpoint_dir.empty())
        throw std::runtime_error("train needs --corpus, --vocab and --checkpoint-dir (or --out)");

    Vocabulary vocab = Vocabulary::load(cfg.vocab);
    auto pairs = load_pair_file(cfg.corpus);
    TokenizedBatch batch = encode_pairs(pairs, vocab, cfg.model.c_len, cfg.model.r_len);

    GeneratorPool pool;
    TrainState state;
    if (resume) {
        Checkpoint ckpt = load_checkpoint(cfg.checkpoint_dir);
        if (ckpt.pool.config.vocab_size != vocab.size())
            throw std::runtime_error("vocabulary size " + std::to_string(vocab.size()) +
                                     " does not match checkpoint vocab_size " +
                                     std::to_string(ckpt.pool.config.vocab_size));
        pool = std::move(ckpt.pool);
        state = std::move(ckpt.state);
        std::cout << "resuming from step " << state.step << "\n";
    } else {
        if (cfg.model.vocab_size != vocab.size()) {
            std::cout << "note: using vocabulary size " << vocab.size()
                      << " (config said " << cfg.model.vocab_size << ")\n";
            cfg.model.vocab_size = vocab.size();
        }
        pool = GeneratorPool::init(cfg.model, cfg.train.seed);
        state = TrainState::fresh(pool);
    }

    TrainResult result = train(pool, batch, cfg.train, &state);
    for (const auto& e : result.history)
        std::printf("epoch %zu: mean loss %.6f, lr %.6g\n", e.epoch, e.mean_loss, e.lr);

    save_checkpoint(cfg.checkpoint_dir, pool, cfg.train, state, cfg.vocab);
    save_history_csv((fs::path(cfg.checkpoint_dir) / "history.csv").string(), result.history);
    std::cout << "checkpoint saved to " << cfg.checkpoint_dir << " (step " << state.step << ")\n";
    return 0;
}

int cmd_generate(const CommonOpts& common, const std::string& checkpoint_dir,
                 const std::string& vocab_flag, const std::string& input_path) {
    ExperimentConfig cfg = resolve_config(common);
    Checkpoint ckpt = load_checkpoint(checkpoint_dir);
    Vocabulary vocab = load_vocab_for_checkpoint(ckpt, vocab_flag);

    auto lines = load_context_lines(input_path);
    std::vector<std::pair<std::string, std::string>> generated;
    generated.reserve(lines.size());
    for (const auto& [context, gold] : lines) {
        (void)gold;
        generated.emplace_back(context, generate_text(ckpt.pool, vocab, context));
    }

    const std::string path = out_path(cfg, "generated.tsv");
    save_pair_file(path, generated);
    std::cout << "wrote " << path << " (" << generated.size() << " responses)\n";
    return 0;
}

int cmd_evaluate(const CommonOpts& common, const std::string& generated_path,
                 const std::string& reference_path, const std::string& ngrams_dir,
                 const std::string& embeddings_flag, const std::string& model_name) {
    ExperimentConfig cfg = resolve_config(common);
    if (!embeddings_flag.empty()) cfg.embeddings = embeddings_flag;

    auto generated = load_pair_file(generated_path);
    auto reference = load_pair_file(reference_path);
    if (generated.size() != reference.size())
        throw std::runtime_error("generated and reference files differ in length (" +
                                 std::to_string(generated.size()) + " vs " +
                                 std::to_string(reference.size()) + ")");

    ResponseSet items;
    items.reserve(generated.size());
    std::vector<std::vector<std::string>> responses, refs;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        ResponseItem item;
        item.context = reference[i].context;
        item.generated = generated[i].response;
        item.reference = reference[i].response;
        responses.push_back(item.generated);
        refs.push_back(item.reference);
        items.push_back(std::move(item));
    }

    MetricReport report;
    report.model = model_name;
    report.items = items.size();
    for (std::size_t n = 3; n <= 5; ++n) {
        NgramVocabulary grams =
            ngrams_dir.empty()
                ? build_ngram_vocabulary(refs, n)
                : NgramVocabulary::load(
                      (fs::path(ngrams_dir) / ("ngrams." + std::to_string(n) + ".txt")).string(),
                      n);
        report.distinct[n] = distinct_n(responses, n);
        report.q_phrase[n] = q_phrase_n(responses, grams);
    }
    report.avg_bleu = bleu_avg(items);
    if (!cfg.embeddings.empty()) {
        EmbeddingTable table = EmbeddingTable::load(cfg.embeddings);
        report.avg_embed = embedding_avg(items, table);
        report.coherence = coherence_avg(items, table);
    }

    const std::string path = out_path(cfg, "report.json");
    save_report(path, report);
    std::cout << "model " << report.model << " over " << report.items << " items\n";
    for (std::size_t n = 3; n <= 5; ++n)
        std::printf("  distinct-%zu %.6f   q_phrase-%zu %.6f\n", n, report.distinct[n], n,
                    report.q_phrase[n]);
    std::printf("  avg_B %.6f   avg_E %.6f   coherence %.6f\n", report.avg_bleu, report.avg_embed,
                report.coherence);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_compare(const CommonOpts& common, const std::vector<std::string>& report_paths) {
    ExperimentConfig cfg = resolve_config(common);

    std::vector<ModelScores> scores;
    scores.reserve(report_paths.size());
    for (const auto& path : report_paths) {
        MetricReport r = load_report(path);
        scores.push_back({r.model, r.avg_bleu, r.avg_embed, r.coherence});
    }
    std::vector<MixCohRow> rows = mix_coh(scores);

    std::printf("%-16s %8s %8s %8s %9s %9s %9s %9s\n", "model", "avg(B)", "avg(E)", "coher",
                "B_score", "E_score", "C_score", "mix_coh");
    nlohmann::json jrows = nlohmann::json::array();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& s = scores[i];
        const auto& r = rows[i];
        std::printf("%-16s %8.4f %8.4f %8.4f %9.5f %9.5f %9.5f %9.5f\n", r.id.c_str(), s.avg_bleu,
                    s.avg_embed, s.coherence, r.b_score, r.e_score, r.c_score, r.mix_coh);
        jrows.push_back({{"model", r.id},
                         {"avg_B", s.avg_bleu},
                         {"avg_E", s.avg_embed},
                         {"coherence", s.coherence},
                         {"B_score", r.b_score},
                         {"E_score", r.e_score},
                         {"C_score", r.c_score},
                         {"mix_coh", r.mix_coh}});
    }

    if (!cfg.out_dir.empty()) {
        const std::string path = out_path(cfg, "compare.json");
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write comparison: " + path);
        out << nlohmann::json{{"models", jrows}}.dump(2) << "\n";
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int cmd_probe_classify(const CommonOpts& common, const std::string& data_path, bool shuffle_labels,
                       std::optional<std::size_t> epochs) {
    ExperimentConfig cfg = resolve_config(common);

    ProbeDataset data = ProbeDataset::load(data_path);
    ProbeConfig pc;
    if (common.seed) pc.seed = *common.seed;
    pc.shuffle_labels = shuffle_labels;
    if (epochs) pc.epochs = *epochs;

    ProbeReport report = train_probe(data, pc);
    std::cout << format_probe_report(report);
    if (!cfg.out_dir.empty()) {
        const std::string path = out_path(cfg, "probe.json");
        save_probe_report(path, report);
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int cmd_inspect_deform(const CommonOpts& common, const std::string& checkpoint_dir,
                       const std::string& vocab_flag, const std::string& sentence) {
    ExperimentConfig cfg = resolve_config(common);
    Checkpoint ckpt = load_checkpoint(checkpoint_dir);
    Vocabulary vocab = load_vocab_for_checkpoint(ckpt, vocab_flag);

    InspectResult r = inspect_deform(ckpt.pool, vocab, sentence);
    if (r.truncated)
        std::cerr << "warning: sentence longer than c_len=" << ckpt.pool.config.c_len
                  << "; extra tokens were dropped\n";
    std::cout << format_trace(r);

    const std::string trace_path = out_path(cfg, "trace.json");
    save_trace_json(trace_path, r);
    const std::string svg_path = out_path(cfg, "scatter.svg");
    write_scatter_svg(svg_path, r, common.seed.value_or(1));
    std::cout << "wrote " << trace_path << " and " << svg_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"THINK-style dialogue model: training, generation, evaluation, inspection"};
    app.require_subcommand(1);

    CommonOpts prep_common;
    std::string prep_corpus;
    auto* prep = app.add_subcommand("prepare", "build vocabulary and n-gram files from a corpus");
    add_common(prep, prep_common);
    prep->add_option("--corpus", prep_corpus, "pair TSV file");

    CommonOpts train_common;
    std::string train_corpus, train_vocab, train_ckpt;
    bool train_resume = false;
    auto* tr = app.add_subcommand("train", "train the generator pool");
    add_common(tr, train_common);
    tr->add_option("--corpus", train_corpus, "pair TSV file");
    tr->add_option("--vocab", train_vocab, "vocabulary file from prepare");
    tr->add_option("--checkpoint-dir", train_ckpt, "where to write the checkpoint");
    tr->add_flag("--resume", train_resume, "continue from the checkpoint in --checkpoint-dir");

    CommonOpts gen_common;
    std::string gen_ckpt, gen_vocab, gen_input;
    auto* gen = app.add_subcommand("generate", "greedy responses for a context file");
    add_common(gen, gen_common);
    gen->add_option("--checkpoint", gen_ckpt, "checkpoint directory")->required();
    gen->add_option("--vocab", gen_vocab, "vocabulary override (default: recorded in checkpoint)");
    gen->add_option("--input", gen_input, "contexts, one per line (tab + response allowed)")
        ->required();

    CommonOpts eval_common;
    std::string eval_gen, eval_ref, eval_ngrams, eval_emb, eval_model = "model";
    auto* ev = app.add_subcommand("evaluate", "score generated responses against references");
    add_common(ev, eval_common);
    ev->add_option("--generated", eval_gen, "context<TAB>generated file")->required();
    ev->add_option("--reference", eval_ref, "context<TAB>reference file")->required();
    ev->add_option("--ngrams-dir", eval_ngrams,
                   "directory with ngrams.{3,4,5}.txt (default: built from references)");
    ev->add_option("--embeddings", eval_emb, "word vector file for the E and coherence metrics");
    ev->add_option("--model", eval_model, "model name recorded in the report");

    CommonOpts cmp_common;
    std::vector<std::string> cmp_reports;
    auto* cmp = app.add_subcommand("compare", "normalize metric reports into a mix_coh table");
    add_common(cmp, cmp_common);
    cmp->add_option("reports", cmp_reports, "metric report JSON files")->required();

    CommonOpts probe_common;
    std::string probe_data;
    bool probe_shuffle = false;
    std::optional<std::size_t> probe_epochs;
    auto* pb = app.add_subcommand("probe-classify",
                                  "train the extractor probe on labeled sentences");
    add_common(pb, probe_common);
    pb->add_option("--data", probe_data, "label<TAB>sentence file")->required();
    pb->add_flag("--shuffle-labels", probe_shuffle, "destroy the label correlation first");
    pb->add_option("--epochs", probe_epochs, "training epoch cap");

    CommonOpts ins_common;
    std::string ins_ckpt, ins_vocab, ins_sentence;
    auto* ins = app.add_subcommand("inspect-deform", "dump row selections and a scatter plot");
    add_common(ins, ins_common);
    ins->add_option("--checkpoint", ins_ckpt, "checkpoint directory")->required();
    ins->add_option("--vocab", ins_vocab, "vocabulary override");
    ins->add_option("--sentence", ins_sentence, "input sentence")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (prep->parsed()) return cmd_prepare(prep_common, prep_corpus);
        if (tr->parsed())
            return cmd_train(train_common, train_corpus, train_vocab, train_ckpt, train_resume);
        if (gen->parsed()) return cmd_generate(gen_common, gen_ckpt, gen_vocab, gen_input);
        if (ev->parsed())
            return cmd_evaluate(eval_common, eval_gen, eval_ref, eval_ngrams, eval_emb,
                                eval_model);
        if (cmp->parsed()) return cmd_compare(cmp_common, cmp_reports);
        if (pb->parsed())
            return cmd_probe_classify(probe_common, probe_data, probe_shuffle, probe_epochs);
        if (ins->parsed()) return cmd_inspect_deform(ins_common, ins_ckpt, ins_vocab, ins_sentence);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
