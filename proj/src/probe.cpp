#include "think/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace think {

namespace {

std::vector<std::string> sorted_unique_labels(const std::vector<ProbeExample>& items) {
    std::set<std::string> seen;
    for (const auto& it : items) seen.insert(it.label);
    return {seen.begin(), seen.end()};
}

}  // namespace

ProbeDataset ProbeDataset::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open probe dataset: " + path);

    std::vector<ProbeExample> items;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected label<TAB>sentence");
        ProbeExample ex;
        ex.label = line.substr(0, tab);
        ex.tokens = tokenize(line.substr(tab + 1));
        if (ex.label.empty() || ex.tokens.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": empty label or sentence");
        items.push_back(std::move(ex));
    }
    return from_items(std::move(items));
}

ProbeDataset ProbeDataset::from_items(std::vector<ProbeExample> items) {
    ProbeDataset d;
    d.labels = sorted_unique_labels(items);
    d.items = std::move(items);
    return d;
}

std::size_t ProbeDataset::label_index(const std::string& label) const {
    auto it = std::lower_bound(labels.begin(), labels.end(), label);
    if (it == labels.end() || *it != label)
        throw std::invalid_argument("unknown probe label: " + label);
    return static_cast<std::size_t>(it - labels.begin());
}

void ProbeDataset::validate() const {
    if (items.empty()) throw std::invalid_argument("probe dataset is empty");
    if (labels.size() < 2)
        throw std::invalid_argument("probe dataset needs at least 2 distinct labels, got " +
                                    std::to_string(labels.size()));
    for (const auto& it : items)
        if (it.tokens.empty()) throw std::invalid_argument("probe dataset has an empty sentence");
}

ProbeDataset make_keyword_probe_dataset(std::size_t topics, std::size_t per_topic,
                                        std::size_t sentence_len, std::uint64_t seed) {
    if (topics < 2) throw std::invalid_argument("keyword dataset needs at least 2 topics");
    if (per_topic == 0 || sentence_len == 0)
        throw std::invalid_argument("keyword dataset needs per_topic >= 1 and sentence_len >= 1");

    constexpr std::size_t kFillerPool = 50;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_filler(0, kFillerPool - 1);
    std::uniform_int_distribution<std::size_t> pick_slot(0, sentence_len - 1);

    std::vector<ProbeExample> items;
    items.reserve(topics * per_topic);
    for (std::size_t t = 0; t < topics; ++t) {
        const std::string keyword = "keyword" + std::to_string(t);
        const std::string label = "topic" + std::to_string(t);
        for (std::size_t i = 0; i < per_topic; ++i) {
            ProbeExample ex;
            ex.label = label;
            ex.tokens.resize(sentence_len);
            for (auto& tok : ex.tokens) tok = "filler" + std::to_string(pick_filler(rng));
            ex.tokens[pick_slot(rng)] = keyword;
            items.push_back(std::move(ex));
        }
    }
    return ProbeDataset::from_items(std::move(items));
}

void ProbeConfig::validate() const {
    if (max_len == 0 || embed_dim == 0 || k == 0 || head == 0 || p == 0)
        throw std::invalid_argument("probe config dimensions must be >= 1");
    if (k > max_len) throw std::invalid_argument("probe config needs k <= max_len");
    if (vocab_cap < 4) throw std::invalid_argument("probe vocab_cap must be >= 4");
    if (epochs == 0 || batch_size == 0)
        throw std::invalid_argument("probe config needs epochs >= 1 and batch_size >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("probe lr must be positive");
    if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
        throw std::invalid_argument("probe test_fraction must lie in (0, 1)");
}

ProbeModel ProbeModel::init(const SEConfig& se, std::size_t vocab, std::size_t num_labels,
                            std::uint64_t seed) {
    se.validate();
    if (vocab == 0 || num_labels < 2)
        throw std::invalid_argument("probe model needs vocab >= 1 and num_labels >= 2");

    std::mt19937_64 rng(seed);
    ProbeModel m;
    m.se = se;
    m.num_labels = num_labels;
    m.embedding = Tensor({vocab, se.m});
    init_uniform(m.embedding, -0.1, 0.1, rng);
    m.heads.reserve(se.head);
    for (std::size_t h = 0; h < se.head; ++h) m.heads.push_back(DeformHeadParams::init(se, rng));
    m.Wc = Tensor({num_labels, se.feature_len()});
    init_fan_in_uniform(m.Wc, se.feature_len(), rng);
    m.bc = Tensor({num_labels});
    return m;
}

std::vector<std::pair<std::string, Tensor*>> parameter_entries(ProbeModel& model) {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("embedding", &model.embedding);
    for (std::size_t h = 0; h < model.heads.size(); ++h) {
        const std::string base = "head" + std::to_string(h) + ".";
        out.emplace_back(base + "K", &model.heads[h].K);
        out.emplace_back(base + "conv_bias", &model.heads[h].conv_bias);
        out.emplace_back(base + "W", &model.heads[h].W);
        out.emplace_back(base + "K_final", &model.heads[h].K_final);
        out.emplace_back(base + "final_bias", &model.heads[h].final_bias);
    }
    out.emplace_back("Wc", &model.Wc);
    out.emplace_back("bc", &model.bc);
    return out;
}

std::vector<ClassStats> stats_from_confusion(const ConfusionMatrix& confusion,
                                             const std::vector<std::string>& labels) {
    const std::size_t c = labels.size();
    if (confusion.size() != c)
        throw std::invalid_argument("confusion matrix rows do not match label count");
    for (const auto& row : confusion)
        if (row.size() != c)
            throw std::invalid_argument("confusion matrix must be square over the label set");

    std::size_t total = 0;
    for (const auto& row : confusion)
        for (auto v : row) total += v;

    std::vector<ClassStats> out(c);
    for (std::size_t i = 0; i < c; ++i) {
        std::size_t tp = confusion[i][i];
        std::size_t gold = 0, pred = 0;
        for (std::size_t j = 0; j < c; ++j) {
            gold += confusion[i][j];
            pred += confusion[j][i];
        }
        ClassStats& s = out[i];
        s.label = labels[i];
        s.support = gold;
        s.precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
        s.recall = gold == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gold);
        s.f1 = (s.precision + s.recall) == 0.0
                   ? 0.0
                   : 2.0 * s.precision * s.recall / (s.precision + s.recall);
        // one-vs-rest: everything that is neither a false positive nor a false
        // negative for this class counts as correct
        std::size_t fp = pred - tp, fn = gold - tp;
        s.accuracy = total == 0 ? 0.0
                                : static_cast<double>(total - fp - fn) / static_cast<double>(total);
    }
    return out;
}

double accuracy_from_confusion(const ConfusionMatrix& confusion) {
    std::size_t total = 0, hit = 0;
    for (std::size_t i = 0; i < confusion.size(); ++i) {
        for (std::size_t j = 0; j < confusion[i].size(); ++j) {
            total += confusion[i][j];
            if (i == j) hit += confusion[i][j];
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

namespace {

std::vector<std::size_t> encode_probe(const std::vector<std::string>& tokens,
                                      const Vocabulary& vocab, std::size_t max_len) {
    std::vector<std::size_t> ids(max_len, Vocabulary::kPad);
    const std::size_t n = std::min(tokens.size(), max_len);
    for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(tokens[i]);
    return ids;
}

Tensor embed_probe(const ProbeModel& model, const std::vector<std::size_t>& ids) {
    Tensor X({ids.size(), model.se.m});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double* src = model.embedding.row(ids[i]);
        std::copy(src, src + model.se.m, X.row(i));
    }
    return X;
}

struct ProbeForward {
    Tensor X;
    std::vector<DeformTrace> traces;
    std::vector<double> f_se;
    std::vector<double> logits;
};

ProbeForward probe_forward(const ProbeModel& model, const std::vector<std::size_t>& ids) {
    ProbeForward fw;
    fw.X = embed_probe(model, ids);
    fw.f_se = semantics_extract(fw.X, model.heads, model.se, {}, &fw.traces);
    fw.logits.assign(model.num_labels, 0.0);
    for (std::size_t l = 0; l < model.num_labels; ++l) {
        double acc = model.bc(l);
        const double* w = model.Wc.row(l);
        for (std::size_t f = 0; f < fw.f_se.size(); ++f) acc += w[f] * fw.f_se[f];
        fw.logits[l] = acc;
    }
    return fw;
}

std::size_t argmax_of(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Cross entropy of the gold label; d(loss)/d(logits) scaled by `scale` is
/// accumulated into dlogits.
double ce_and_grad(const std::vector<double>& logits, std::size_t gold, double scale,
                   std::vector<double>& dlogits) {
    const double lse = log_sum_exp(logits.data(), logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        double p = std::exp(logits[i] - lse);
        dlogits[i] += scale * (p - (i == gold ? 1.0 : 0.0));
    }
    return lse - logits[gold];
}

void probe_backward(const ProbeModel& model, const std::vector<std::size_t>& ids,
                    const ProbeForward& fw, const std::vector<double>& dlogits, ProbeModel& grad) {
    const std::size_t F = fw.f_se.size();
    std::vector<double> dfse(F, 0.0);
    for (std::size_t l = 0; l < model.num_labels; ++l) {
        grad.bc(l) += dlogits[l];
        const double* w = model.Wc.row(l);
        double* gw = grad.Wc.row(l);
        for (std::size_t f = 0; f < F; ++f) {
            gw[f] += dlogits[l] * fw.f_se[f];
            dfse[f] += w[f] * dlogits[l];
        }
    }

    const std::size_t L = model.se.conv_len();
    const std::size_t per_head = L * model.se.p;
    Tensor dX({model.se.n, model.se.m});
    for (std::size_t h = 0; h < model.heads.size(); ++h) {
        Tensor d_f_final({L, model.se.p});
        std::copy(dfse.begin() + static_cast<std::ptrdiff_t>(h * per_head),
                  dfse.begin() + static_cast<std::ptrdiff_t>((h + 1) * per_head),
                  d_f_final.data.begin());
        head_backward(fw.X, model.heads[h], fw.traces[h], d_f_final, grad.heads[h], dX);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = grad.embedding.row(ids[i]);
        const double* src = dX.row(i);
        for (std::size_t j = 0; j < model.se.m; ++j) dst[j] += src[j];
    }
}

struct AdamSlot {
    Tensor m, v;
};

void adam_update(std::vector<std::pair<std::string, Tensor*>>& params,
                 std::vector<std::pair<std::string, Tensor*>>& grads, std::vector<AdamSlot>& slots,
                 std::size_t step, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i].second;
        Tensor& g = *grads[i].second;
        AdamSlot& s = slots[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            s.m(j) = b1 * s.m(j) + (1.0 - b1) * g(j);
            s.v(j) = b2 * s.v(j) + (1.0 - b2) * g(j) * g(j);
            p(j) -= lr * (s.m(j) / c1) / (std::sqrt(s.v(j) / c2) + eps);
        }
    }
}

}  // namespace

ProbeReport train_probe(const ProbeDataset& data, const ProbeConfig& cfg) {
    data.validate();
    cfg.validate();

    std::mt19937_64 rng(cfg.seed);

    std::vector<std::size_t> gold(data.items.size());
    for (std::size_t i = 0; i < data.items.size(); ++i)
        gold[i] = data.label_index(data.items[i].label);
    if (cfg.shuffle_labels) std::shuffle(gold.begin(), gold.end(), rng);

    // seeded split: a shuffled index list, test head then train tail
    std::vector<std::size_t> order(data.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t test_count = static_cast<std::size_t>(
        std::llround(cfg.test_fraction * static_cast<double>(order.size())));
    test_count = std::clamp<std::size_t>(test_count, 1, order.size() - 1);
    std::vector<std::size_t> test_idx(order.begin(),
                                      order.begin() + static_cast<std::ptrdiff_t>(test_count));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(test_count),
                                       order.end());

    // vocabulary from the training sentences only
    std::vector<std::vector<std::string>> train_texts;
    train_texts.reserve(train_idx.size());
    for (auto i : train_idx) train_texts.push_back(data.items[i].tokens);
    Vocabulary vocab = build_vocabulary_from_texts(train_texts, cfg.vocab_cap);

    std::vector<std::vector<std::size_t>> encoded(data.items.size());
    for (std::size_t i = 0; i < data.items.size(); ++i)
        encoded[i] = encode_probe(data.items[i].tokens, vocab, cfg.max_len);

    SEConfig se;
    se.n = cfg.max_len;
    se.m = cfg.embed_dim;
    se.k = cfg.k;
    se.head = cfg.head;
    se.p = cfg.p;

    ProbeModel model = ProbeModel::init(se, vocab.size(), data.labels.size(), rng());
    ProbeModel grad_store = model;  // same layout; zeroed before each batch
    auto params = parameter_entries(model);
    auto grads = parameter_entries(grad_store);
    std::vector<AdamSlot> slots(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        slots[i].m = Tensor(params[i].second->shape);
        slots[i].v = Tensor(params[i].second->shape);
    }

    ProbeReport report;
    report.labels = data.labels;
    report.train_size = train_idx.size();
    report.test_size = test_idx.size();

    std::size_t step = 0;
    double epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        epoch_loss = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, train_idx.size());
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (auto& [name, g] : grads) {
                (void)name;
                g->fill(0.0);
            }
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = train_idx[b];
                ProbeForward fw = probe_forward(model, encoded[i]);
                std::vector<double> dlogits(model.num_labels, 0.0);
                epoch_loss += ce_and_grad(fw.logits, gold[i], scale, dlogits);
                probe_backward(model, encoded[i], fw, dlogits, grad_store);
            }
            ++step;
            adam_update(params, grads, slots, step, cfg.lr);
        }
        epoch_loss /= static_cast<double>(train_idx.size());
        report.epochs_run = epoch + 1;
        if (epoch_loss < 0.02) break;  // memorized; further epochs only burn time
    }
    report.final_train_loss = epoch_loss;

    report.confusion.assign(data.labels.size(), std::vector<std::size_t>(data.labels.size(), 0));
    for (auto i : test_idx) {
        ProbeForward fw = probe_forward(model, encoded[i]);
        report.confusion[gold[i]][argmax_of(fw.logits)]++;
    }
    report.per_class = stats_from_confusion(report.confusion, data.labels);
    report.accuracy = accuracy_from_confusion(report.confusion);
    return report;
}

std::string format_probe_report(const ProbeReport& report) {
    std::ostringstream out;
    out << "probe: " << report.train_size << " train / " << report.test_size << " test, "
        << report.epochs_run << " epochs, final train loss " << report.final_train_loss << "\n";
    out << "label                precision    recall        f1  accuracy   support\n";
    char buf[160];
    for (const auto& s : report.per_class) {
        std::snprintf(buf, sizeof(buf), "%-20s %9.4f %9.4f %9.4f %9.4f %9zu\n", s.label.c_str(),
                      s.precision, s.recall, s.f1, s.accuracy, s.support);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "overall accuracy %.4f\n", report.accuracy);
    out << buf;
    return out.str();
}

void save_probe_report(const std::string& path, const ProbeReport& report) {
    nlohmann::json j;
    j["labels"] = report.labels;
    j["confusion"] = report.confusion;
    j["accuracy"] = report.accuracy;
    j["train_size"] = report.train_size;
    j["test_size"] = report.test_size;
    j["epochs_run"] = report.epochs_run;
    j["final_train_loss"] = report.final_train_loss;
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& s : report.per_class) {
        per_class.push_back({{"label", s.label},
                             {"support", s.support},
                             {"precision", s.precision},
                             {"recall", s.recall},
                             {"f1", s.f1},
                             {"accuracy", s.accuracy}});
    }
    j["per_class"] = per_class;

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write probe report: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace think
