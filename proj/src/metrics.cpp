#include "think/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

using nlohmann::json;

namespace think {

namespace {
constexpr double kBleuSmoothing = 1e-9;

struct NgramCounts {
    std::unordered_set<std::string> unique;
    std::size_t total = 0;
};

NgramCounts count_ngrams(const std::vector<std::vector<std::string>>& responses, std::size_t n) {
    NgramCounts c;
    for (const auto& r : responses) {
        for (auto& g : ngrams_of(r, n)) {
            ++c.total;
            c.unique.insert(std::move(g));
        }
    }
    return c;
}
}  // namespace

double distinct_n(const std::vector<std::vector<std::string>>& responses, std::size_t n) {
    if (n == 0) throw std::invalid_argument("distinct_n: order must be >= 1");
    NgramCounts c = count_ngrams(responses, n);
    if (c.total == 0) return 0.0;
    return static_cast<double>(c.unique.size()) / static_cast<double>(c.total);
}

double q_phrase_n(const std::vector<std::vector<std::string>>& responses,
                  const NgramVocabulary& gram_vocab) {
    NgramCounts c = count_ngrams(responses, gram_vocab.order());
    if (c.total == 0) return 0.0;
    std::size_t effective = 0;
    for (const auto& g : c.unique)
        if (gram_vocab.contains(g)) ++effective;
    return static_cast<double>(effective) / static_cast<double>(c.total);
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read embedding file: " + path);
    EmbeddingTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        std::vector<double> vec;
        double v;
        while (ss >> v) vec.push_back(v);
        if (vec.empty() || !std::all_of(vec.begin(), vec.end(),
                                        [](double x) { return std::isfinite(x); }))
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": malformed embedding line");
        if (t.dim_ == 0) t.dim_ = vec.size();
        if (vec.size() != t.dim_)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.dim_) + " values");
        t.vectors_.emplace(std::move(token), std::move(vec));
    }
    if (t.vectors_.empty()) throw std::runtime_error("empty embedding file: " + path);
    return t;
}

EmbeddingTable EmbeddingTable::from_entries(
    const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
    EmbeddingTable t;
    for (const auto& [token, vec] : entries) {
        if (t.dim_ == 0) t.dim_ = vec.size();
        if (vec.size() != t.dim_)
            throw std::invalid_argument("embedding entries must share one dimension");
        t.vectors_.emplace(token, vec);
    }
    return t;
}

std::vector<double> EmbeddingTable::lookup(const std::string& token) const {
    auto it = vectors_.find(token);
    if (it == vectors_.end()) return std::vector<double>(dim_, 0.0);
    return it->second;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> mean_vector(const std::vector<std::string>& tokens,
                                const EmbeddingTable& table) {
    std::vector<double> acc(table.dim(), 0.0);
    if (tokens.empty()) return acc;
    for (const auto& t : tokens) {
        auto v = table.lookup(t);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
    }
    for (double& x : acc) x /= static_cast<double>(tokens.size());
    return acc;
}

std::vector<double> extrema_vector(const std::vector<std::string>& tokens,
                                   const EmbeddingTable& table) {
    std::vector<double> ext(table.dim(), 0.0);
    for (const auto& t : tokens) {
        auto v = table.lookup(t);
        for (std::size_t i = 0; i < ext.size(); ++i)
            if (std::abs(v[i]) > std::abs(ext[i])) ext[i] = v[i];
    }
    return ext;
}

double embedding_average(const std::vector<std::string>& generated,
                         const std::vector<std::string>& reference, const EmbeddingTable& table) {
    return cosine(mean_vector(generated, table), mean_vector(reference, table));
}

static double greedy_direction(const std::vector<std::string>& from,
                               const std::vector<std::string>& to, const EmbeddingTable& table) {
    if (from.empty() || to.empty()) return 0.0;
    std::vector<std::vector<double>> targets;
    targets.reserve(to.size());
    for (const auto& t : to) targets.push_back(table.lookup(t));
    double sum = 0.0;
    for (const auto& f : from) {
        auto v = table.lookup(f);
        double best = 0.0;
        for (const auto& t : targets) best = std::max(best, cosine(v, t));
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

double embedding_greedy(const std::vector<std::string>& generated,
                        const std::vector<std::string>& reference, const EmbeddingTable& table) {
    return 0.5 * (greedy_direction(generated, reference, table) +
                  greedy_direction(reference, generated, table));
}

double embedding_extrema(const std::vector<std::string>& generated,
                         const std::vector<std::string>& reference, const EmbeddingTable& table) {
    return cosine(extrema_vector(generated, table), extrema_vector(reference, table));
}

double sentence_bleu(const std::vector<std::string>& hypothesis,
                     const std::vector<std::string>& reference, std::size_t max_order) {
    if (max_order == 0) throw std::invalid_argument("sentence_bleu: order must be >= 1");
    if (hypothesis.empty()) return 0.0;

    double bp = 1.0;
    if (hypothesis.size() < reference.size())
        bp = std::exp(1.0 - static_cast<double>(reference.size()) /
                                static_cast<double>(hypothesis.size()));

    double log_sum = 0.0;
    for (std::size_t order = 1; order <= max_order; ++order) {
        auto hyp_grams = ngrams_of(hypothesis, order);
        auto ref_grams = ngrams_of(reference, order);
        if (hyp_grams.empty()) {
            // no candidate n-grams at this order: neutral when the reference
            // has none either, floor otherwise
            log_sum += ref_grams.empty() ? 0.0 : std::log(kBleuSmoothing);
            continue;
        }
        std::unordered_map<std::string, std::size_t> ref_counts;
        for (const auto& g : ref_grams) ++ref_counts[g];
        std::unordered_map<std::string, std::size_t> hyp_counts;
        for (const auto& g : hyp_grams) ++hyp_counts[g];
        std::size_t clipped = 0;
        for (const auto& [g, c] : hyp_counts) {
            auto it = ref_counts.find(g);
            if (it != ref_counts.end()) clipped += std::min(c, it->second);
        }
        double precision = clipped > 0
                               ? static_cast<double>(clipped) / static_cast<double>(hyp_grams.size())
                               : kBleuSmoothing;
        log_sum += std::log(precision);
    }
    return bp * std::exp(log_sum / static_cast<double>(max_order));
}

double bleu_avg(const ResponseSet& items) {
    if (items.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& item : items) {
        double b = 0.0;
        for (std::size_t order = 1; order <= 3; ++order)
            b += sentence_bleu(item.generated, item.reference, order);
        sum += b / 3.0;
    }
    return sum / static_cast<double>(items.size());
}

double embedding_avg(const ResponseSet& items, const EmbeddingTable& table) {
    if (items.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& item : items) {
        double e = embedding_greedy(item.generated, item.reference, table) +
                   embedding_average(item.generated, item.reference, table) +
                   embedding_extrema(item.generated, item.reference, table);
        sum += e / 3.0;
    }
    return sum / static_cast<double>(items.size());
}

double coherence(const std::vector<std::string>& context,
                 const std::vector<std::string>& generated, const EmbeddingTable& table) {
    return cosine(mean_vector(context, table), mean_vector(generated, table));
}

double coherence_avg(const ResponseSet& items, const EmbeddingTable& table) {
    if (items.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& item : items) sum += coherence(item.context, item.generated, table);
    return sum / static_cast<double>(items.size());
}

std::vector<MixCohRow> mix_coh(const std::vector<ModelScores>& models) {
    if (models.empty()) throw std::invalid_argument("mix_coh: at least one model required");
    double b_sum = 0.0, e_sum = 0.0, c_sum = 0.0;
    for (const auto& m : models) {
        b_sum += m.avg_bleu;
        e_sum += m.avg_embed;
        c_sum += m.coherence;
    }
    std::vector<MixCohRow> rows;
    rows.reserve(models.size());
    for (const auto& m : models) {
        MixCohRow r;
        r.id = m.id;
        r.b_score = b_sum != 0.0 ? m.avg_bleu / b_sum : 0.0;
        r.e_score = e_sum != 0.0 ? m.avg_embed / e_sum : 0.0;
        r.c_score = c_sum != 0.0 ? m.coherence / c_sum : 0.0;
        r.mix_coh = r.b_score + r.e_score + r.c_score;
        rows.push_back(r);
    }
    return rows;
}

void save_report(const std::string& path, const MetricReport& report) {
    json dist = json::object(), qp = json::object();
    for (const auto& [n, v] : report.distinct) dist[std::to_string(n)] = v;
    for (const auto& [n, v] : report.q_phrase) qp[std::to_string(n)] = v;
    json j{{"model", report.model},   {"items", report.items},     {"distinct", dist},
           {"q_phrase", qp},          {"avg_B", report.avg_bleu},  {"avg_E", report.avg_embed},
           {"coherence", report.coherence}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report: " + path);
    out << j.dump(2) << "\n";
}

MetricReport load_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read report: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed report " + path + ": " + e.what());
    }
    MetricReport r;
    try {
        r.model = j.at("model").get<std::string>();
        r.items = j.at("items").get<std::size_t>();
        for (const auto& [key, v] : j.at("distinct").items())
            r.distinct[static_cast<std::size_t>(std::stoul(key))] = v.get<double>();
        for (const auto& [key, v] : j.at("q_phrase").items())
            r.q_phrase[static_cast<std::size_t>(std::stoul(key))] = v.get<double>();
        r.avg_bleu = j.at("avg_B").get<double>();
        r.avg_embed = j.at("avg_E").get<double>();
        r.coherence = j.at("coherence").get<double>();
    } catch (const json::exception& e) {
        throw std::runtime_error("report schema mismatch in " + path + ": " + e.what());
    }
    return r;
}

}  // namespace think
