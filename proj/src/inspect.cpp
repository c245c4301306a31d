#include "think/inspect.hpp"

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace think {

InspectResult inspect_deform(const GeneratorPool& pool, const Vocabulary& vocab,
                             const std::string& sentence) {
    const std::size_t c_len = pool.config.c_len;
    std::vector<std::string> words = tokenize(sentence);
    if (words.empty()) throw std::invalid_argument("cannot inspect an empty sentence");

    InspectResult r;
    r.truncated = words.size() > c_len;

    std::vector<std::size_t> ids(c_len, Vocabulary::kPad);
    const std::size_t used = std::min(words.size(), c_len);
    for (std::size_t i = 0; i < used; ++i) ids[i] = vocab.id(words[i]);
    r.tokens.reserve(c_len);
    for (auto id : ids) r.tokens.push_back(vocab.token(id));

    Tensor X = embed_ids(pool, ids);
    std::vector<DeformTrace> traces;
    semantics_extract(X, pool.generators.at(0).heads, pool.config.se_config(0), {}, &traces);

    r.selected.reserve(traces.size());
    for (const auto& t : traces) r.selected.push_back(t.selected);
    return r;
}

std::string format_trace(const InspectResult& r) {
    std::ostringstream out;
    out << "input rows:\n";
    for (std::size_t i = 0; i < r.tokens.size(); ++i)
        out << "  " << i << ": " << r.tokens[i] << "\n";
    for (std::size_t h = 0; h < r.selected.size(); ++h) {
        out << "head " << h << " selection (target <- source):\n";
        for (std::size_t i = 0; i < r.selected[h].size(); ++i) {
            const std::size_t src = r.selected[h][i];
            out << "  " << i << " <- " << src << " (" << r.tokens.at(src) << ")\n";
        }
    }
    return out.str();
}

void save_trace_json(const std::string& path, const InspectResult& r) {
    nlohmann::json j;
    j["tokens"] = r.tokens;
    j["truncated"] = r.truncated;
    j["heads"] = r.selected;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace file: " + path);
    out << j.dump(2) << "\n";
}

namespace {

const char* head_color(std::size_t h) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[h % (sizeof(palette) / sizeof(palette[0]))];
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void write_scatter_svg(const std::string& path, const InspectResult& r, std::uint64_t seed) {
    const std::size_t n = r.tokens.size();
    if (n == 0) throw std::invalid_argument("nothing to plot");

    const double cell = 48.0;
    const double left = 60.0, top = 44.0, bottom = 96.0, right = 24.0;
    const double plot = cell * static_cast<double>(n - 1 ? n - 1 : 1);
    const double width = left + plot + right;
    const double height = top + plot + bottom;
    auto sx = [&](double x) { return left + x * cell; };
    auto sy = [&](double y) { return top + y * cell; };

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jx(-0.25, 0.25);
    std::uniform_real_distribution<double> jy(-0.125, 0.125);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">"
        << "row selection per head (x: source token, y: target position)</text>\n";

    // legend
    for (std::size_t h = 0; h < r.selected.size(); ++h) {
        const double lx = left + static_cast<double>(h) * 90.0;
        svg << "<circle cx=\"" << lx << "\" cy=\"30\" r=\"4\" fill=\"" << head_color(h)
            << "\"/>\n";
        svg << "<text x=\"" << lx + 8 << "\" y=\"34\" font-family=\"sans-serif\" "
            << "font-size=\"11\">head " << h << "</text>\n";
    }

    // grid and axis labels
    for (std::size_t i = 0; i < n; ++i) {
        const double gx = sx(static_cast<double>(i));
        const double gy = sy(static_cast<double>(i));
        svg << "<line x1=\"" << gx << "\" y1=\"" << top << "\" x2=\"" << gx << "\" y2=\""
            << top + plot << "\" stroke=\"#dddddd\"/>\n";
        svg << "<line x1=\"" << left << "\" y1=\"" << gy << "\" x2=\"" << left + plot
            << "\" y2=\"" << gy << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << gx << "\" y=\"" << top + plot + 14
            << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\" "
            << "transform=\"rotate(-45 " << gx << " " << top + plot + 14 << ")\">"
            << escape_xml(r.tokens[i]) << "</text>\n";
        svg << "<text x=\"" << left - 8 << "\" y=\"" << gy + 4
            << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << i
            << "</text>\n";
    }

    for (std::size_t h = 0; h < r.selected.size(); ++h) {
        for (std::size_t row = 0; row < r.selected[h].size(); ++row) {
            const double x = static_cast<double>(r.selected[h][row]) + jx(rng);
            const double y = static_cast<double>(row) + jy(rng);
            svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"4\" fill=\""
                << head_color(h) << "\" fill-opacity=\"0.75\"/>\n";
        }
    }
    svg << "</svg>\n";

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write plot file: " + path);
    out << svg.str();
}

}  // namespace think
