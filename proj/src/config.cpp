#include "think/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace think {

ExperimentConfig desk_profile() {
    ExperimentConfig cfg;
    cfg.model.c_len = 10;
    cfg.model.r_len = 10;
    cfg.model.vocab_size = 2000;
    cfg.model.embed_dim = 64;
    cfg.model.hidden = 64;
    cfg.model.k = 3;
    cfg.model.head = 2;
    cfg.model.p = 4;

    cfg.train.batch_size = 32;
    cfg.train.epochs = 20;
    cfg.train.init_lr = 1e-3;
    cfg.train.warmup_steps = 200;
    return cfg;
}

ExperimentConfig paper_profile() {
    ExperimentConfig cfg;
    cfg.model.c_len = 25;
    cfg.model.r_len = 25;
    cfg.model.vocab_size = 23000;
    cfg.model.embed_dim = 256;
    cfg.model.hidden = 256;
    cfg.model.k = 3;
    cfg.model.head = 6;
    cfg.model.p = 8;

    cfg.train.batch_size = 64;
    cfg.train.epochs = 100;
    cfg.train.init_lr = 1e-3;
    cfg.train.warmup_steps = 4000;
    return cfg;
}

ExperimentConfig profile_by_name(const std::string& name) {
    if (name == "desk") return desk_profile();
    if (name == "paper") return paper_profile();
    throw std::invalid_argument("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": expected an integer, got '" + value +
                                    "'");
    }
    if (pos != value.size())
        throw std::invalid_argument("config key " + key + ": expected an integer, got '" + value +
                                    "'");
    return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key " + key + ": expected a number, got '" + value +
                                    "'");
    }
    if (pos != value.size())
        throw std::invalid_argument("config key " + key + ": expected a number, got '" + value +
                                    "'");
    return v;
}

}  // namespace

void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "c_len") cfg.model.c_len = parse_size(key, value);
    else if (key == "r_len") cfg.model.r_len = parse_size(key, value);
    else if (key == "vocab_size") cfg.model.vocab_size = parse_size(key, value);
    else if (key == "embed_dim") cfg.model.embed_dim = parse_size(key, value);
    else if (key == "hidden") cfg.model.hidden = parse_size(key, value);
    else if (key == "k") cfg.model.k = parse_size(key, value);
    else if (key == "head") cfg.model.head = parse_size(key, value);
    else if (key == "p") cfg.model.p = parse_size(key, value);
    else if (key == "batch_size") cfg.train.batch_size = parse_size(key, value);
    else if (key == "epochs") cfg.train.epochs = parse_size(key, value);
    else if (key == "init_lr") cfg.train.init_lr = parse_double(key, value);
    else if (key == "warmup_steps") cfg.train.warmup_steps = parse_size(key, value);
    else if (key == "label_smoothing") cfg.train.label_smoothing = parse_double(key, value);
    else if (key == "l2_weight") cfg.train.l2_weight = parse_double(key, value);
    else if (key == "grad_clip") cfg.train.grad_clip = parse_double(key, value);
    else if (key == "adam_beta1") cfg.train.adam_beta1 = parse_double(key, value);
    else if (key == "adam_beta2") cfg.train.adam_beta2 = parse_double(key, value);
    else if (key == "adam_eps") cfg.train.adam_eps = parse_double(key, value);
    else if (key == "seed") cfg.train.seed = parse_size(key, value);
    else if (key == "corpus") cfg.corpus = value;
    else if (key == "vocab") cfg.vocab = value;
    else if (key == "embeddings") cfg.embeddings = value;
    else if (key == "checkpoint_dir") cfg.checkpoint_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else throw std::invalid_argument("unknown config key '" + key + "'");
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string body = trim(line.substr(0, line.find('#')));
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value");
        try {
            apply_config_value(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

std::string dump_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    char num[64];
    auto put_num = [&](const char* key, double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        out << key << "=" << num << "\n";
    };
    out << "c_len=" << cfg.model.c_len << "\n";
    out << "r_len=" << cfg.model.r_len << "\n";
    out << "vocab_size=" << cfg.model.vocab_size << "\n";
    out << "embed_dim=" << cfg.model.embed_dim << "\n";
    out << "hidden=" << cfg.model.hidden << "\n";
    out << "k=" << cfg.model.k << "\n";
    out << "head=" << cfg.model.head << "\n";
    out << "p=" << cfg.model.p << "\n";
    out << "batch_size=" << cfg.train.batch_size << "\n";
    out << "epochs=" << cfg.train.epochs << "\n";
    put_num("init_lr", cfg.train.init_lr);
    out << "warmup_steps=" << cfg.train.warmup_steps << "\n";
    put_num("label_smoothing", cfg.train.label_smoothing);
    put_num("l2_weight", cfg.train.l2_weight);
    put_num("grad_clip", cfg.train.grad_clip);
    put_num("adam_beta1", cfg.train.adam_beta1);
    put_num("adam_beta2", cfg.train.adam_beta2);
    put_num("adam_eps", cfg.train.adam_eps);
    out << "seed=" << cfg.train.seed << "\n";
    if (!cfg.corpus.empty()) out << "corpus=" << cfg.corpus << "\n";
    if (!cfg.vocab.empty()) out << "vocab=" << cfg.vocab << "\n";
    if (!cfg.embeddings.empty()) out << "embeddings=" << cfg.embeddings << "\n";
    if (!cfg.checkpoint_dir.empty()) out << "checkpoint_dir=" << cfg.checkpoint_dir << "\n";
    if (!cfg.out_dir.empty()) out << "out_dir=" << cfg.out_dir << "\n";
    return out.str();
}

}  // namespace think
