#include "think/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace think {

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    data.assign(n, 0.0);
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

void init_fan_in_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    init_uniform(t, -bound, bound, rng);
}

void init_uniform(Tensor& t, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(dist(rng)));
}

void round_to_float(Tensor& t) {
    for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

void check_shape(const Tensor& t, std::vector<std::size_t> expect, const char* what) {
    if (t.shape != expect) {
        Tensor want;
        want.shape = std::move(expect);
        throw std::invalid_argument(std::string(what) + ": expected shape " + want.shape_str() +
                                    ", got " + t.shape_str());
    }
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 tensor required");
    std::size_t rows = logits.dim(0), cols = logits.dim(1);
    Tensor out({rows, cols});
    for (std::size_t i = 0; i < rows; ++i) {
        const double* in = logits.row(i);
        double* o = out.row(i);
        double mx = in[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < cols; ++j) o[j] /= sum;
    }
    return out;
}

double log_sum_exp(const double* v, std::size_t len) {
    double mx = v[0];
    for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, v[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += std::exp(v[i] - mx);
    return mx + std::log(sum);
}

}  // namespace think
