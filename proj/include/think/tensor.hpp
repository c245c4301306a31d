#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace think {

/// Dense row-major tensor of doubles. Rank 1..3 is all this project needs.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::initializer_list<std::size_t> s) : Tensor(std::vector<std::size_t>(s)) {}

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    const double* row(std::size_t i) const { return data.data() + i * shape[1]; }
    double* row(std::size_t i) { return data.data() + i * shape[1]; }

    void fill(double v);
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)], values rounded through
/// float so checkpoints (32-bit blobs) round-trip bit-exactly.
void init_fan_in_uniform(Tensor& t, std::size_t fan_in, std::mt19937_64& rng);
void init_uniform(Tensor& t, double lo, double hi, std::mt19937_64& rng);

/// Snap every entry to its nearest float value (keeps the float32
/// representability invariant after optimizer updates).
void round_to_float(Tensor& t);

void check_shape(const Tensor& t, std::vector<std::size_t> expect, const char* what);

/// Row-wise softmax of a (r x c) matrix, numerically stable.
Tensor softmax_rows(const Tensor& logits);

/// log(sum(exp(v))) over a contiguous vector.
double log_sum_exp(const double* v, std::size_t len);

}  // namespace think
