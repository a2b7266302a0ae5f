#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace sbi {

// splitmix64; used only for deriving child seeds, never as the main stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Child-stream seed from (base, tag[, subtag]). Order-independent trial
// dispatch relies on this: a trial's stream depends only on its index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag, std::uint64_t subtag = 0) {
    return splitmix64(base ^ splitmix64(tag ^ splitmix64(subtag)));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double normal(double mean = 0.0, double sd = 1.0) {
        return mean + sd * norm_(gen_);
    }

    // n iid draws from N(mean, sd^2)
    Eigen::VectorXd normal_vec(Eigen::Index n, double mean = 0.0, double sd = 1.0) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(mean, sd);
        return v;
    }

    double uniform() { return unif_(gen_); }

    // uniform index in [0, n)
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(gen_);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> norm_{0.0, 1.0};
    std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace sbi
