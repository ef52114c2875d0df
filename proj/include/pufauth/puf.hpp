#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pufauth/bits.hpp"
#include "pufauth/lfsr.hpp"
#include "pufauth/rng.hpp"

namespace pufauth {

/// Linear additive-delay Arbiter PUF. The response is the sign of
/// weights . parity(c) plus Gaussian measurement noise.
class ArbiterPuf {
public:
    ArbiterPuf(std::vector<double> weights, double noise_sigma);

    /// Draws stages+1 standard-normal weights.
    static ArbiterPuf create(unsigned stages, double noise_sigma, Rng& rng);

    unsigned stages() const noexcept { return static_cast<unsigned>(weights_.size() - 1); }
    const std::vector<double>& weights() const noexcept { return weights_; }
    double noise_sigma() const noexcept { return noise_sigma_; }

    /// Noise-free delay difference for `c`.
    double delay(const Challenge& c) const;
    bool respond(const Challenge& c, Rng& rng) const;

    /// Sets the noise so that two evaluations of a random challenge disagree
    /// with probability `rate` (see `arbiter_sigma_for_flip_rate`).
    void set_flip_rate(double rate);

private:
    std::vector<double> weights_;
    double noise_sigma_;
};

/// Parity feature vector: phi_i = prod_{j>=i} (1 - 2 c_j), phi_{stages+1} = 1.
std::vector<double> parity_features(const Challenge& c);

/// Expected disagreement between two noisy evaluations of a uniformly random
/// challenge, for delay std `delay_std` and noise std `sigma`. Computed by
/// quadrature over the delay distribution.
double arbiter_flip_rate(double delay_std, double sigma);

/// Inverse of `arbiter_flip_rate` in sigma, by bisection. rate in [0, 0.5).
double arbiter_sigma_for_flip_rate(double delay_std, double rate);

/// r_i = respond(C_i) for C_1..C_n expanded from `seed`.
ResponseVector strong_puf_response_vector(const ArbiterPuf& puf, const Challenge& seed,
                                          const std::vector<unsigned>& taps, std::size_t n, Rng& rng);

/// Bimodal power-up bias mixture: w_lo Beta(1,a) + w_hi Beta(a,1) + rest Uniform(0,1).
struct BiasMixture {
    double weight_low = 0.475;
    double weight_high = 0.475;
    double sharpness = 20.0;
};

/// Memory (SRAM-like) PUF: each cell powers up to 1 with probability `bias`,
/// then flips with probability `flip_prob`.
class MemoryPuf {
public:
    MemoryPuf(std::size_t rows, std::size_t cols, std::vector<double> bias, std::vector<double> flip_prob);

    static MemoryPuf create(std::size_t rows, std::size_t cols, const BiasMixture& mix, double flip_prob,
                            Rng& rng);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    const std::vector<double>& bias() const noexcept { return bias_; }
    const std::vector<double>& flip_prob() const noexcept { return flip_; }

    BitMatrix readout(Rng& rng) const;

private:
    std::size_t rows_, cols_;
    std::vector<double> bias_;
    std::vector<double> flip_;
};

/// Raw response dump: "PUFR" | u16 version | u16 kind (0 vector, 1 matrix) |
/// u32 device id | u32 rows | u32 cols | LSB-first packed bits. Little-endian.
struct ResponseDump {
    std::uint32_t device_id = 0;
    BitMatrix bits;  // vectors are stored as 1 x N
    bool is_matrix = false;
};

void write_response_dump(const std::filesystem::path& path, const ResponseDump& dump);
ResponseDump read_response_dump(const std::filesystem::path& path);

}  // namespace pufauth
