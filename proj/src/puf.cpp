#include "pufauth/puf.hpp"

#include <cmath>
#include <numbers>

#include "pufauth/errors.hpp"
#include "pufauth/io.hpp"

namespace pufauth {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

template <typename F>
double simpson(F f, double a, double b, int intervals) {
    const double h = (b - a) / intervals;
    double s = f(a) + f(b);
    for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

double sample_beta(double a, double b, Rng& rng) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng);
    const double y = gb(rng);
    return x / (x + y);
}

}  // namespace

ArbiterPuf::ArbiterPuf(std::vector<double> weights, double noise_sigma)
    : weights_(std::move(weights)), noise_sigma_(noise_sigma) {
    require(weights_.size() >= 2, "arbiter PUF needs at least one stage");
    require(noise_sigma_ >= 0.0, "noise_sigma must be non-negative");
}

ArbiterPuf ArbiterPuf::create(unsigned stages, double noise_sigma, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> w(stages + 1);
    for (auto& x : w) x = n01(rng);
    return ArbiterPuf(std::move(w), noise_sigma);
}

std::vector<double> parity_features(const Challenge& c) {
    std::vector<double> phi(c.width + 1);
    phi[c.width] = 1.0;
    double prod = 1.0;
    for (unsigned i = c.width; i >= 1; --i) {
        prod *= 1.0 - 2.0 * c.bit(i);
        phi[i - 1] = prod;
    }
    return phi;
}

double ArbiterPuf::delay(const Challenge& c) const {
    if (c.width != stages()) throw ChallengeWidthMismatch("challenge width " + std::to_string(c.width) +
                                                          " != stages " + std::to_string(stages()));
    // Suffix parity product, accumulated from the last stage backwards.
    double sum = weights_[c.width];
    double prod = 1.0;
    for (unsigned i = c.width; i >= 1; --i) {
        prod *= 1.0 - 2.0 * c.bit(i);
        sum += weights_[i - 1] * prod;
    }
    return sum;
}

bool ArbiterPuf::respond(const Challenge& c, Rng& rng) const {
    double d = delay(c);
    if (noise_sigma_ > 0.0) {
        std::normal_distribution<double> noise(0.0, noise_sigma_);
        d += noise(rng);
    }
    return d > 0.0;
}

void ArbiterPuf::set_flip_rate(double rate) {
    double norm2 = 0.0;
    for (double w : weights_) norm2 += w * w;
    noise_sigma_ = arbiter_sigma_for_flip_rate(std::sqrt(norm2), rate);
}

double arbiter_flip_rate(double delay_std, double sigma) {
    require(delay_std > 0.0, "delay_std must be positive");
    if (sigma <= 0.0) return 0.0;
    const double ratio = sigma / delay_std;
    auto disagree = [](double u) {
        const double q = normal_cdf(u);
        return 2.0 * q * (1.0 - q);
    };
    if (ratio <= 1.0) {
        // Integrate over u = delay / sigma; the noise term sets the scale.
        return simpson([&](double u) { return normal_pdf(u * ratio) * ratio * disagree(u); }, -14.0, 14.0, 8000);
    }
    return simpson([&](double x) { return normal_pdf(x) * disagree(x / ratio); }, -14.0, 14.0, 8000);
}

double arbiter_sigma_for_flip_rate(double delay_std, double rate) {
    require(rate >= 0.0 && rate < 0.5, "flip rate must be in [0, 0.5)");
    if (rate == 0.0) return 0.0;
    double lo = 0.0, hi = delay_std;
    while (arbiter_flip_rate(delay_std, hi) < rate) hi *= 2.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (arbiter_flip_rate(delay_std, mid) < rate ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ResponseVector strong_puf_response_vector(const ArbiterPuf& puf, const Challenge& seed,
                                          const std::vector<unsigned>& taps, std::size_t n, Rng& rng) {
    if (n == 0 || n % 8 != 0) throw PreconditionViolation("response length must be a positive multiple of 8");
    Lfsr lfsr(seed.width, taps, seed);
    ResponseVector r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = puf.respond(lfsr.step(), rng) ? 1 : 0;
    return r;
}

MemoryPuf::MemoryPuf(std::size_t rows, std::size_t cols, std::vector<double> bias, std::vector<double> flip_prob)
    : rows_(rows), cols_(cols), bias_(std::move(bias)), flip_(std::move(flip_prob)) {
    if (bias_.size() != rows * cols || flip_.size() != rows * cols)
        throw ShapeMismatch("bias/flip matrices do not match rows x cols");
    for (std::size_t i = 0; i < bias_.size(); ++i) {
        require(bias_[i] >= 0.0 && bias_[i] <= 1.0, "bias must lie in [0, 1]");
        require(flip_[i] >= 0.0 && flip_[i] < 0.5, "flip_prob must lie in [0, 0.5)");
    }
}

MemoryPuf MemoryPuf::create(std::size_t rows, std::size_t cols, const BiasMixture& mix, double flip_prob,
                            Rng& rng) {
    require(mix.weight_low >= 0 && mix.weight_high >= 0 && mix.weight_low + mix.weight_high <= 1.0,
            "bias mixture weights must form a distribution");
    require(mix.sharpness > 0, "bias mixture sharpness must be positive");
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::vector<double> bias(rows * cols);
    for (auto& b : bias) {
        const double pick = u01(rng);
        if (pick < mix.weight_low)
            b = sample_beta(1.0, mix.sharpness, rng);
        else if (pick < mix.weight_low + mix.weight_high)
            b = sample_beta(mix.sharpness, 1.0, rng);
        else
            b = u01(rng);
    }
    return MemoryPuf(rows, cols, std::move(bias), std::vector<double>(rows * cols, flip_prob));
}

BitMatrix MemoryPuf::readout(Rng& rng) const {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    BitMatrix m(rows_, cols_);
    for (std::size_t i = 0; i < bias_.size(); ++i) {
        std::uint8_t v = u01(rng) < bias_[i] ? 1 : 0;
        if (flip_[i] > 0.0 && u01(rng) < flip_[i]) v ^= 1u;
        m.bits[i] = v;
    }
    return m;
}

void write_response_dump(const std::filesystem::path& path, const ResponseDump& dump) {
    ByteWriter w;
    w.put_magic("PUFR");
    w.put<std::uint16_t>(1);
    w.put<std::uint16_t>(dump.is_matrix ? 1 : 0);
    w.put<std::uint32_t>(dump.device_id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dump.bits.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dump.bits.cols));
    w.put_bytes(pack_lsb_first(dump.bits.bits));
    write_file(path, w.bytes());
}

ResponseDump read_response_dump(const std::filesystem::path& path) {
    const Bytes data = read_file(path);
    ByteReader r(data);
    r.expect_magic("PUFR");
    if (r.get<std::uint16_t>() != 1) throw FormatError("unsupported response dump version");
    ResponseDump d;
    d.is_matrix = r.get<std::uint16_t>() == 1;
    d.device_id = r.get<std::uint32_t>();
    const std::size_t rows = r.get<std::uint32_t>();
    const std::size_t cols = r.get<std::uint32_t>();
    const std::size_t n = rows * cols;
    d.bits.rows = rows;
    d.bits.cols = cols;
    d.bits.bits = unpack_lsb_first(r.get_bytes((n + 7) / 8), n);
    return d;
}

}  // namespace pufauth
