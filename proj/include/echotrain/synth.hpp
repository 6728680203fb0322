#pragma once

// Buzz stimulus synthesis: linear FM chirp, FFT convolution with echo IRs,
// pulse trains, and 16-bit PCM WAV encoding.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "echotrain/bytes.hpp"
#include "echotrain/errors.hpp"
#include "echotrain/irbank.hpp"

namespace echotrain::synth {

struct ChirpParams {
    double f_start = 7000.0;
    double f_end = 1000.0;
    double duration = 0.010;
    double sample_rate = 48000.0;
    double amplitude = 0.9;

    void validate() const
    {
        if (!(sample_rate > 0.0) || !(duration > 0.0)) {
            throw ConfigError("chirp duration and sample rate must be positive");
        }
        double nyquist = sample_rate / 2.0;
        if (!(f_start > 0.0) || !(f_end > 0.0) || f_start >= nyquist || f_end >= nyquist) {
            throw ConfigError("chirp frequencies must lie in (0, sample_rate/2)");
        }
        if (!(amplitude > 0.0) || amplitude > 1.0) {
            throw ConfigError("chirp amplitude must be in (0, 1]");
        }
    }

    /// Samples with t = n / sample_rate < duration.
    std::size_t sample_count() const
    {
        double exact = duration * sample_rate;
        auto n = std::llround(exact);
        if (std::abs(exact - static_cast<double>(n)) < 1e-9 * std::max(1.0, exact)) {
            return static_cast<std::size_t>(n);
        }
        return static_cast<std::size_t>(std::ceil(exact));
    }
};

struct BuzzParams {
    int repeat_count = 30;
    double onset_interval = 0.030;

    void validate(const ChirpParams& chirp) const
    {
        if (repeat_count < 1) {
            throw ConfigError("buzz repeat_count must be at least 1");
        }
        if (!(onset_interval >= chirp.duration)) {
            throw ConfigError("buzz onset_interval must be at least the chirp duration");
        }
    }
};

struct BinauralBuffer {
    double sample_rate = 0.0;
    std::vector<double> left;
    std::vector<double> right;

    std::size_t frames() const { return left.size(); }
};

/// s[n] = A sin(2 pi (f0 t + (f1 - f0) t^2 / (2 T))), t = n / fs.
inline std::vector<double> linear_chirp(const ChirpParams& p)
{
    p.validate();
    std::vector<double> s(p.sample_count());
    const double k = (p.f_end - p.f_start) / (2.0 * p.duration);
    for (std::size_t n = 0; n < s.size(); ++n) {
        double t = static_cast<double>(n) / p.sample_rate;
        s[n] = p.amplitude * std::sin(2.0 * std::numbers::pi * (p.f_start * t + k * t * t));
    }
    return s;
}

/// Full linear convolution via FFT; length a + b - 1.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw ValidationError("convolution inputs must be non-empty");
    }
    const std::size_t out = a.size() + b.size() - 1;
    std::size_t n = 1;
    while (n < out) {
        n <<= 1;
    }
    std::vector<double> pa(n, 0.0), pb(n, 0.0);
    std::copy(a.begin(), a.end(), pa.begin());
    std::copy(b.begin(), b.end(), pb.begin());
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> fa, fb;
    fft.fwd(fa, pa);
    fft.fwd(fb, pb);
    for (std::size_t i = 0; i < fa.size(); ++i) {
        fa[i] *= fb[i];
    }
    std::vector<double> y;
    fft.inv(y, fa);
    y.resize(out);
    return y;
}

/// Onset sample of pulse k.
inline std::size_t onset_sample(int k, double interval, double sample_rate)
{
    return static_cast<std::size_t>(std::llround(static_cast<double>(k) * interval * sample_rate));
}

/// Sums repeat_count copies of pulse at k * onset_interval; overlapping tails add.
inline std::vector<double> buzz_train(std::span<const double> pulse, const BuzzParams& p, double sample_rate)
{
    if (p.repeat_count < 1 || !(p.onset_interval > 0.0) || !(sample_rate > 0.0)) {
        throw ConfigError("buzz needs repeat_count >= 1 and positive interval and rate");
    }
    std::size_t last = onset_sample(p.repeat_count - 1, p.onset_interval, sample_rate);
    std::vector<double> out(last + pulse.size(), 0.0);
    for (int k = 0; k < p.repeat_count; ++k) {
        std::size_t at = onset_sample(k, p.onset_interval, sample_rate);
        for (std::size_t i = 0; i < pulse.size(); ++i) {
            out[at + i] += pulse[i];
        }
    }
    return out;
}

/// Unnormalized echo buzz for one cell: IR resampled to the chirp rate,
/// convolved with the chirp, then repeated.
inline BinauralBuffer raw_cell_echo(const irbank::IRBank& bank, std::uint32_t cell, const ChirpParams& chirp,
                                    const BuzzParams& buzz)
{
    chirp.validate();
    buzz.validate(chirp);
    const auto& ir = bank.at(cell);
    auto pulse = linear_chirp(chirp);
    auto ear = [&](const std::vector<float>& c) {
        std::vector<double> x(c.begin(), c.end());
        auto r = irbank::resample(x, ir.sample_rate, chirp.sample_rate);
        if (r.empty()) {
            r.assign(1, 0.0);
        }
        return buzz_train(convolve(pulse, r), buzz, chirp.sample_rate);
    };
    BinauralBuffer b;
    b.sample_rate = chirp.sample_rate;
    b.left = ear(ir.left);
    b.right = ear(ir.right);
    return b;
}

inline double peak_abs(const BinauralBuffer& b)
{
    double m = 0.0;
    for (double v : b.left) {
        m = std::max(m, std::abs(v));
    }
    for (double v : b.right) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

inline void scale(BinauralBuffer& b, double g)
{
    for (double& v : b.left) {
        v *= g;
    }
    for (double& v : b.right) {
        v *= g;
    }
}

/// Every cell of the bank, scaled by one common factor so the loudest sample
/// across the bank equals chirp.amplitude.
inline std::map<std::uint32_t, BinauralBuffer> render_bank(const irbank::IRBank& bank, const ChirpParams& chirp,
                                                           const BuzzParams& buzz)
{
    std::map<std::uint32_t, BinauralBuffer> out;
    double peak = 0.0;
    for (const auto& [cell, ir] : bank.entries) {
        auto b = raw_cell_echo(bank, cell, chirp, buzz);
        peak = std::max(peak, peak_abs(b));
        out.emplace(cell, std::move(b));
    }
    if (peak > 0.0) {
        for (auto& [cell, b] : out) {
            scale(b, chirp.amplitude / peak);
        }
    }
    return out;
}

/// One cell with bank-wide normalization. Renders the whole bank to find the
/// common gain; use render_bank when producing every cell.
inline BinauralBuffer render_cell_echo(const irbank::IRBank& bank, std::uint32_t cell, const ChirpParams& chirp,
                                       const BuzzParams& buzz)
{
    bank.at(cell);
    auto all = render_bank(bank, chirp, buzz);
    return std::move(all.at(cell));
}

inline std::int16_t to_pcm16(double x)
{
    double v = std::round(std::clamp(x, -1.0, 1.0) * 32767.0);
    return static_cast<std::int16_t>(v);
}

/// RIFF/WAVE, PCM 16-bit stereo.
inline Bytes encode_wav(const BinauralBuffer& b)
{
    if (b.left.size() != b.right.size()) {
        throw ValidationError("channel lengths differ");
    }
    if (!(b.sample_rate > 0.0)) {
        throw ValidationError("sample rate must be positive");
    }
    const auto rate = static_cast<std::uint32_t>(std::llround(b.sample_rate));
    const auto data_bytes = static_cast<std::uint32_t>(b.frames() * 4);
    ByteWriter w;
    w.raw(std::string_view("RIFF"));
    w.u32(36 + data_bytes);
    w.raw(std::string_view("WAVE"));
    w.raw(std::string_view("fmt "));
    w.u32(16);
    w.u16(1);
    w.u16(2);
    w.u32(rate);
    w.u32(rate * 4);
    w.u16(4);
    w.u16(16);
    w.raw(std::string_view("data"));
    w.u32(data_bytes);
    for (std::size_t i = 0; i < b.frames(); ++i) {
        w.i16(to_pcm16(b.left[i]));
        w.i16(to_pcm16(b.right[i]));
    }
    return std::move(w).take();
}

/// Reads 16-bit PCM mono or stereo; mono is duplicated to both channels.
inline BinauralBuffer decode_wav(std::span<const std::uint8_t> data)
{
    ByteReader r(data);
    auto tag = [&](std::string_view want) {
        auto at = r.offset();
        auto t = r.raw(4);
        if (std::string_view(reinterpret_cast<const char*>(t.data()), 4) != want) {
            throw ParseError("expected '" + std::string(want) + "' chunk", at);
        }
    };
    tag("RIFF");
    r.u32();
    tag("WAVE");
    std::uint16_t channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    for (;;) {
        auto at = r.offset();
        auto id = r.raw(4);
        auto size = r.u32();
        std::string_view name(reinterpret_cast<const char*>(id.data()), 4);
        if (name == "fmt ") {
            if (size < 16) {
                throw ParseError("fmt chunk too short", at);
            }
            auto format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32();
            r.u16();
            bits = r.u16();
            r.raw(size - 16 + (size & 1));
            if (format != 1 || bits != 16 || channels < 1 || channels > 2) {
                throw ParseError("only 16-bit PCM mono or stereo is supported", at);
            }
            have_fmt = true;
        } else if (name == "data") {
            if (!have_fmt) {
                throw ParseError("data chunk before fmt chunk", at);
            }
            std::size_t frames = size / (2u * channels);
            BinauralBuffer b;
            b.sample_rate = rate;
            b.left.resize(frames);
            b.right.resize(frames);
            for (std::size_t i = 0; i < frames; ++i) {
                b.left[i] = r.i16() / 32767.0;
                b.right[i] = channels == 2 ? r.i16() / 32767.0 : b.left[i];
            }
            return b;
        } else {
            r.raw(size + (size & 1));
        }
    }
}

} // namespace echotrain::synth
