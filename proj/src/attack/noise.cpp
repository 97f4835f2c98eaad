#include "tcdrguard/attack.hpp"

#include "tcdrguard/kernels.hpp"
#include "tcdrguard/rng.hpp"

#include <cmath>

namespace tcdr::attack {

namespace {

double noise_sigma(double mean_square_power, double snr_db, const char* what) {
    if (mean_square_power <= 0.0)
        throw DataError(std::string("SNR undefined: zero-power channel in ") + what);
    return std::sqrt(mean_square_power / std::pow(10.0, snr_db / 10.0));
}

} // namespace

sim::SignalTrace add_awgn(const sim::SignalTrace& trace, const NoiseSpec& noise) {
    noise.validate();
    sim::SignalTrace out = trace;
    for (int c = 0; c < sim::kChannels; ++c) {
        const auto& src = trace.samples[c];
        const double power = kern::sumsq_f64(src.data(), src.size()) /
                             static_cast<double>(src.size());
        const double sigma = noise_sigma(power, noise.snr_db, "trace");
        // Per-channel substream keeps results independent of channel order.
        Rng rng(derive_seed(noise.seed, static_cast<uint64_t>(c)));
        auto& dst = out.samples[c];
        for (double& v : dst) v += sigma * rng.gaussian();
    }
    return out;
}

sim::MeasurementWindow add_awgn(const sim::MeasurementWindow& window, const NoiseSpec& noise) {
    noise.validate();
    sim::MeasurementWindow out = window;
    for (int c = 0; c < sim::kChannels; ++c) {
        double power = 0.0;
        for (int t = 0; t < sim::kWindowSamples; ++t)
            power += window.values[t][c] * window.values[t][c];
        power /= sim::kWindowSamples;
        const double sigma = noise_sigma(power, noise.snr_db, "window");
        Rng rng(derive_seed(noise.seed, static_cast<uint64_t>(c)));
        for (int t = 0; t < sim::kWindowSamples; ++t)
            out.values[t][c] += sigma * rng.gaussian();
    }
    return out;
}

} // namespace tcdr::attack
