#include "tcdrguard/relay.hpp"

#include "tcdrguard/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace tcdr::relay {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// 3x3 symmetric solve via Cramer's rule; the basis Gram matrix is well
// conditioned for any window of at least one fundamental period.
std::array<double, 3> solve3(const std::array<std::array<double, 3>, 3>& g,
                             const std::array<double, 3>& b) {
    const double det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) -
                       g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
                       g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    if (std::abs(det) < 1e-12) throw std::runtime_error("phasor basis is singular");
    std::array<std::array<double, 3>, 3> m = g;
    std::array<double, 3> x{};
    for (int col = 0; col < 3; ++col) {
        m = g;
        for (int r = 0; r < 3; ++r) m[r][col] = b[r];
        x[col] = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                  m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                  m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])) /
                 det;
    }
    return x;
}

} // namespace

Phasor Phasor::from_rect(double re, double im) {
    Phasor p;
    p.magnitude = std::hypot(re, im);
    p.angle_rad = p.magnitude > 0 ? std::atan2(im, re) : 0.0;
    if (p.angle_rad <= -M_PI) p.angle_rad = M_PI;
    return p;
}

double Phasor::real() const { return magnitude * std::cos(angle_rad); }
double Phasor::imag() const { return magnitude * std::sin(angle_rad); }

void RelaySettings::validate() const {
    if (pickup_pu <= 0) throw ConfigError("pickup must be positive");
    if (slope <= 0 || slope >= 1) throw ConfigError("slope must be in (0, 1)");
    if (trip_confirm_samples < 1) throw ConfigError("trip_confirm_samples must be >= 1");
    if (estimation_window_s <= 0) throw ConfigError("estimation window must be positive");
      if (frequency_hz <= 0) throw ConfigError("frequency must be positive");
}

RelaySettings make_settings(const sim::SystemConfig& cfg) {
    RelaySettings s;
    s.frequency_hz = cfg.nominal_frequency_hz;
    s.estimation_window_s = 1.0 / cfg.nominal_frequency_hz;
    s.base_peak_in_a = sim::per_unit_base_in_a(cfg);
    s.base_peak_out_a = sim::per_unit_base_out_a(cfg);
    return s;
}

Phasor estimate_phasor(std::span<const double> samples, double sampling_rate_hz,
                       double frequency_hz, double window_end_time_s) {
    if (sampling_rate_hz <= 0 || frequency_hz <= 0)
        throw ConfigError("rates must be positive");
    const size_t need =
        static_cast<size_t>(std::llround(sampling_rate_hz / frequency_hz));
    if (samples.size() < need)
        throw DataError("sample window shorter than one fundamental period");

    // Model x(t) = d + a*cos(wt) + b*sin(wt) over the trailing period.
    const size_t n = need;
    const double w = kTwoPi * frequency_hz;
    const size_t off = samples.size() - n;
    std::array<std::array<double, 3>, 3> g{};
    std::array<double, 3> rhs{};
    for (size_t i = 0; i < n; ++i) {
        const double t =
            window_end_time_s - static_cast<double>(n - 1 - i) / sampling_rate_hz;
        const double c = std::cos(w * t);
        const double s = std::sin(w * t);
        const double x = samples[off + i];
        const double basis[3] = {1.0, c, s};
        for (int r = 0; r < 3; ++r) {
            rhs[r] += basis[r] * x;
            for (int cidx = r; cidx < 3; ++cidx) g[r][cidx] += basis[r] * basis[cidx];
        }
    }
    g[1][0] = g[0][1];
    g[2][0] = g[0][2];
    g[2][1] = g[1][2];
    const auto coef = solve3(g, rhs);
    // x ~= M*cos(wt + phi) with M*cos(phi) = a, -M*sin(phi) = b.
    return Phasor::from_rect(coef[1], -coef[2]);
}

RelayDecision differential_decision(const std::array<Phasor, 3>& in_pu,
                                    const std::array<Phasor, 3>& out_pu,
                                    const RelaySettings& s,
                                    std::optional<double> eval_time_s) {
    s.validate();
    RelayDecision d;
    for (int p = 0; p < 3; ++p) {
        const double re = in_pu[p].real() + out_pu[p].real();
        const double im = in_pu[p].imag() + out_pu[p].imag();
        d.differential_pu[p] = std::hypot(re, im);
        d.restraint_pu[p] = 0.5 * (in_pu[p].magnitude + out_pu[p].magnitude);
        d.per_phase_trip[p] =
            d.differential_pu[p] > std::max(s.pickup_pu, s.slope * d.restraint_pu[p]);
    }
    if (d.any_trip()) d.trip_time_s = eval_time_s.value_or(0.0);
    return d;
}

TraceScan scan_trace(const sim::SignalTrace& trace, const RelaySettings& s) {
    s.validate();
    const size_t n = trace.size();
    const size_t win =
        static_cast<size_t>(std::llround(trace.sampling_rate_hz / s.frequency_hz));
    if (n < win + static_cast<size_t>(s.trip_confirm_samples))
        throw DataError("trace too short for estimation window plus confirmation");

    const double base_in = s.base_peak_in_a > 0 ? s.base_peak_in_a : 1.0;
    const double base_out = s.base_peak_out_a > 0 ? s.base_peak_out_a : 1.0;

    // Precompute the basis once; per window the fit reduces to three dot
    // products per channel plus a closed-form 3x3 solve. Same least-squares
    // fit as estimate_phasor.
    const double w = kTwoPi * s.frequency_hz;
    std::vector<double> cosv(n), sinv(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = trace.time_at(i);
        cosv[i] = std::cos(w * t);
        sinv[i] = std::sin(w * t);
    }
    std::array<std::vector<double>, 6> scaled;
    for (int c = 0; c < 6; ++c) {
        scaled[c].resize(n);
        // Output CT measures into the zone: stored load current flips sign.
        const double f = c < 3 ? 1.0 / base_in : -1.0 / base_out;
        for (size_t i = 0; i < n; ++i) scaled[c][i] = f * trace.samples[c][i];
    }

    std::array<std::array<double, 3>, 3> g{};
    const auto fit = [&](const double* x, size_t start) {
        const std::array<double, 3> rhs = {kern::sum_f64(x + start, win),
                                           kern::dot_f64(x + start, cosv.data() + start, win),
                                           kern::dot_f64(x + start, sinv.data() + start, win)};
        const auto coef = solve3(g, rhs);
        return Phasor::from_rect(coef[1], -coef[2]);
    };

    TraceScan scan;
    std::array<int, 3> consecutive = {0, 0, 0};
    for (size_t end = win - 1; end < n; ++end) {
        const double t_end = trace.time_at(end);
        const size_t start = end - win + 1;
        const double* cw = cosv.data() + start;
        const double* sw = sinv.data() + start;
        g[0][0] = static_cast<double>(win);
        g[0][1] = g[1][0] = kern::sum_f64(cw, win);
        g[0][2] = g[2][0] = kern::sum_f64(sw, win);
        g[1][1] = kern::sumsq_f64(cw, win);
        g[1][2] = g[2][1] = kern::dot_f64(cw, sw, win);
        g[2][2] = kern::sumsq_f64(sw, win);
        std::array<Phasor, 3> in{}, out{};
        for (int p = 0; p < 3; ++p) {
            in[p] = fit(scaled[p].data(), start);
            out[p] = fit(scaled[p + 3].data(), start);
        }
        const RelayDecision d = differential_decision(in, out, s, t_end);
        if (d.any_trip() && !scan.pickup_time_s) scan.pickup_time_s = t_end;
        bool confirmed = false;
        for (int p = 0; p < 3; ++p) {
            consecutive[p] = d.per_phase_trip[p] ? consecutive[p] + 1 : 0;
            if (consecutive[p] >= s.trip_confirm_samples) confirmed = true;
        }
        if (confirmed) {
            scan.trigger_time_s = t_end;
            scan.at_trigger = d;
            return scan;
        }
    }
    return scan;
}

std::optional<double> detect_trigger(const sim::SignalTrace& trace, const RelaySettings& s) {
    return scan_trace(trace, s).trigger_time_s;
}

} // namespace tcdr::relay
