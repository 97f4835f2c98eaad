#include "tcdrguard/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tcdr::sim {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// Phase shifts A, B, C: balanced set, B lags A by 120 degrees.
constexpr double phase_shift(int phase) { return -kTwoPi / 3.0 * phase; }

} // namespace

void SystemConfig::validate() const {
    if (sampling_rate_hz <= 0 || nominal_frequency_hz <= 0)
        throw ConfigError("sampling rate and nominal frequency must be positive");
    if (load_levels_mw.empty()) throw ConfigError("load_levels must be non-empty");
    for (double l : load_levels_mw)
        if (l <= 0) throw ConfigError("load levels must be positive");
    if (rated_load_mw <= 0 || rated_primary_in_a <= 0)
        throw ConfigError("rated load and rated current must be positive");
    if (turns_ratio <= 0 || ct_ratio_in <= 0 || ct_ratio_out <= 0)
        throw ConfigError("turns ratio and CT ratios must be positive");
    if (window_pre_samples < 1 || window_pre_samples > kWindowSamples - 1)
        throw ConfigError("window_pre_samples must be in [1, 31]");
}

int FaultSpec::faulted_phase_count() const {
    return static_cast<int>(faulted_phases[0]) + static_cast<int>(faulted_phases[1]) +
           static_cast<int>(faulted_phases[2]);
}

void FaultSpec::validate() const {
    const int n = faulted_phase_count();
    if (n == 0) throw ConfigError("fault must involve at least one phase");
    const int expected = fault_type == FaultType::OnePhaseGround   ? 1
                         : fault_type == FaultType::TwoPhaseGround ? 2
                                                                   : 3;
    if (n != expected) throw ConfigError("faulted phase count does not match fault type");
    if (fault_current_multiple < 1.0) throw ConfigError("fault_current_multiple must be >= 1");
    if (dc_offset_time_constant_s <= 0) throw ConfigError("dc time constant must be positive");
    if (output_side_retention < 0 || output_side_retention > 1)
        throw ConfigError("output_side_retention must be in [0, 1]");
}

size_t SignalTrace::nearest_index(double t) const {
    const double raw = (t - t0_s) * sampling_rate_hz;
    const long long idx = std::llround(raw);
    if (idx < 0 || static_cast<size_t>(idx) >= size())
        throw std::out_of_range("time outside trace span");
    return static_cast<size_t>(idx);
}

void SignalTrace::validate() const {
    const size_t n = samples[0].size();
    if (n < static_cast<size_t>(kWindowSamples))
        throw DataError("trace shorter than one window");
    for (const auto& ch : samples) {
        if (ch.size() != n) throw DataError("trace channels have unequal lengths");
        for (double v : ch)
            if (!std::isfinite(v)) throw DataError("trace contains non-finite sample");
    }
}

std::optional<double> SignalTrace::first_marker(const std::string& kind) const {
    for (const auto& m : event_markers)
        if (m.kind == kind) return m.time_s;
    return std::nullopt;
}

void MeasurementWindow::validate() const {
    if (trigger_index < 0 || trigger_index >= kWindowSamples)
        throw DataError("trigger_index outside window");
    for (const auto& row : values)
        for (double v : row)
            if (!std::isfinite(v)) throw DataError("window contains non-finite value");
}

uint64_t MeasurementWindow::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    const uint8_t lb = static_cast<uint8_t>(label);
    h = fnv1a64(&lb, 1, h);
    for (const auto& row : values)
        for (double v : row) {
            uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            h = fnv1a64(&bits, sizeof(bits), h);
        }
    return h;
}

double per_unit_base_in_a(const SystemConfig& cfg) {
    return std::sqrt(2.0) * cfg.rated_secondary_in_a();
}

double per_unit_base_out_a(const SystemConfig& cfg) {
    return std::sqrt(2.0) * cfg.rated_secondary_out_a();
}

double per_unit(const SystemConfig& cfg, int channel, double sample_a) {
    return sample_a / (channel < 3 ? per_unit_base_in_a(cfg) : per_unit_base_out_a(cfg));
}

SignalTrace simulate_steady_state(const SystemConfig& cfg, double load_mw, double duration_s) {
    cfg.validate();
    if (load_mw <= 0) throw ConfigError("load must be positive");
    if (duration_s < 2.0 / cfg.nominal_frequency_hz)
        throw ConfigError("duration must cover at least two fundamental cycles");

    const size_t n = static_cast<size_t>(std::llround(duration_s * cfg.sampling_rate_hz));
    const double w = kTwoPi * cfg.nominal_frequency_hz;
    const double load_pu = load_mw / cfg.rated_load_mw;
    const double amp_in = load_pu * per_unit_base_in_a(cfg);
    const double amp_out = load_pu * per_unit_base_out_a(cfg);

    SignalTrace trace;
    trace.sampling_rate_hz = cfg.sampling_rate_hz;
    for (auto& ch : trace.samples) ch.resize(n);
    for (size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / cfg.sampling_rate_hz;
        for (int p = 0; p < 3; ++p) {
            const double c = std::cos(w * t + phase_shift(p));
            trace.samples[p][i] = amp_in * c;
            trace.samples[p + 3][i] = amp_out * c;
        }
    }
    return trace;
}

SignalTrace simulate_fault(const SystemConfig& cfg, double load_mw, const FaultSpec& fault,
                           double duration_s) {
    fault.validate();
    SignalTrace trace = simulate_steady_state(cfg, load_mw, duration_s);
    if (fault.inception_time_s < trace.t0_s || fault.inception_time_s >= trace.end_time())
        throw ConfigError("fault inception outside trace span");

    const double w = kTwoPi * cfg.nominal_frequency_hz;
    const double load_pu = load_mw / cfg.rated_load_mw;
    const double amp_in = load_pu * per_unit_base_in_a(cfg);
    // Fault current lags by the source impedance angle.
    const double fault_angle = -std::arg(cfg.source_impedance_pu);
    const double amp_fault = fault.fault_current_multiple * amp_in;
    const size_t n = trace.size();
    const size_t i0 = trace.nearest_index(fault.inception_time_s);

    for (int p = 0; p < 3; ++p) {
        if (!fault.faulted_phases[p]) continue;
        const double t_inc = trace.time_at(i0);
        // DC offset keeps the input-side current continuous at inception.
        const double pre = trace.samples[p][i0];
        const double ac_at_inc = amp_fault * std::cos(w * t_inc + phase_shift(p) + fault_angle);
        const double dc0 = pre - ac_at_inc;
        for (size_t i = i0; i < n; ++i) {
            const double t = trace.time_at(i);
            const double dc = dc0 * std::exp(-(t - t_inc) / fault.dc_offset_time_constant_s);
            trace.samples[p][i] = amp_fault * std::cos(w * t + phase_shift(p) + fault_angle) + dc;
            trace.samples[p + 3][i] *= fault.output_side_retention;
        }
    }
    trace.event_markers.push_back({trace.time_at(i0), "FAULT"});
    return trace;
}

MeasurementWindow capture_window(const SignalTrace& trace, double trigger_time,
                                 const SystemConfig& cfg, std::optional<Label> label,
                                 const std::string& scenario_id) {
    const int pre = static_cast<int>(cfg.window_pre_samples);
    const long long k = std::llround((trigger_time - trace.t0_s) * trace.sampling_rate_hz);
    const long long first = k - pre;
    const long long last = k + (kWindowSamples - 1 - pre);
    if (k < 0 || static_cast<size_t>(k) >= trace.size() || first < 0 ||
        static_cast<size_t>(last) >= trace.size())
        throw std::out_of_range("window around trigger does not fit inside trace");

    MeasurementWindow win;
    win.trigger_index = pre;
    win.scenario_id = scenario_id;
    win.source = WindowSource::Simulated;
    if (label) {
        win.label = *label;
    } else {
        win.label = trace.first_marker("ATTACK") ? Label::Attack : Label::Fault;
    }
    for (int t = 0; t < kWindowSamples; ++t)
        for (int c = 0; c < kChannels; ++c)
            win.values[t][c] = trace.samples[c][static_cast<size_t>(first + t)];
    return win;
}

} // namespace tcdr::sim
