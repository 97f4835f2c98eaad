#pragma once

#include "tcdrguard/sim.hpp"

#include <array>
#include <optional>
#include <span>

namespace tcdr::relay {

struct Phasor {
    double magnitude = 0.0;   // peak amperes (or per-unit, caller's base)
    double angle_rad = 0.0;   // in (-pi, pi]

    static Phasor from_rect(double re, double im);
    double real() const;
    double imag() const;
};

// Percentage-differential characteristic. Per-unit bases are peak amperes
// on each CT secondary; build them from a SystemConfig via make_settings.
struct RelaySettings {
    double pickup_pu = 0.3;
    double slope = 0.25;
    double estimation_window_s = 1.0 / 60.0;
    int trip_confirm_samples = 4;
    double base_peak_in_a = 0.0;  // 0 means inputs are already per-unit
    double base_peak_out_a = 0.0;
    double frequency_hz = 60.0;

    void validate() const;
};

RelaySettings make_settings(const sim::SystemConfig& cfg);

struct RelayDecision {
    std::array<bool, 3> per_phase_trip = {false, false, false};
    std::optional<double> trip_time_s;
    std::array<double, 3> differential_pu{};
    std::array<double, 3> restraint_pu{};

    bool any_trip() const {
        return per_phase_trip[0] || per_phase_trip[1] || per_phase_trip[2];
    }
};

// Result of scanning a full trace.
struct TraceScan {
    std::optional<double> trigger_time_s;  // confirmed trip
    std::optional<double> pickup_time_s;   // first unconfirmed exceedance
    RelayDecision at_trigger;              // decision at the confirming evaluation
};

// Fundamental phasor over the trailing estimation window, by least-squares
// fit of [1, cos, sin] at the exact nominal frequency. The DC basis keeps
// decaying offsets from leaking into the fundamental at the non-integer
// samples-per-cycle rate (26.67 at 1600/60 Hz).
Phasor estimate_phasor(std::span<const double> samples, double sampling_rate_hz,
                       double frequency_hz, double window_end_time_s = 0.0);

// Instantaneous characteristic: I_diff = |I_in + I_out|, I_rest =
// (|I_in| + |I_out|) / 2, trip when I_diff > max(pickup, slope * I_rest).
// Currents are measured into the zone, so through-load phasors cancel.
RelayDecision differential_decision(const std::array<Phasor, 3>& in_pu,
                                    const std::array<Phasor, 3>& out_pu,
                                    const RelaySettings& s,
                                    std::optional<double> eval_time_s = std::nullopt);

// Slide the phasor estimator over the trace (output side negated into the
// zone) and report the earliest confirmed trip. Stored traces carry both
// sides with load current in phase, per the simulator convention.
TraceScan scan_trace(const sim::SignalTrace& trace, const RelaySettings& s);

// Earliest confirmed trip time, or nullopt.
std::optional<double> detect_trigger(const sim::SignalTrace& trace, const RelaySettings& s);

} // namespace tcdr::relay
