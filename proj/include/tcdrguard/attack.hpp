#pragma once

#include "tcdrguard/sim.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace tcdr::attack {

enum class AttackKind : uint8_t {
    InjectArbitrary,
    Replay,
    TapManipulation,
    TsaPlusFdia,
};

enum class Side : uint8_t { Input, Output };

const char* to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);
const char* to_string(Side s);
Side side_from_string(const std::string& s);

// Parametric description of one measurement-stream manipulation. Only the
// fields relevant to `kind` may be set; validate() enforces that.
struct AttackSpec {
    AttackKind kind = AttackKind::InjectArbitrary;
    double onset_time_s = 1.01;
    Side target_side = Side::Input;
    // InjectArbitrary: attacker-chosen peak amperes per phase (A, B, C).
    std::optional<std::array<double, 3>> magnitude_profile_a;
    // Replay: id of the source scenario, for catalog bookkeeping.
    std::optional<std::string> replay_source;
    // TapManipulation: ratio delta, |delta| in (0, 0.3].
    std::optional<double> tap_shift;
    // TsaPlusFdia
    std::optional<double> tsa_delay_ms;
    AttackKind tsa_payload = AttackKind::Replay;

    void validate() const;
};

struct NoiseSpec {
    double snr_db = 30.0;
    uint64_t seed = 0;

    void validate() const;
};

// From onset, targeted-side channels become attacker sinusoids with the
// profile's amplitudes, phase-continuous with the legitimate signal. The
// other side is untouched.
sim::SignalTrace inject_arbitrary(const sim::SignalTrace& trace, const AttackSpec& spec);

// From onset, targeted-side channels are copied from fault_trace starting
// at its FAULT marker. Sampling rates must match and the fault trace must
// cover the remaining span.
sim::SignalTrace inject_replay(const sim::SignalTrace& trace, const sim::SignalTrace& fault_trace,
                               const AttackSpec& spec);

// From onset, output-side channels scale by (1 + tap_shift).
sim::SignalTrace inject_tap_manipulation(const sim::SignalTrace& trace, const AttackSpec& spec);

// Output side delayed by tsa_delay_ms (fractional-sample linear
// interpolation, edge-held at the start), then the FDIA payload applies.
sim::SignalTrace inject_tsa_plus_fdia(const sim::SignalTrace& trace, const AttackSpec& fdia,
                                      double tsa_delay_ms,
                                      const sim::SignalTrace* replay_source = nullptr);

// Delay one side of a trace without marking an attack; building block for
// the TSA transform and its calibration tests.
sim::SignalTrace time_shift_side(const sim::SignalTrace& trace, Side side, double delay_ms);

// Additive white Gaussian noise calibrated per channel:
// noise variance = mean-square signal power / 10^(snr_db/10).
sim::SignalTrace add_awgn(const sim::SignalTrace& trace, const NoiseSpec& noise);
sim::MeasurementWindow add_awgn(const sim::MeasurementWindow& window, const NoiseSpec& noise);

} // namespace tcdr::attack
