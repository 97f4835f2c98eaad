#include "tcdrguard/attack.hpp"

#include "tcdrguard/relay.hpp"

#include <cmath>
#include <span>

namespace tcdr::attack {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

int first_channel(Side s) { return s == Side::Input ? 0 : 3; }

void require(bool cond, const char* msg) {
    if (!cond) throw ConfigError(msg);
}

} // namespace

const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::InjectArbitrary: return "INJECT_ARBITRARY";
        case AttackKind::Replay: return "REPLAY";
        case AttackKind::TapManipulation: return "TAP_MANIPULATION";
        case AttackKind::TsaPlusFdia: return "TSA_PLUS_FDIA";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "INJECT_ARBITRARY") return AttackKind::InjectArbitrary;
    if (s == "REPLAY") return AttackKind::Replay;
    if (s == "TAP_MANIPULATION") return AttackKind::TapManipulation;
    if (s == "TSA_PLUS_FDIA") return AttackKind::TsaPlusFdia;
    throw DataError("unknown attack kind: '" + s + "'");
}

const char* to_string(Side s) { return s == Side::Input ? "INPUT" : "OUTPUT"; }

Side side_from_string(const std::string& s) {
    if (s == "INPUT") return Side::Input;
    if (s == "OUTPUT") return Side::Output;
    throw DataError("unknown side: '" + s + "'");
}

void AttackSpec::validate() const {
    const bool has_profile = magnitude_profile_a.has_value();
    const bool has_replay = replay_source.has_value();
    const bool has_tap = tap_shift.has_value();
    const bool has_tsa = tsa_delay_ms.has_value();
    switch (kind) {
        case AttackKind::InjectArbitrary:
            require(has_profile && !has_tap && !has_tsa,
                    "INJECT_ARBITRARY takes exactly magnitude_profile");
            break;
        case AttackKind::Replay:
            require(!has_profile && !has_tap && !has_tsa,
                    "REPLAY takes only a replay source");
            break;
        case AttackKind::TapManipulation:
            require(has_tap && !has_profile && !has_replay && !has_tsa,
                    "TAP_MANIPULATION takes exactly tap_shift");
            break;
        case AttackKind::TsaPlusFdia:
            require(has_tsa, "TSA_PLUS_FDIA requires tsa_delay_ms");
            require(*tsa_delay_ms > 0, "tsa_delay_ms must be positive");
            require(tsa_payload != AttackKind::TsaPlusFdia,
                    "TSA payload must be one of the three FDIA kinds");
            break;
    }
    if (has_tap) {
        const double t = std::abs(*tap_shift);
        require(t > 0 && t <= 0.3, "|tap_shift| must be in (0, 0.3]");
    }
}

void NoiseSpec::validate() const {
    if (!std::isfinite(snr_db) || snr_db <= 0) throw ConfigError("snr_db must be finite and > 0");
}

sim::SignalTrace inject_arbitrary(const sim::SignalTrace& trace, const AttackSpec& spec) {
    spec.validate();
    require(spec.kind == AttackKind::InjectArbitrary, "spec kind mismatch");
    const size_t onset = trace.nearest_index(spec.onset_time_s);
    const auto& profile = *spec.magnitude_profile_a;

    sim::SignalTrace out = trace;
    const int ch0 = first_channel(spec.target_side);
    const double w = kTwoPi * 60.0; // grid fundamental
    for (int p = 0; p < 3; ++p) {
        // Phase-continuous takeover: estimate the legitimate phasor over the
        // cycle preceding onset, then drive the channel at that phase with
        // the attacker's amplitude.
        const auto& src = trace.samples[ch0 + p];
        const relay::Phasor ph = relay::estimate_phasor(
            std::span<const double>(src.data(), onset), trace.sampling_rate_hz, 60.0,
            trace.time_at(onset - 1));
        for (size_t i = onset; i < trace.size(); ++i) {
            const double t = trace.time_at(i);
            out.samples[ch0 + p][i] = profile[p] * std::cos(w * t + ph.angle_rad);
        }
    }
    out.event_markers.push_back({trace.time_at(onset), "ATTACK"});
    return out;
}

sim::SignalTrace inject_replay(const sim::SignalTrace& trace, const sim::SignalTrace& fault_trace,
                               const AttackSpec& spec) {
    require(spec.kind == AttackKind::Replay, "spec kind mismatch");
    spec.validate();
    if (fault_trace.sampling_rate_hz != trace.sampling_rate_hz)
        throw DataError("replay source sampling rate mismatch");
    const size_t onset = trace.nearest_index(spec.onset_time_s);
    const auto marker = fault_trace.first_marker("FAULT");
    if (!marker) throw DataError("replay source has no FAULT marker");
    const size_t src0 = fault_trace.nearest_index(*marker);
    const size_t needed = trace.size() - onset;
    if (fault_trace.size() - src0 < needed)
        throw DataError("replay source too short to cover the attacked span");

    sim::SignalTrace out = trace;
    const int ch0 = first_channel(spec.target_side);
    for (int p = 0; p < 3; ++p)
        for (size_t i = 0; i < needed; ++i)
            out.samples[ch0 + p][onset + i] = fault_trace.samples[ch0 + p][src0 + i];
    out.event_markers.push_back({trace.time_at(onset), "ATTACK"});
    return out;
}

sim::SignalTrace inject_tap_manipulation(const sim::SignalTrace& trace, const AttackSpec& spec) {
    require(spec.kind == AttackKind::TapManipulation, "spec kind mismatch");
    spec.validate();
    const size_t onset = trace.nearest_index(spec.onset_time_s);
    sim::SignalTrace out = trace;
    const double factor = 1.0 + *spec.tap_shift;
    for (int p = 3; p < 6; ++p)
        for (size_t i = onset; i < trace.size(); ++i) out.samples[p][i] *= factor;
    out.event_markers.push_back({trace.time_at(onset), "ATTACK"});
    return out;
}

sim::SignalTrace time_shift_side(const sim::SignalTrace& trace, Side side, double delay_ms) {
    if (delay_ms <= 0) throw ConfigError("delay must be positive");
    const double delay_samples = delay_ms * 1e-3 * trace.sampling_rate_hz;
    if (delay_samples >= static_cast<double>(trace.size()))
        throw ConfigError("delay exceeds trace span");

    sim::SignalTrace out = trace;
    const int ch0 = first_channel(side);
    const size_t whole = static_cast<size_t>(delay_samples);
    const double frac = delay_samples - static_cast<double>(whole);
    for (int p = 0; p < 3; ++p) {
        const auto& src = trace.samples[ch0 + p];
        auto& dst = out.samples[ch0 + p];
        for (size_t i = 0; i < trace.size(); ++i) {
            // y(t) = x(t - d), linearly interpolated, edge-held before t0.
            if (i < whole + 1) {
                dst[i] = src[0];
                continue;
            }
            const size_t j = i - whole;
            dst[i] = src[j] * (1.0 - frac) + src[j - 1] * frac;
        }
    }
    return out;
}

sim::SignalTrace inject_tsa_plus_fdia(const sim::SignalTrace& trace, const AttackSpec& fdia,
                                      double tsa_delay_ms, const sim::SignalTrace* replay_source) {
    if (tsa_delay_ms <= 0) throw ConfigError("tsa_delay_ms must be positive");
    sim::SignalTrace shifted = time_shift_side(trace, Side::Output, tsa_delay_ms);
    switch (fdia.kind) {
        case AttackKind::InjectArbitrary: return inject_arbitrary(shifted, fdia);
        case AttackKind::Replay:
            if (!replay_source) throw ConfigError("replay payload requires a source trace");
            return inject_replay(shifted, *replay_source, fdia);
        case AttackKind::TapManipulation: return inject_tap_manipulation(shifted, fdia);
        case AttackKind::TsaPlusFdia: break;
    }
    throw ConfigError("TSA payload must be one of the three FDIA kinds");
}

} // namespace tcdr::attack
