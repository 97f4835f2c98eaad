#pragma once

#include "tcdrguard/common.hpp"

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tcdr::sim {

inline constexpr int kWindowSamples = 32;
inline constexpr int kChannels = 6; // A_in, B_in, C_in, A_out, B_out, C_out

// Two-source analytic surrogate of a protected two-winding transformer.
// Currents are CT-secondary amperes; per-unit referral happens downstream.
struct SystemConfig {
    double nominal_frequency_hz = 60.0;
    double sampling_rate_hz = 1600.0;
    double rated_load_mw = 400.0;
    std::vector<double> load_levels_mw = {350, 352, 354, 356, 358, 360};
    double rated_primary_in_a = 400.0;   // RMS, input side at rated load
    double turns_ratio = 2.0;            // V_out / V_in; output current scales by 1/ratio
    double ct_ratio_in = 80.0;
    double ct_ratio_out = 40.0;
    std::complex<double> source_impedance_pu = {0.01, 0.1}; // sets fault current angle
    double window_pre_samples = 16;      // pre/post split of the 32-sample window

    void validate() const;

    double rated_secondary_in_a() const { return rated_primary_in_a / ct_ratio_in; }
    double rated_secondary_out_a() const {
        return rated_primary_in_a / turns_ratio / ct_ratio_out;
    }
};

enum class FaultType : uint8_t { OnePhaseGround, TwoPhaseGround, ThreePhase };

struct FaultSpec {
    FaultType fault_type = FaultType::ThreePhase;
    double inception_time_s = 1.01;
    std::array<bool, 3> faulted_phases = {true, true, true}; // A, B, C
    double fault_current_multiple = 8.0;                     // of load current, >= 1
    double dc_offset_time_constant_s = 0.02;
    double output_side_retention = 0.0; // fraction of pre-fault output current kept

    void validate() const;
    int faulted_phase_count() const;
};

struct EventMarker {
    double time_s;
    std::string kind; // "FAULT" or "ATTACK"
};

struct SignalTrace {
    // samples[ch][i], ch in channel order A_in..C_out
    std::array<std::vector<double>, kChannels> samples;
    double t0_s = 0.0;
    double sampling_rate_hz = 1600.0;
    std::vector<EventMarker> event_markers;

    size_t size() const { return samples[0].size(); }
    double time_at(size_t i) const { return t0_s + static_cast<double>(i) / sampling_rate_hz; }
    double end_time() const { return time_at(size() == 0 ? 0 : size() - 1); }
    size_t nearest_index(double t) const;
    void validate() const; // 6 columns, >= 32 samples, finite values

    std::optional<double> first_marker(const std::string& kind) const;
};

enum class WindowSource : uint8_t { Simulated, Ingested };

struct MeasurementWindow {
    // values[t][c], t-major, 32 x 6
    std::array<std::array<double, kChannels>, kWindowSamples> values{};
    Label label = Label::Fault;
    std::string scenario_id;
    int trigger_index = 0;
    WindowSource source = WindowSource::Simulated;

    void validate() const;
    uint64_t content_hash() const; // over values+label only (split-leakage checks)
};

// Balanced three-phase load flow; both sides referred to per-unit are equal.
SignalTrace simulate_steady_state(const SystemConfig& cfg, double load_mw, double duration_s);

// Steady state up to inception, then fault phasor + decaying DC on faulted
// input-side phases; output side collapses to cfg-declared retention.
SignalTrace simulate_fault(const SystemConfig& cfg, double load_mw, const FaultSpec& fault,
                           double duration_s);

// Cut the fixed 32 x 6 window around trigger_time (pre/post split from cfg).
// Label/scenario default from trace markers: any ATTACK marker wins, else FAULT.
MeasurementWindow capture_window(const SignalTrace& trace, double trigger_time,
                                 const SystemConfig& cfg,
                                 std::optional<Label> label = std::nullopt,
                                 const std::string& scenario_id = "");

// Per-unit referral of one channel's sample (peak-of-nominal base per side).
double per_unit(const SystemConfig& cfg, int channel, double sample_a);

// Per-side per-unit bases, as peak amperes on the CT secondary.
double per_unit_base_in_a(const SystemConfig& cfg);
double per_unit_base_out_a(const SystemConfig& cfg);

// --- serialization (External Interfaces) -------------------------------

// One line per window: scenario_id,label,trigger_index,v0..v191 (t-major).
std::string window_to_record(const MeasurementWindow& w);
MeasurementWindow window_from_record(const std::string& line);

// Columnar CSV of a trace for plotting: t,Ain,Bin,Cin,Aout,Bout,Cout.
void write_trace_csv(const SignalTrace& trace, const std::string& path);

} // namespace tcdr::sim
