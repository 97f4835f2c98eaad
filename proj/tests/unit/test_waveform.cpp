#include <doctest.h>

#include "tcdrguard/relay.hpp"
#include "tcdrguard/sim.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

using namespace tcdr;
using namespace tcdr::sim;

namespace {

// Cross-correlation lag oracle: index of the maximum of sum_t a[t] * b[t+lag]
// over integer lags in [0, max_lag].
size_t xcorr_peak_lag(const std::vector<double>& a, const std::vector<double>& b, size_t max_lag) {
    size_t best = 0;
    double best_val = -1e300;
    for (size_t lag = 0; lag <= max_lag; ++lag) {
        double acc = 0;
        for (size_t t = 0; t + lag < b.size() && t < a.size(); ++t) acc += a[t] * b[t + lag];
        if (acc > best_val) {
            best_val = acc;
            best = lag;
        }
    }
    return best;
}

double rms(const std::vector<double>& x) {
    double acc = 0;
    for (double v : x) acc += v * v;
    return std::sqrt(acc / static_cast<double>(x.size()));
}

} // namespace

TEST_SUITE("waveform") {

TEST_CASE("steady state balances per-unit input and output") {
    SystemConfig cfg;
    const auto trace = simulate_steady_state(cfg, 350.0, 0.1);
    trace.validate();
    for (int p = 0; p < 3; ++p)
        for (size_t i = 0; i < trace.size(); ++i) {
            const double pu_in = per_unit(cfg, p, trace.samples[p][i]);
            const double pu_out = per_unit(cfg, p + 3, trace.samples[p + 3][i]);
            REQUIRE(std::abs(pu_in - pu_out) < 1e-9);
        }
}

TEST_CASE("phase B lags phase A by 120 degrees via cross-correlation") {
    SystemConfig cfg;
    // 1/180 s at 1600 Hz is 8.889 samples; sample at a rate where the lag is
    // integral so the peak is exact: 5400 Hz -> 30 samples per cycle.
    cfg.sampling_rate_hz = 5400.0;
    const auto trace = simulate_steady_state(cfg, 350.0, 0.5);
    // b(t) = a(t - 1/180) => correlating a[t] against b[t + lag] peaks at
    // lag = 1/180 s.
    const size_t lag = xcorr_peak_lag(trace.samples[0], trace.samples[1], 60);
    CHECK(lag == 30); // 1/180 s * 5400 Hz
}

TEST_CASE("load scaling is linear in amplitude") {
    SystemConfig cfg;
    const auto t350 = simulate_steady_state(cfg, 350.0, 0.1);
    const auto t360 = simulate_steady_state(cfg, 360.0, 0.1);
    const double ratio = rms(t360.samples[0]) / rms(t350.samples[0]);
    CHECK(std::abs(ratio - 360.0 / 350.0) < 1e-6);
}

TEST_CASE("three-phase fault trips the relay oracle on all phases") {
    SystemConfig cfg;
    FaultSpec fault;
    fault.fault_type = FaultType::ThreePhase;
    fault.faulted_phases = {true, true, true};
    fault.inception_time_s = 1.01;
    fault.fault_current_multiple = 8.0;
    const auto trace = simulate_fault(cfg, 350.0, fault, 1.3);
    REQUIRE(trace.first_marker("FAULT").has_value());

    const auto settings = relay::make_settings(cfg);
    const auto scan = relay::scan_trace(trace, settings);
    REQUIRE(scan.trigger_time_s.has_value());
    CHECK(*scan.trigger_time_s > fault.inception_time_s);
    CHECK(*scan.trigger_time_s <= fault.inception_time_s + 1.0 / 60.0);
    CHECK(scan.at_trigger.per_phase_trip[0]);
    CHECK(scan.at_trigger.per_phase_trip[1]);
    CHECK(scan.at_trigger.per_phase_trip[2]);
}

TEST_CASE("single-phase fault leaves healthy phases below pickup") {
    SystemConfig cfg;
    FaultSpec fault;
    fault.fault_type = FaultType::OnePhaseGround;
    fault.faulted_phases = {true, false, false};
    fault.fault_current_multiple = 6.0;
    const auto trace = simulate_fault(cfg, 352.0, fault, 1.3);

    const auto settings = relay::make_settings(cfg);
    const auto scan = relay::scan_trace(trace, settings);
    REQUIRE(scan.trigger_time_s.has_value());
    CHECK(scan.at_trigger.per_phase_trip[0]);
    CHECK_FALSE(scan.at_trigger.per_phase_trip[1]);
    CHECK_FALSE(scan.at_trigger.per_phase_trip[2]);
    CHECK(scan.at_trigger.differential_pu[1] < settings.pickup_pu);
    CHECK(scan.at_trigger.differential_pu[2] < settings.pickup_pu);
}

TEST_CASE("degenerate fault with unit multiple and no phase jump is a no-op") {
    SystemConfig cfg;
    cfg.source_impedance_pu = {0.1, 0.0}; // resistive: fault AC == load AC, no DC
    FaultSpec fault;
    fault.fault_type = FaultType::ThreePhase;
    fault.faulted_phases = {true, true, true};
    fault.fault_current_multiple = 1.0;
    fault.output_side_retention = 1.0;
    const auto faulted = simulate_fault(cfg, 350.0, fault, 1.3);
    const auto steady = simulate_steady_state(cfg, 350.0, 1.3);
    for (int c = 0; c < kChannels; ++c)
        for (size_t i = 0; i < steady.size(); ++i)
            REQUIRE(faulted.samples[c][i] == doctest::Approx(steady.samples[c][i]).epsilon(1e-12));
    CHECK_FALSE(relay::detect_trigger(faulted, relay::make_settings(cfg)).has_value());
}

TEST_CASE("dc offset magnitude decays monotonically") {
    SystemConfig cfg;
    FaultSpec fault;
    fault.fault_type = FaultType::OnePhaseGround;
    fault.faulted_phases = {true, false, false};
    fault.fault_current_multiple = 8.0;
    fault.inception_time_s = 1.004; // picked for a sizable offset
    fault.dc_offset_time_constant_s = 0.03;
    const auto trace = simulate_fault(cfg, 350.0, fault, 1.6);

    // Oracle: reconstruct the settled fault AC from the last cycle (DC long
    // gone), subtract it, and watch the residual envelope.
    const size_t n = trace.size();
    const auto ph = relay::estimate_phasor(trace.samples[0], trace.sampling_rate_hz, 60.0,
                                           trace.time_at(n - 1));
    const size_t i0 = trace.nearest_index(fault.inception_time_s);
    std::vector<double> residual;
    for (size_t i = i0; i < n; ++i) {
        const double ac =
            ph.magnitude * std::cos(2 * M_PI * 60.0 * trace.time_at(i) + ph.angle_rad);
        residual.push_back(std::abs(trace.samples[0][i] - ac));
    }
    REQUIRE(residual[0] > 0.5); // offset actually present
    // Track the decay until it reaches the AC reconstruction noise floor.
    const double floor_level = residual[0] * 1e-4;
    for (size_t i = 1; i < residual.size() && residual[i - 1] > floor_level; ++i)
        CHECK(residual[i] <= residual[i - 1] * (1 + 1e-9) + 1e-12);
}

TEST_CASE("capture_window splits around the trigger") {
    SystemConfig cfg;
    const auto trace = simulate_steady_state(cfg, 354.0, 0.2);

    SUBCASE("midpoint trigger gives trigger_index 16") {
        const auto w = capture_window(trace, 0.1, cfg);
        CHECK(w.trigger_index == 16);
        CHECK(w.label == Label::Fault);
    }
    SUBCASE("trigger near the start is a range error") {
        CHECK_THROWS_AS(capture_window(trace, trace.time_at(1), cfg), std::out_of_range);
    }
    SUBCASE("steady window keeps per-unit sides equal") {
        const auto w = capture_window(trace, 0.1, cfg);
        for (int t = 0; t < kWindowSamples; ++t)
            for (int p = 0; p < 3; ++p)
                CHECK(std::abs(per_unit(cfg, p, w.values[t][p]) -
                               per_unit(cfg, p + 3, w.values[t][p + 3])) < 1e-9);
    }
    SUBCASE("capture is deterministic") {
        const auto a = capture_window(trace, 0.1, cfg);
        const auto b = capture_window(trace, 0.1, cfg);
        CHECK(a.content_hash() == b.content_hash());
        CHECK(std::memcmp(a.values.data(), b.values.data(), sizeof(a.values)) == 0);
    }
}

TEST_CASE("window records round-trip exactly") {
    SystemConfig cfg;
    FaultSpec fault;
    fault.fault_type = FaultType::TwoPhaseGround;
    fault.faulted_phases = {true, true, false};
    const auto trace = simulate_fault(cfg, 358.0, fault, 1.3);
    auto w = capture_window(trace, fault.inception_time_s, cfg, Label::Fault, "scn-0007");

    const std::string rec = window_to_record(w);
    const auto back = window_from_record(rec);
    CHECK(back.scenario_id == w.scenario_id);
    CHECK(back.label == w.label);
    CHECK(back.trigger_index == w.trigger_index);
    for (int t = 0; t < kWindowSamples; ++t)
        for (int c = 0; c < kChannels; ++c) REQUIRE(back.values[t][c] == w.values[t][c]);
}

TEST_CASE("trace csv export has the plotting header") {
    SystemConfig cfg;
    const auto trace = simulate_steady_state(cfg, 350.0, 0.05);
    const auto path = std::filesystem::temp_directory_path() / "tcdr_trace_test.csv";
    write_trace_csv(trace, path.string());
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,Ain,Bin,Cin,Aout,Bout,Cout");
    std::filesystem::remove(path);
}

TEST_CASE("input validation") {
    SystemConfig cfg;
    CHECK_THROWS_AS(simulate_steady_state(cfg, -1.0, 0.1), ConfigError);
    CHECK_THROWS_AS(simulate_steady_state(cfg, 350.0, 0.01), ConfigError);
    FaultSpec fault;
    fault.fault_type = FaultType::ThreePhase;
    fault.faulted_phases = {true, false, false};
    CHECK_THROWS_AS(simulate_fault(cfg, 350.0, fault, 1.3), ConfigError);
    fault.faulted_phases = {true, true, true};
    fault.inception_time_s = 9.0;
    CHECK_THROWS_AS(simulate_fault(cfg, 350.0, fault, 1.3), ConfigError);
}

} // TEST_SUITE
