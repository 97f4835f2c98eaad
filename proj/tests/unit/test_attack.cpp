#include <doctest.h>

#include "tcdrguard/attack.hpp"
#include "tcdrguard/kernels.hpp"
#include "tcdrguard/relay.hpp"
#include "tcdrguard/sim.hpp"

#include <cmath>
#include <cstring>

using namespace tcdr;
using namespace tcdr::attack;

namespace {

sim::SystemConfig default_cfg() { return sim::SystemConfig{}; }

sim::SignalTrace steady(double load = 350.0, double dur = 1.3) {
    return sim::simulate_steady_state(default_cfg(), load, dur);
}

sim::SignalTrace fault_trace(double load = 350.0) {
    sim::FaultSpec fault;
    fault.fault_type = sim::FaultType::ThreePhase;
    fault.faulted_phases = {true, true, true};
    fault.inception_time_s = 1.005;
    fault.fault_current_multiple = 8.0;
    return sim::simulate_fault(default_cfg(), load, fault, 1.4);
}

// Bandlimited fractional interpolation (Hann-windowed sinc, +-8 taps).
// Linear interpolation is unusable here: its amplitude dip at half-sample
// offsets exceeds the correlation peak curvature and biases the argmax.
double sinc_interp(const std::vector<double>& x, double pos) {
    const int center = static_cast<int>(std::floor(pos));
    double acc = 0;
    for (int k = center - 8; k <= center + 9; ++k) {
        if (k < 0 || k >= static_cast<int>(x.size())) continue;
        const double d = pos - k;
        const double s = d == 0.0 ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
        const double wnd = 0.5 * (1.0 + std::cos(M_PI * d / 9.0));
        acc += x[k] * s * wnd;
    }
    return acc;
}

// Sub-sample cross-correlation lag oracle on a 16x upsampled lag grid.
double xcorr_frac_lag(const std::vector<double>& ref, const std::vector<double>& delayed,
                      double max_lag_samples) {
    double best_lag = 0, best_val = -1e300;
    const size_t lo = 100, hi = ref.size() - 100; // fixed overlap for all lags
    for (double lag = 0.0; lag <= max_lag_samples; lag += 1.0 / 16.0) {
        double acc = 0;
        for (size_t i = lo; i < hi; ++i)
            acc += sinc_interp(ref, static_cast<double>(i) - lag) * delayed[i];
        if (acc > best_val) {
            best_val = acc;
            best_lag = lag;
        }
    }
    return best_lag;
}

double channel_power(const std::vector<double>& x) {
    return kern::sumsq_f64(x.data(), x.size()) / static_cast<double>(x.size());
}

} // namespace

TEST_SUITE("attack") {

TEST_CASE("arbitrary injection reproducing the legitimate signal stays silent") {
    const auto cfg = default_cfg();
    const auto trace = steady(350.0);
    const double amp = 350.0 / cfg.rated_load_mw * sim::per_unit_base_in_a(cfg);
    AttackSpec spec;
    spec.kind = AttackKind::InjectArbitrary;
    spec.onset_time_s = 1.01;
    spec.target_side = Side::Input;
    spec.magnitude_profile_a = {amp, amp, amp};
    const auto attacked = inject_arbitrary(trace, spec);
    CHECK_FALSE(relay::detect_trigger(attacked, relay::make_settings(cfg)).has_value());
    CHECK(attacked.first_marker("ATTACK").has_value());
}

TEST_CASE("arbitrary injection at fault level trips within two cycles") {
    const auto cfg = default_cfg();
    const auto trace = steady(352.0);
    const double amp = 6.0 * 352.0 / cfg.rated_load_mw * sim::per_unit_base_in_a(cfg);
    AttackSpec spec;
    spec.kind = AttackKind::InjectArbitrary;
    spec.onset_time_s = 1.011;
    spec.target_side = Side::Input;
    spec.magnitude_profile_a = {amp, amp, amp};
    const auto attacked = inject_arbitrary(trace, spec);
    const auto trig = relay::detect_trigger(attacked, relay::make_settings(cfg));
    REQUIRE(trig.has_value());
    CHECK(*trig > spec.onset_time_s);
    CHECK(*trig <= spec.onset_time_s + 2.0 / 60.0);

    SUBCASE("non-targeted side is byte-identical") {
        for (int c = 3; c < 6; ++c)
            CHECK(std::memcmp(attacked.samples[c].data(), trace.samples[c].data(),
                              trace.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("replayed fault data trips the stock relay") {
    const auto cfg = default_cfg();
    const auto carrier = steady(354.0);
    const auto source = fault_trace(354.0);
    AttackSpec spec;
    spec.kind = AttackKind::Replay;
    spec.onset_time_s = 1.008;
    spec.target_side = Side::Input;
    spec.replay_source = "scn-fault";
    const auto attacked = inject_replay(carrier, source, spec);
    const auto trig = relay::detect_trigger(attacked, relay::make_settings(cfg));
    REQUIRE(trig.has_value());
    CHECK(*trig > spec.onset_time_s);
}

TEST_CASE("replay onto both sides preserves the source differential") {
    const auto carrier = steady(350.0);
    const auto source = fault_trace(350.0);
    AttackSpec spec;
    spec.kind = AttackKind::Replay;
    spec.onset_time_s = 1.0;
    spec.replay_source = "scn-fault";
    spec.target_side = Side::Input;
    auto attacked = inject_replay(carrier, source, spec);
    spec.target_side = Side::Output;
    attacked = inject_replay(attacked, source, spec);

    const size_t onset = carrier.nearest_index(1.0);
    const size_t src0 = source.nearest_index(*source.first_marker("FAULT"));
    for (int p = 0; p < 3; ++p)
        for (size_t i = onset; i < carrier.size(); ++i) {
            const double diff_attacked = attacked.samples[p][i] - attacked.samples[p + 3][i];
            const double diff_source =
                source.samples[p][src0 + i - onset] - source.samples[p + 3][src0 + i - onset];
            REQUIRE(diff_attacked == diff_source);
        }
}

TEST_CASE("replay beyond the trace end is a range error") {
    const auto carrier = steady();
    const auto source = fault_trace();
    AttackSpec spec;
    spec.kind = AttackKind::Replay;
    spec.onset_time_s = 99.0;
    spec.replay_source = "scn-fault";
    CHECK_THROWS_AS(inject_replay(carrier, source, spec), std::out_of_range);
}

TEST_CASE("tap manipulation produces the algebraic differential") {
    const auto cfg = default_cfg();
    const auto trace = steady(350.0);
    AttackSpec spec;
    spec.kind = AttackKind::TapManipulation;
    spec.onset_time_s = 1.005;
    spec.tap_shift = 0.25;
    spec.target_side = Side::Output;
    const auto attacked = inject_tap_manipulation(trace, spec);

    // Expected: |1 - (1 + shift)| * load_pu after the transient clears.
    const double load_pu = 350.0 / cfg.rated_load_mw;
    // Let one full estimation window pass the onset, then measure.
    const size_t end = attacked.nearest_index(spec.onset_time_s + 2.5 / 60.0);
    std::vector<double> in_buf, out_buf;
    for (size_t i = end - 26; i <= end; ++i) {
        in_buf.push_back(attacked.samples[0][i] / sim::per_unit_base_in_a(cfg));
        out_buf.push_back(-attacked.samples[3][i] / sim::per_unit_base_out_a(cfg));
    }
    const double t_end = attacked.time_at(end);
    const auto pin = relay::estimate_phasor(in_buf, 1600.0, 60.0, t_end);
    const auto pout = relay::estimate_phasor(out_buf, 1600.0, 60.0, t_end);
    const double diff = std::hypot(pin.real() + pout.real(), pin.imag() + pout.imag());
    CHECK(diff == doctest::Approx(0.25 * load_pu).epsilon(1e-6));

    SUBCASE("input side untouched") {
        for (int c = 0; c < 3; ++c)
            CHECK(std::memcmp(attacked.samples[c].data(), trace.samples[c].data(),
                              trace.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("tap attack below the characteristic never trips") {
    const auto cfg = default_cfg();
    const auto trace = steady(350.0);
    AttackSpec spec;
    spec.kind = AttackKind::TapManipulation;
    spec.onset_time_s = 1.005;
    spec.tap_shift = 0.25; // 0.25 * 0.875 pu = 0.219 < 0.3 pickup
    spec.target_side = Side::Output;
    const auto attacked = inject_tap_manipulation(trace, spec);
    CHECK_FALSE(relay::detect_trigger(attacked, relay::make_settings(cfg)).has_value());
}

TEST_CASE("zero tap shift is rejected") {
    AttackSpec spec;
    spec.kind = AttackKind::TapManipulation;
    spec.tap_shift = 0.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("tsa shift measures 1.6 samples on the upsampled correlator") {
    const auto trace = steady(350.0, 2.0);
    const auto shifted = time_shift_side(trace, Side::Output, 1.0);
    // Compare against the original output channel, skipping the edge hold.
    const size_t skip = 200;
    std::vector<double> ref(trace.samples[3].begin() + skip, trace.samples[3].end());
    std::vector<double> delayed(shifted.samples[3].begin() + skip, shifted.samples[3].end());
    const double lag = xcorr_frac_lag(ref, delayed, 4.0);
    CHECK(std::abs(lag - 1.6) <= 0.1);

    SUBCASE("input side untouched by an output-side TSA") {
        for (int c = 0; c < 3; ++c)
            CHECK(std::memcmp(shifted.samples[c].data(), trace.samples[c].data(),
                              trace.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("tsa of 1 ms shows as 21.6 electrical degrees between sides") {
    const auto trace = steady(350.0, 2.0);
    const auto shifted = time_shift_side(trace, Side::Output, 1.0);
    const size_t end = shifted.size() - 1;
    const double t_end = shifted.time_at(end);
    std::vector<double> in_buf(trace.samples[0].end() - 27, trace.samples[0].end());
    std::vector<double> out_buf(shifted.samples[3].end() - 27, shifted.samples[3].end());
    const auto pin = relay::estimate_phasor(in_buf, 1600.0, 60.0, t_end);
    const auto pout = relay::estimate_phasor(out_buf, 1600.0, 60.0, t_end);
    double delta_deg = (pin.angle_rad - pout.angle_rad) * 180.0 / M_PI;
    if (delta_deg < 0) delta_deg += 360.0;
    CHECK(std::abs(delta_deg - 21.6) <= 0.5);
}

TEST_CASE("zero tsa delay is a precondition violation") {
    const auto trace = steady();
    AttackSpec payload;
    payload.kind = AttackKind::TapManipulation;
    payload.onset_time_s = 1.01;
    payload.tap_shift = 0.25;
    CHECK_THROWS_AS(inject_tsa_plus_fdia(trace, payload, 0.0), ConfigError);
    CHECK_THROWS_AS(time_shift_side(trace, Side::Output, 0.0), ConfigError);
}

TEST_CASE("awgn at 300 dB is numerically silent") {
    const auto trace = steady(350.0, 0.5);
    NoiseSpec noise{300.0, 99};
    const auto noisy = add_awgn(trace, noise);
    for (int c = 0; c < sim::kChannels; ++c)
        for (size_t i = 0; i < trace.size(); ++i)
            REQUIRE(std::abs(noisy.samples[c][i] - trace.samples[c][i]) < 1e-12);
}

TEST_CASE("awgn calibration hits the requested snr") {
    const auto trace = steady(350.0, 10.0); // 16000 samples per channel
    for (double snr : {45.0, 40.0, 35.0, 30.0}) {
        NoiseSpec noise{snr, 1234};
        const auto noisy = add_awgn(trace, noise);
        for (int c = 0; c < sim::kChannels; ++c) {
            std::vector<double> delta(trace.size());
            for (size_t i = 0; i < trace.size(); ++i)
                delta[i] = noisy.samples[c][i] - trace.samples[c][i];
            const double realized =
                10.0 * std::log10(channel_power(trace.samples[c]) / channel_power(delta));
            CHECK(std::abs(realized - snr) <= 0.2);
        }
    }
}

TEST_CASE("awgn is deterministic, pure, and preserves metadata") {
    auto trace = steady(350.0, 0.5);
    trace.event_markers.push_back({0.1, "ATTACK"});
    NoiseSpec noise{30.0, 77};
    const auto a = add_awgn(trace, noise);
    const auto b = add_awgn(trace, noise);
    for (int c = 0; c < sim::kChannels; ++c)
        CHECK(std::memcmp(a.samples[c].data(), b.samples[c].data(),
                          a.size() * sizeof(double)) == 0);
    REQUIRE(a.event_markers.size() == trace.event_markers.size());
    CHECK(a.event_markers[0].kind == "ATTACK");
    CHECK(a.size() == trace.size());
}

TEST_CASE("awgn rejects zero-power channels") {
    sim::SignalTrace t;
    for (auto& ch : t.samples) ch.assign(64, 0.0);
    t.samples[0][0] = 1.0; // others stay silent
    NoiseSpec noise{30.0, 1};
    CHECK_THROWS_AS(add_awgn(t, noise), DataError);
}

TEST_CASE("window awgn keeps shape and label") {
    const auto cfg = default_cfg();
    const auto trace = fault_trace();
    // Trigger at inception keeps pre-fault content in every channel, so all
    // six have nonzero power.
    const auto w = sim::capture_window(trace, 1.005, cfg, Label::Attack, "s1");
    NoiseSpec noise{30.0, 5};
    const auto noisy = add_awgn(w, noise);
    CHECK(noisy.label == Label::Attack);
    CHECK(noisy.scenario_id == "s1");
    CHECK(noisy.trigger_index == w.trigger_index);
}

TEST_CASE("attacked windows carry the attack label") {
    const auto cfg = default_cfg();
    const auto trace = steady(356.0);
    AttackSpec spec;
    spec.kind = AttackKind::TapManipulation;
    spec.onset_time_s = 1.01;
    spec.tap_shift = 0.3;
    spec.target_side = Side::Output;
    const auto attacked = inject_tap_manipulation(trace, spec);
    const auto w = sim::capture_window(attacked, 1.015, cfg);
    CHECK(w.label == Label::Attack);
}

} // TEST_SUITE
