#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikegrid/grid.hpp"

#include <cmath>

using namespace spikegrid;

namespace {

ConverterParams<double> test_converter() {
    ConverterParams<double> c;
    c.rated_voltage = 48.0;
    c.rated_power = 300.0;
    c.filter_inductance = 1.5e-3;
    c.filter_capacitance = 700e-6;
    c.amplification_ratio = 1.0;
    c.tracking_time_constant = 1e-3;
    return c;
}

TopologySpec<double> two_bus(double line_r = 1.5, double line_l = 50e-6) {
    TopologySpec<double> spec;
    spec.nodes.push_back({0, test_converter(), {}, 470e-6});
    spec.nodes.push_back({1, test_converter(), {}, 470e-6});
    spec.lines.push_back({line_r, line_l, 0, 1});
    return spec;
}

}  // namespace

TEST_CASE("build_network: two-bus incidence matches the line list") {
    auto g = build_network(two_bus());
    CHECK(g.node_count == 2);
    CHECK(g.incidence(0, 1) == 1);
    CHECK(g.incidence(1, 0) == 1);
    CHECK(g.incidence(0, 0) == 0);
    CHECK(g.incidence(1, 1) == 0);
    CHECK(g.flow_adjacency[0] == std::vector<Index>{1});
    CHECK(g.flow_adjacency[1] == std::vector<Index>{0});
}

TEST_CASE("build_network: isolated bus has empty flow set") {
    TopologySpec<double> spec;
    spec.nodes.push_back({0, test_converter(), {}, 470e-6});
    auto g = build_network(spec);
    CHECK(g.flow_adjacency[0].empty());
}

TEST_CASE("build_network: three-bus ring gives two flow neighbors each") {
    TopologySpec<double> spec;
    for (Index k = 0; k < 3; ++k) spec.nodes.push_back({k, test_converter(), {}, 470e-6});
    spec.lines.push_back({1.5, 50e-6, 0, 1});
    spec.lines.push_back({1.8, 60e-6, 1, 2});
    spec.lines.push_back({2.0, 66e-6, 2, 0});
    auto g = build_network(spec);
    for (Index k = 0; k < 3; ++k) CHECK(g.flow_adjacency[static_cast<std::size_t>(k)].size() == 2);
}

TEST_CASE("build_network: rejects duplicate ids, dangling endpoints, self-loops") {
    TopologySpec<double> dup;
    dup.nodes.push_back({0, test_converter(), {}, 470e-6});
    dup.nodes.push_back({0, test_converter(), {}, 470e-6});
    CHECK_THROWS_AS(build_network(dup), ConfigError);

    auto dangling = two_bus();
    dangling.lines.push_back({1.0, 1e-6, 0, 7});
    CHECK_THROWS_AS(build_network(dangling), ConfigError);

    auto self_loop = two_bus();
    self_loop.lines.push_back({1.0, 1e-6, 1, 1});
    CHECK_THROWS_AS(build_network(self_loop), ConfigError);
}

TEST_CASE("converter adjacency rides through passive junctions") {
    TopologySpec<double> spec;
    for (Index k = 0; k < 3; ++k) spec.nodes.push_back({k, test_converter(), {}, 470e-6});
    spec.nodes.push_back({3, {}, {}, 470e-6});  // star point
    spec.lines.push_back({2.4, 1e-3, 0, 3});
    spec.lines.push_back({1.2, 0.5e-3, 1, 3});
    spec.lines.push_back({2.8, 0.75e-3, 2, 3});
    auto g = build_network(spec);
    std::vector<bool> active(3, true);
    auto adj = converter_flow_adjacency(g, active);
    CHECK(adj[0] == std::vector<Index>{1, 2});
    CHECK(adj[1] == std::vector<Index>{0, 2});
    CHECK(adj[2] == std::vector<Index>{0, 1});

    active[2] = false;  // drop the leaf line of node 2
    adj = converter_flow_adjacency(g, active);
    CHECK(adj[0] == std::vector<Index>{1});
    CHECK(adj[1] == std::vector<Index>{0});
    CHECK(adj[2].empty());
}

TEST_CASE("step_network: zero net capacitor current leaves the bus voltage unchanged") {
    auto spec = two_bus();
    auto g = build_network(spec);
    std::vector<ConverterParams<double>> conv{test_converter(), test_converter()};
    std::vector<double> jcap{470e-6, 470e-6};

    GridState<double> s = GridState<double>::zero(2, 1);
    s.bus_voltage.setConstant(48.0);
    s.bridge_emf.setConstant(48.0);

    Vector<double> setpoints = Vector<double>::Constant(2, 48.0);
    Vector<double> draw = Vector<double>::Zero(2);
    std::vector<bool> line_active{true}, enabled{true, true};
    StepInputs<double> in{&setpoints, &draw, &line_active, &enabled};
    step_network(g, conv, jcap, s, in, 1e-5);
    CHECK(s.bus_voltage[0] == doctest::Approx(48.0).epsilon(1e-12));
    CHECK(s.bus_voltage[1] == doctest::Approx(48.0).epsilon(1e-12));
}

TEST_CASE("step_network: RC discharge reaches v0/e after one time constant") {
    // Single bus, converter disabled, resistive load. dt = RC/1000.
    TopologySpec<double> spec;
    spec.nodes.push_back({0, test_converter(), {}, 470e-6});
    spec.loads.push_back({0, LoadKind::Resistive, {{{0.0, 36.0}}}});
    auto g = build_network(spec);
    std::vector<ConverterParams<double>> conv{test_converter()};
    std::vector<double> jcap{470e-6};

    const double r = 36.0, c = 700e-6, rc = r * c, v0 = 48.0;
    const double dt = rc / 1000.0;
    GridState<double> s = GridState<double>::zero(1, 0);
    s.bus_voltage[0] = v0;

    Vector<double> setpoints = Vector<double>::Constant(1, 0.0);
    std::vector<bool> line_active, enabled{false};
    for (int step = 0; step < 1000; ++step) {
        Vector<double> draw =
            external_currents(g, spec.loads, {}, s.bus_voltage, 48.0, step * dt);
        StepInputs<double> in{&setpoints, &draw, &line_active, &enabled};
        step_network(g, conv, jcap, s, in, dt);
    }
    const double expected = v0 / std::exp(1.0);
    CHECK(std::abs(s.bus_voltage[0] - expected) / expected < 1e-3);
}

TEST_CASE("tie_line_flows: two-bus Ohm oracle with settled line current") {
    auto spec = two_bus(1.5, 50e-6);
    auto g = build_network(spec);
    std::vector<bool> active{true};

    // Settled RL current for v = (49, 47): i = dv / R.
    Vector<double> line_current(1);
    line_current[0] = (49.0 - 47.0) / 1.5;
    CHECK(line_current[0] == doctest::Approx(1.3333333333333333));

    auto flows = tie_line_flows(g, line_current, active);
    CHECK(flows[0] == doctest::Approx(1.3333333333333333));   // node 0 exports
    CHECK(flows[1] == doctest::Approx(-1.3333333333333333));  // node 1 imports
}

TEST_CASE("tie_line_flows: isolated node sums to zero, symmetric ring settles to zero") {
    TopologySpec<double> spec;
    for (Index k = 0; k < 3; ++k) spec.nodes.push_back({k, test_converter(), {}, 470e-6});
    spec.lines.push_back({1.0, 10e-6, 0, 1});
    spec.lines.push_back({1.0, 10e-6, 1, 2});
    spec.lines.push_back({1.0, 10e-6, 2, 0});
    auto g = build_network(spec);
    std::vector<bool> active{true, true, true};
    Vector<double> zero_current = Vector<double>::Zero(3);
    auto flows = tie_line_flows(g, zero_current, active);
    for (Index k = 0; k < 3; ++k) CHECK(flows[k] == 0.0);
}

TEST_CASE("update_soc: closed-form discharge and clamping") {
    BatteryParams<double> b{3600.0, 0.5, 0.9, 0.1};

    SUBCASE("zero current holds") {
        CHECK(update_soc(0.5, 0.0, 1.0, b).soc == 0.5);
    }
    SUBCASE("C/3600 amps for 3600 s removes exactly 1.0 before clamping") {
        const double i_bat = b.capacity / 3600.0;
        double soc = 0.9;
        bool clamped = false;
        for (int s = 0; s < 3600; ++s) {
            auto u = update_soc(soc, i_bat, 1.0, b);
            soc = u.soc;
            clamped = clamped || u.clamped;
        }
        CHECK(clamped);          // would have gone to -0.1 without the clamp
        CHECK(soc == b.soc_min);
    }
    SUBCASE("charging raises soc") {
        CHECK(update_soc(0.5, -1.0, 1.0, b).soc > 0.5);
    }
}

TEST_CASE("energy bookkeeping: stored-energy residual shrinks with dt") {
    // Two converters, almost lossless line, constant EMFs. The per-window
    // residual between stored-energy change and injected-minus-dissipated
    // energy must fall with the step (first-order integrator).
    auto run = [](double dt) {
        auto spec = two_bus(1e-3, 50e-6);
        auto g = build_network(spec);
        std::vector<ConverterParams<double>> conv{test_converter(), test_converter()};
        std::vector<double> jcap{470e-6, 470e-6};

        GridState<double> s = GridState<double>::zero(2, 1);
        s.bus_voltage[0] = 48.0;
        s.bus_voltage[1] = 47.0;
        s.bridge_emf[0] = 48.0;
        s.bridge_emf[1] = 47.0;

        Vector<double> setpoints(2);
        setpoints << 48.0, 47.0;
        Vector<double> draw = Vector<double>::Zero(2);
        std::vector<bool> active{true}, enabled{true, true};
        StepInputs<double> in{&setpoints, &draw, &active, &enabled};

        auto stored = [&] {
            double e = 0;
            for (Index k = 0; k < 2; ++k) {
                e += 0.5 * conv[static_cast<std::size_t>(k)].filter_capacitance *
                     s.bus_voltage[k] * s.bus_voltage[k];
                e += 0.5 * conv[static_cast<std::size_t>(k)].filter_inductance *
                     s.output_current[k] * s.output_current[k];
            }
            e += 0.5 * 50e-6 * s.line_current[0] * s.line_current[0];
            return e;
        };

        const double t_end = 2e-3;
        double injected = 0;
        const double e0 = stored();
        for (double t = 0; t < t_end; t += dt) {
            double p_in = s.bridge_emf[0] * s.output_current[0] +
                          s.bridge_emf[1] * s.output_current[1];
            double p_loss = 1e-3 * s.line_current[0] * s.line_current[0];
            step_network(g, conv, jcap, s, in, dt);
            injected += (p_in - p_loss) * dt;
        }
        return std::abs(stored() - e0 - injected);
    };

    const double coarse = run(1e-6);
    const double fine = run(0.5e-6);
    CHECK(fine < 0.65 * coarse);  // O(dt) convergence
    CHECK(coarse < 1e-3);
}

TEST_CASE("steady-state Kirchhoff: node flow sums match converter minus load") {
    auto spec = two_bus();
    spec.loads.push_back({0, LoadKind::ConstantPower, {{{0.0, 64.0}}}});
    auto g = build_network(spec);
    std::vector<ConverterParams<double>> conv{test_converter(), test_converter()};
    std::vector<double> jcap{470e-6, 470e-6};

    GridState<double> s = GridState<double>::zero(2, 1);
    s.bus_voltage.setConstant(48.0);
    s.bridge_emf.setConstant(48.0);
    Vector<double> setpoints(2);
    setpoints << 48.0, 48.2;
    std::vector<bool> active{true}, enabled{true, true};

    const double dt = 10e-6;
    GridState<double> prev = s;
    for (int step = 0; step < 200000; ++step) {
        Vector<double> draw =
            external_currents(g, spec.loads, {}, s.bus_voltage, 48.0, 0.0);
        StepInputs<double> in{&setpoints, &draw, &active, &enabled};
        prev = s;
        step_network(g, conv, jcap, s, in, dt);
    }
    // Derivatives settled below 1e-9 per unit.
    CHECK(std::abs(s.bus_voltage[0] - prev.bus_voltage[0]) / 48.0 / dt * 1e-6 < 1e-9);

    Vector<double> draw = external_currents(g, spec.loads, {}, s.bus_voltage, 48.0, 0.0);
    auto flows = tie_line_flows(g, s.line_current, active);
    for (Index k = 0; k < 2; ++k) {
        double residual = s.output_current[k] - draw[k] - flows[k];
        CHECK(std::abs(residual) / (300.0 / 48.0) < 1e-6);
    }
}

TEST_CASE("stability guard rejects dt beyond L/(2R)") {
    auto g = build_network(two_bus(1.5, 50e-6));  // bound = 16.7 us
    CHECK_THROWS_AS(check_step_bound(g, 20e-6), ConfigError);
    CHECK_NOTHROW(check_step_bound(g, 10e-6));
}

TEST_CASE("fuzzed load schedules never produce non-finite state") {
    SplitMix64 rng(1234);
    for (int trial = 0; trial < 25; ++trial) {
        auto spec = two_bus();
        Schedule<double> sched;
        double t = 0;
        for (int i = 0; i < 6; ++i) {
            sched.points.emplace_back(t, 20.0 + 280.0 * rng.uniform());
            t += 0.002 + 0.01 * rng.uniform();
        }
        spec.loads.push_back({0, LoadKind::ConstantPower, sched});
        auto g = build_network(spec);
        std::vector<ConverterParams<double>> conv{test_converter(), test_converter()};
        std::vector<double> jcap{470e-6, 470e-6};

        GridState<double> s = GridState<double>::zero(2, 1);
        s.bus_voltage.setConstant(48.0);
        s.bridge_emf.setConstant(48.0);
        Vector<double> setpoints = Vector<double>::Constant(2, 48.0);
        std::vector<bool> active{true}, enabled{true, true};
        const double dt = 10e-6;
        for (int step = 0; step < 8000; ++step) {
            Vector<double> draw =
                external_currents(g, spec.loads, {}, s.bus_voltage, 48.0, step * dt);
            StepInputs<double> in{&setpoints, &draw, &active, &enabled};
            step_network(g, conv, jcap, s, in, dt);
            CHECK_NOTHROW(check_finite(s, step));
        }
    }
}

TEST_CASE("determinism: identical inputs give bit-identical trajectories") {
    auto run_once = [] {
        auto spec = two_bus();
        spec.loads.push_back({0, LoadKind::ConstantPower, {{{0.0, 64.0}, {0.01, 160.0}}}});
        auto g = build_network(spec);
        std::vector<ConverterParams<double>> conv{test_converter(), test_converter()};
        std::vector<double> jcap{470e-6, 470e-6};
        GridState<double> s = GridState<double>::zero(2, 1);
        s.bus_voltage.setConstant(48.0);
        s.bridge_emf.setConstant(48.0);
        Vector<double> setpoints = Vector<double>::Constant(2, 48.0);
        std::vector<bool> active{true}, enabled{true, true};
        const double dt = 10e-6;
        for (int step = 0; step < 3000; ++step) {
            Vector<double> draw =
                external_currents(g, spec.loads, {}, s.bus_voltage, 48.0, step * dt);
            StepInputs<double> in{&setpoints, &draw, &active, &enabled};
            step_network(g, conv, jcap, s, in, dt);
        }
        return s;
    };
    auto a = run_once();
    auto b = run_once();
    CHECK(a.bus_voltage == b.bus_voltage);
    CHECK(a.output_current == b.output_current);
    CHECK(a.line_current == b.line_current);
}
