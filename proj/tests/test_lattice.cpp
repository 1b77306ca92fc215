#include "pcis/lattice.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace pcis;
using Catch::Approx;

namespace {

StateBox unit_box(int n) {
    return StateBox(Vec::Zero(n), Vec::Ones(n));
}

StateBox mc_safe_box() {
    Vec lo(2), hi(2);
    lo << -1.5, -0.07;
    hi << 0.6, 0.07;
    return StateBox(lo, hi);
}

} // namespace

TEST_CASE("build_grid spacings: mountain-car grid and unit boxes") {
    const LatticeGrid mc = build_grid(mc_safe_box(), {200, 30});
    REQUIRE(mc.spacing[0] == Approx(2.1 / 199).epsilon(1e-15));
    REQUIRE(mc.spacing[1] == Approx(0.14 / 29).epsilon(1e-15));
    // rounded reference values
    REQUIRE(std::abs(mc.spacing[0] - 1.06e-2) < 5e-5);
    REQUIRE(std::abs(mc.spacing[1] - 4.83e-3) < 5e-6);
    REQUIRE(mc.delta_x == Approx(mc.spacing[0] / 2.0));
    REQUIRE(mc.total == 6000);

    const LatticeGrid two = build_grid(unit_box(1), {2});
    REQUIRE(two.spacing[0] == Approx(1.0));
    REQUIRE(two.delta_x == Approx(0.5));
    REQUIRE(two.point(0)[0] == Approx(0.0));
    REQUIRE(two.point(1)[0] == Approx(1.0));

    REQUIRE_THROWS_AS(build_grid(unit_box(1), {1}), std::invalid_argument);
    REQUIRE_THROWS_AS(build_grid(unit_box(2), {3}), std::invalid_argument);
}

TEST_CASE("row-major enumeration on a 3x3 grid") {
    const LatticeGrid g = build_grid(unit_box(2), {3, 3});
    REQUIRE(g.total == 9);
    // last axis fastest
    REQUIRE(g.point(0).isApprox(Vec::Zero(2)));
    Vec expect(2);
    expect << 0.0, 0.5;
    REQUIRE(g.point(1).isApprox(expect));
    expect << 0.5, 0.0;
    REQUIRE(g.point(3).isApprox(expect));
    expect << 1.0, 1.0;
    REQUIRE(g.point(8).isApprox(expect));
}

TEST_CASE("quantizer: idempotence, lower-index ties, delta-net bound") {
    const LatticeGrid g = build_grid(mc_safe_box(), {200, 30});
    for (std::int64_t k : {std::int64_t(0), std::int64_t(17), std::int64_t(5999)})
        REQUIRE(g.quantize(g.point(k)) == k);

    // exact midpoint on one axis goes to the lower index
    const LatticeGrid line = build_grid(unit_box(1), {3}); // points 0, 0.5, 1
    Vec mid(1);
    mid << 0.25;
    REQUIRE(line.quantize(mid) == 0);
    mid << 0.75;
    REQUIRE(line.quantize(mid) == 1);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> ux(-1.5, 0.6);
    std::uniform_real_distribution<double> uv(-0.07, 0.07);
    for (int i = 0; i < 10000; ++i) {
        Vec s(2);
        s << ux(rng), uv(rng);
        const Vec q = g.point(g.quantize(s));
        REQUIRE((s - q).cwiseAbs().maxCoeff() <= g.delta_x + 1e-12);
    }
    // all cell corners and cell midpoints of a small grid
    const LatticeGrid small = build_grid(unit_box(2), {5, 4});
    for (std::int64_t k = 0; k < small.total; ++k) {
        const Vec corner = small.point(k);
        REQUIRE((corner - small.point(small.quantize(corner))).cwiseAbs().maxCoeff() <=
                small.delta_x + 1e-12);
        Vec mid2 = corner;
        for (int i = 0; i < 2; ++i)
            mid2[i] = std::min(mid2[i] + small.spacing[i] / 2.0, small.box.upper[i]);
        REQUIRE((mid2 - small.point(small.quantize(mid2))).cwiseAbs().maxCoeff() <=
                small.delta_x + 1e-12);
    }
}

TEST_CASE("masks: counting, subset, intersection") {
    LatticeMask a(6), b(6);
    a.set(1, true);
    a.set(3, true);
    b.set(1, true);
    b.set(3, true);
    b.set(4, true);
    REQUIRE(a.count() == 2);
    REQUIRE(a.subset_of(b));
    REQUIRE(!b.subset_of(a));
    REQUIRE(a.intersect(b) == a);
    REQUIRE(a.intersect(b).count() == 2);
}

TEST_CASE("lift: outside-omega branch, lattice lookup, quantized lookup") {
    const LatticeGrid g = build_grid(unit_box(1), {5}); // 0, .25, .5, .75, 1
    LatticeMask omega(g.total);
    omega.set(2, true);
    SafetyValueTable table;
    table.stage_values = {Vec::Zero(g.total)};
    table.stage_values[0][2] = 0.7;

    Vec x(1);
    x << 0.51; // quantizes to index 2
    REQUIRE(lift(table, 0, omega, g, x) == Approx(0.7));
    x << 0.5;
    REQUIRE(lift(table, 0, omega, g, x) == Approx(0.7));
    x << 0.76; // quantizes to 3, outside omega
    REQUIRE(lift(table, 0, omega, g, x) == 0.0);
    x << 1.4; // outside the box entirely
    REQUIRE(lift(table, 0, omega, g, x) == 0.0);

    REQUIRE(mask_contains(g, omega, g.point(2)));
    REQUIRE(!mask_contains(g, omega, g.point(3)));
}
