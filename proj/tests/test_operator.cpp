#include "pcis/operator.hpp"

#include "pcis/env.hpp"
#include "pcis/oracle.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace pcis;
using Catch::Approx;

namespace {

FiniteMdpModel make_model(int states, int actions, const std::vector<std::vector<double>>& rows) {
    FiniteMdpModel m;
    m.state_count = states;
    m.action_count = actions;
    m.safe_states.assign(states, 1);
    m.kernel.resize(states * actions, states + 1);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            m.kernel(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    m.validate();
    return m;
}

// Four states, two actions, engineered margins around the 1-eps = 0.7
// threshold: p = {1.0, 0.95, 0.5, 0.0}, exact operator output {0, 1}.
FiniteMdpModel margin_fixture() {
    return make_model(4, 2,
                      {{1.0, 0.0, 0.0, 0.0, 0.0},   // 0,a0: stay
                       {0.0, 0.0, 0.0, 0.0, 1.0},   // 0,a1: sink
                       {0.95, 0.0, 0.0, 0.0, 0.05}, // 1,a0
                       {0.0, 0.0, 0.0, 0.0, 1.0},   // 1,a1
                       {0.0, 0.0, 0.5, 0.0, 0.5},   // 2,a0
                       {0.5, 0.0, 0.0, 0.0, 0.5},   // 2,a1
                       {0.0, 0.0, 0.0, 0.0, 1.0},   // 3,a0
                       {0.0, 0.0, 0.0, 0.0, 1.0}}); // 3,a1
}

struct TabularSetup {
    FiniteMdpModel model;
    LatticeGrid grid;
    FeatureMap map;
    ConfidenceParams params;
    LatticeMask omega;
};

TabularSetup tabular_setup(const FiniteMdpModel& model, int horizon, double epsilon) {
    TabularSetup s{model, finite_state_grid(model.state_count),
                   FeatureMap::one_hot(model.state_count, model.action_count),
                   ConfidenceParams::uniform(model.state_count * model.action_count, horizon,
                                             epsilon, 0.9),
                   LatticeMask()};
    s.omega = mask_from_subset(model.safe_states);
    return s;
}

} // namespace

TEST_CASE("split_stagewise block shapes") {
    TransitionDataset data;
    for (int i = 0; i < 10; ++i) {
        Transition t;
        t.state = Vec::Zero(1);
        t.next_state = Vec::Zero(1);
        data.rows.push_back(t);
    }
    BlockRanges b = split_stagewise(data, 2);
    REQUIRE(b == BlockRanges{{0, 5}, {5, 10}});

    data.rows.resize(7);
    b = split_stagewise(data, 3);
    REQUIRE(b == BlockRanges{{0, 3}, {3, 5}, {5, 7}});

    b = split_stagewise(data, 1);
    REQUIRE(b == BlockRanges{{0, 7}});

    // more stages than samples: trailing blocks come out empty
    data.rows.resize(2);
    b = split_stagewise(data, 5);
    REQUIRE(b == BlockRanges{{0, 1}, {1, 2}, {2, 2}, {2, 2}, {2, 2}});

    REQUIRE_THROWS_AS(split_stagewise(data, 0), std::invalid_argument);
}

TEST_CASE("empty reference set yields the empty result without error") {
    const auto s = tabular_setup(margin_fixture(), 2, 0.3);
    const TransitionDataset data = sample_transitions(s.model, 100, 3);
    const LatticeMask empty(s.grid.total);
    const OperatorResult res = conservative_operator(empty, data, split_stagewise(data, 2), s.map,
                                                     s.params, s.grid);
    REQUIRE(res.q_set.count() == 0);
    for (const Vec& stage : res.value_table.stage_values) REQUIRE(stage.isZero());
}

TEST_CASE("no data means pessimism: the thresholded set is empty") {
    const auto s = tabular_setup(margin_fixture(), 1, 0.3);
    TransitionDataset empty_data;
    const OperatorResult res = conservative_operator(
        s.omega, empty_data, split_stagewise(empty_data, 1), s.map, s.params, s.grid);
    REQUIRE(res.q_set.count() == 0);
    // beta*sigma pins the lower bound strictly below zero at every point
    for (std::int64_t k = 0; k < s.grid.total; ++k)
        REQUIRE(res.value_table.value(0, k) == 0.0);
}

TEST_CASE("ample data recovers the oracle operator on the margin fixture") {
    const auto s = tabular_setup(margin_fixture(), 1, 0.3);
    const TransitionDataset data = sample_transitions(s.model, 30000, 17);
    const OperatorResult res = conservative_operator(s.omega, data, split_stagewise(data, 1),
                                                     s.map, s.params, s.grid);
    const StateSubset exact = exact_q_operator(s.model, s.model.safe_states, 1, 0.3);
    REQUIRE(subset_from_mask(res.q_set) == exact);
    REQUIRE(res.q_set.subset_of(s.omega));

    // stored values never leave [0,1]
    for (const Vec& stage : res.value_table.stage_values)
        for (Eigen::Index k = 0; k < stage.size(); ++k) {
            REQUIRE(stage[k] >= 0.0);
            REQUIRE(stage[k] <= 1.0);
        }
}

TEST_CASE("exact variant demands one-hot maps and matches the generic path") {
    const auto s = tabular_setup(margin_fixture(), 2, 0.3);
    const TransitionDataset data = sample_transitions(s.model, 2000, 5);
    const BlockRanges blocks = split_stagewise(data, 2);

    const OperatorResult a = operator_exact_variant(s.omega, data, blocks, s.map, s.params, s.grid);
    const OperatorResult b = conservative_operator(s.omega, data, blocks, s.map, s.params, s.grid);
    REQUIRE(a.q_set == b.q_set);
    for (int j = 0; j <= 2; ++j)
        REQUIRE(a.value_table.stage_values[j] == b.value_table.stage_values[j]);

    Vec lo(2), hi(2);
    lo << -1.0, -1.0;
    hi << 1.0, 1.0;
    const FeatureMap fourier = FeatureMap::fourier(StateBox(lo, hi), 2, 1, true);
    REQUIRE_THROWS_AS(
        operator_exact_variant(s.omega, data, blocks, fourier, s.params, s.grid),
        std::invalid_argument);
}

TEST_CASE("two-state chain: epsilon decides membership under ample data") {
    // state 0 stays with probability 0.9, otherwise slides toward the sink
    const FiniteMdpModel chain = make_model(2, 1, {{0.9, 0.1, 0.0}, {0.0, 0.0, 1.0}});
    LatticeMask omega(2);
    omega.set(0, true);
    const LatticeGrid grid = finite_state_grid(2);
    const FeatureMap map = FeatureMap::one_hot(2, 1);
    const TransitionDataset data = sample_transitions(chain, 100000, 11);
    const BlockRanges blocks = split_stagewise(data, 1);

    ConfidenceParams strict = ConfidenceParams::uniform(2, 1, 0.05, 0.9);
    const OperatorResult tight = conservative_operator(omega, data, blocks, map, strict, grid);
    REQUIRE(tight.q_set.count() == 0); // 0.9 < 0.95

    ConfidenceParams loose = ConfidenceParams::uniform(2, 1, 0.15, 0.9);
    const OperatorResult ok = conservative_operator(omega, data, blocks, map, loose, grid);
    REQUIRE(ok.q_set.get(0)); // lower bound clears 0.85 once widths shrink
}

TEST_CASE("discretization penalty shifts the lattice scores by exactly d*L*delta_x") {
    Vec lo(2), hi(2);
    lo << 0.0, 0.0;
    hi << 1.0, 1.0;
    const StateBox box(lo, hi);
    const LatticeGrid grid = build_grid(box, {7, 7});
    const FeatureMap map = FeatureMap::fourier(box, 2, 2, true);
    const ConfidenceParams params = ConfidenceParams::uniform(map.dimension(), 1, 0.3, 0.9);

    // synthetic in-box transitions
    TransitionDataset data;
    Rng rng(23);
    for (int i = 0; i < 400; ++i) {
        Transition t;
        t.state = Vec(2);
        t.state << uniform01(rng), uniform01(rng);
        t.action = uniform_int(rng, 0, 1);
        t.next_state = Vec(2);
        t.next_state << uniform01(rng), uniform01(rng);
        data.rows.push_back(std::move(t));
    }
    const LatticeMask omega(grid.total, true);
    const OperatorResult res =
        conservative_operator(omega, data, split_stagewise(data, 1), map, params, grid);

    const double penalty = map.dimension() * map.lipschitz_bound() * grid.delta_x;
    REQUIRE(penalty > 0.0);
    const RidgeStage& stage = res.stages[0];
    for (std::int64_t k = 0; k < grid.total; k += 5) {
        double best = -1e300;
        for (int u = 0; u < 2; ++u) {
            const Vec phi = map.eval(grid.point(k), u);
            const double free = lower_confidence(stage, phi, 0.0);
            const double penalized = lower_confidence(stage, phi, penalty);
            REQUIRE(free - penalized == Approx(penalty).margin(1e-10));
            best = std::max(best, penalized);
        }
        REQUIRE(res.value_table.value(0, k) == Approx(clip01(best)).margin(1e-7));
    }
}

TEST_CASE("thresholded stage values always come with a nonempty action set") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const FiniteMdpModel m = random_mdp(rng);
        const auto s = tabular_setup(m, 2, 0.25);
        const TransitionDataset data = sample_transitions(m, 600, 1000 + trial);
        const OperatorResult res = conservative_operator(s.omega, data, split_stagewise(data, 2),
                                                         s.map, s.params, s.grid);
        for (int j = 0; j < 2; ++j)
            for (std::int64_t k = 0; k < s.grid.total; ++k)
                if (s.omega.get(k) && res.value_table.value(j, k) >= 1.0 - 0.25)
                    REQUIRE(res.action_maps[j].safe_sets[static_cast<std::size_t>(k)] != 0u);
        REQUIRE(res.q_set.subset_of(s.omega));
    }
}

TEST_CASE("con_inv: immediate fixed point on deterministic self-loops") {
    const FiniteMdpModel loops = make_model(2, 1, {{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}});
    const auto s = tabular_setup(loops, 1, 0.3);
    const TransitionDataset data = sample_transitions(loops, 20000, 2);
    const ConInvResult res = con_inv(data, s.omega, s.map, s.params, s.grid);
    REQUIRE(res.fixed_point == s.omega);
    REQUIRE(res.iterations == 1);
}

TEST_CASE("con_inv without data reaches the empty set within two iterations") {
    const auto s = tabular_setup(margin_fixture(), 1, 0.3);
    TransitionDataset empty_data;
    const ConInvResult res = con_inv(empty_data, s.omega, s.map, s.params, s.grid);
    REQUIRE(res.fixed_point.count() == 0);
    REQUIRE(res.iterations <= 2);
}

TEST_CASE("con_inv peels a forward chain one state per iteration") {
    // i -> i+1 deterministically, the top state feeds the sink
    const FiniteMdpModel chain = make_model(5, 1,
                                            {{0.0, 1.0, 0.0, 0.0, 0.0, 0.0},
                                             {0.0, 0.0, 1.0, 0.0, 0.0, 0.0},
                                             {0.0, 0.0, 0.0, 1.0, 0.0, 0.0},
                                             {0.0, 0.0, 0.0, 0.0, 1.0, 0.0},
                                             {0.0, 0.0, 0.0, 0.0, 0.0, 1.0}});
    const auto s = tabular_setup(chain, 1, 0.3);
    const TransitionDataset data = sample_transitions(chain, 40000, 4);
    const BlockRanges blocks = split_stagewise(data, 1);

    LatticeMask omega = s.omega;
    std::vector<std::int64_t> sizes{omega.count()};
    int iter = 0;
    for (;;) {
        const OperatorResult res =
            conservative_operator(omega, data, blocks, s.map, s.params, s.grid);
        ++iter;
        if (res.q_set == omega) break;
        REQUIRE(res.q_set.count() == omega.count() - 1); // exactly one state drops
        omega = res.q_set;
        sizes.push_back(omega.count());
    }
    REQUIRE(omega.count() == 0);
    REQUIRE(iter <= s.grid.total + 1);
    REQUIRE(sizes == std::vector<std::int64_t>{5, 4, 3, 2, 1, 0});

    const ConInvResult ci = con_inv(data, s.omega, s.map, s.params, s.grid);
    REQUIRE(ci.fixed_point.count() == 0);
    REQUIRE(ci.iterations == 6); // |lattice| + 1
}

TEST_CASE("certification outcomes: vacuous, ample-data accept, no-data reject") {
    const auto s = tabular_setup(margin_fixture(), 1, 0.3);

    const LatticeMask empty(s.grid.total);
    TransitionDataset no_data;
    REQUIRE(certify_shield(no_data, empty, s.map, s.params, s.grid).accepted);

    // tentative = the true maximal PCIS {0,1}
    const StateSubset pcis = maximal_pcis(s.model, 1, 0.3);
    const LatticeMask tentative = mask_from_subset(pcis);
    const TransitionDataset ample =
        sample_transitions(s.model, 30000, 21, DataTag::Certification);
    const CertificationOutcome ok = certify_shield(ample, tentative, s.map, s.params, s.grid);
    REQUIRE(ok.accepted);
    REQUIRE(tentative.subset_of(ok.cert_set));

    const CertificationOutcome rejected =
        certify_shield(no_data, tentative, s.map, s.params, s.grid);
    REQUIRE(!rejected.accepted);
}

TEST_CASE("operator argument validation") {
    const auto s = tabular_setup(margin_fixture(), 1, 0.3);
    const TransitionDataset data = sample_transitions(s.model, 50, 1);
    const BlockRanges blocks = split_stagewise(data, 1);

    ConfidenceParams wrong_dim = s.params;
    wrong_dim.dimension = 5;
    REQUIRE_THROWS_AS(conservative_operator(s.omega, data, blocks, s.map, wrong_dim, s.grid),
                      std::invalid_argument);

    const BlockRanges two_blocks = {{0, 25}, {25, 50}};
    REQUIRE_THROWS_AS(conservative_operator(s.omega, data, two_blocks, s.map, s.params, s.grid),
                      std::invalid_argument);

    LatticeMask wrong_mask(3);
    REQUIRE_THROWS_AS(conservative_operator(wrong_mask, data, blocks, s.map, s.params, s.grid),
                      std::invalid_argument);
}
