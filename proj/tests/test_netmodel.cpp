#include <doctest.h>

#include <random>

#include "seamsim/netmodel.hpp"
#include "testutil.hpp"

using namespace seamsim;

namespace {

PowerNetwork two_bus_net(double x = 0.1) {
    PowerNetwork net;
    net.buses = {{1, 1, 0.0, false}, {2, 2, 50.0, false}};
    net.branches = {{1, 2, x, 100.0, false}};
    net.generators = {{1, 0.0, 200.0, {CostKind::Linear, 0, 10, 0}},
                      {2, 0.0, 200.0, {CostKind::Linear, 0, 20, 0}}};
    net.finalize();
    return net;
}

} // namespace

TEST_CASE("single line susceptance matrix") {
    PowerNetwork net = two_bus_net(0.1);
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);
    CHECK(blocks.full(0, 0) == doctest::Approx(10.0));
    CHECK(blocks.full(0, 1) == doctest::Approx(-10.0));
    CHECK(blocks.full(1, 0) == doctest::Approx(-10.0));
    CHECK(blocks.full(1, 1) == doctest::Approx(10.0));
}

TEST_CASE("triangle susceptance symmetry") {
    PowerNetwork net;
    net.buses = {{1, 1, 0, false}, {2, 1, 0, false}, {3, 1, 10, false}};
    net.branches = {{1, 2, 0.2, 100, false}, {2, 3, 0.2, 100, false}, {1, 3, 0.2, 100, false}};
    net.generators = {{1, 0, 100, {CostKind::Linear, 0, 10, 0}}};
    net.finalize();
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);
    for (int i = 0; i < 3; ++i) {
        CHECK(blocks.full(i, i) == doctest::Approx(10.0));
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK(blocks.full(i, j) == doctest::Approx(-5.0));
    }
    CHECK((blocks.full - blocks.full.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("parallel branches merge with summed susceptance and limits") {
    PowerNetwork net;
    net.buses = {{1, 1, 0, false}, {2, 1, 30, false}};
    net.branches = {{1, 2, 0.2, 40, false}, {2, 1, 0.2, 60, false}};
    net.generators = {{1, 0, 100, {CostKind::Linear, 0, 10, 0}}};
    net.finalize();
    REQUIRE(net.n_branches() == 1);
    CHECK(net.branches[0].susceptance_pu() == doctest::Approx(10.0));
    CHECK(net.branches[0].limit_mw == doctest::Approx(100.0));
}

TEST_CASE("disconnected network reports its components") {
    PowerNetwork net;
    net.buses = {{1, 1, 0, false}, {2, 1, 0, false}, {3, 1, 0, false}, {4, 1, 0, false}};
    net.branches = {{1, 2, 0.1, 100, false}, {3, 4, 0.1, 100, false}};
    net.generators = {{1, 0, 100, {CostKind::Linear, 0, 10, 0}}};
    CHECK_THROWS_WITH_AS(net.finalize(), doctest::Contains("disconnected"), ConfigError);
}

TEST_CASE("random networks match the dense assembly oracle") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        testutil::RandomNetOptions opt;
        opt.n_areas = 2;
        opt.n_tie_lines = 2;
        PowerNetwork net = testutil::random_network(rng, opt);
        auto part = AreaPartition::from_network(net);
        auto blocks = netmodel::build_susceptance(net, part);
        const Eigen::MatrixXd oracle = testutil::dense_susceptance_oracle(net);
        CHECK((blocks.full - oracle).cwiseAbs().maxCoeff() <= 1e-12);
        // Zero row sums.
        CHECK(blocks.full.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(blocks.boundary_equiv.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("kron reduction of a 3-bus chain is a series line") {
    // a(1) - b(2) - c(3), eliminate b: equivalent susceptance 5.
    PowerNetwork net;
    net.buses = {{1, 1, 0, false}, {2, 1, 0, false}, {3, 2, 10, false}};
    net.branches = {{1, 2, 0.1, 100, false}, {2, 3, 0.1, 100, true}};
    net.generators = {{1, 0, 100, {CostKind::Linear, 0, 10, 0}}};
    net.finalize();
    // bus 3 in area 2 -> tie is 2-3, so area 1 interior is {1}, boundary {2}.
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);
    const Eigen::MatrixXd eq = netmodel::kron_reduce(blocks, 1);
    REQUIRE(eq.rows() == 1);
    // One boundary bus left: the internal equivalent collapses to zero
    // (zero row sums), so only the tie term remains in boundary_equiv.
    CHECK(eq(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

    // A genuine series reduction: chain inside one area with two boundary buses.
    PowerNetwork net2;
    net2.buses = {{1, 1, 0, false}, {2, 1, 0, false}, {3, 1, 0, false},
                  {11, 2, 10, false}, {12, 2, 0, false}};
    net2.branches = {{1, 2, 0.1, 100, false}, {2, 3, 0.1, 100, false},
                     {1, 11, 0.1, 100, false}, {3, 12, 0.1, 100, false},
                     {11, 12, 0.1, 100, false}};
    net2.generators = {{1, 0, 100, {CostKind::Linear, 0, 10, 0}}};
    net2.finalize();
    auto part2 = AreaPartition::from_network(net2);
    auto blocks2 = netmodel::build_susceptance(net2, part2);
    const Eigen::MatrixXd eq2 = netmodel::kron_reduce(blocks2, 1);
    REQUIRE(eq2.rows() == 2); // boundary buses {1, 3}
    CHECK(eq2(0, 0) == doctest::Approx(5.0));
    CHECK(eq2(0, 1) == doctest::Approx(-5.0));
    CHECK(eq2(1, 1) == doctest::Approx(5.0));
}

TEST_CASE("area with no interior buses reduces to itself") {
    PowerNetwork net = two_bus_net();
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);
    const Eigen::MatrixXd eq = netmodel::kron_reduce(blocks, 1);
    REQUIRE(eq.rows() == 1);
    CHECK(eq(0, 0) == doctest::Approx(0.0)); // no internal lines at all
}

TEST_CASE("reduction exactness on random networks") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> inj(-1.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        testutil::RandomNetOptions opt;
        opt.n_areas = 2;
        opt.max_buses = 10;
        opt.n_tie_lines = 1 + trial % 3;
        PowerNetwork net = testutil::random_network(rng, opt);
        auto part = AreaPartition::from_network(net);
        auto blocks = netmodel::build_susceptance(net, part);

        for (AreaId a : part.areas) {
            const auto& interior = part.interior_buses.at(a);
            const auto& boundary = part.boundary_buses.at(a);
            if (boundary.empty()) continue;
            const int ni = static_cast<int>(interior.size());
            const int nb = static_cast<int>(boundary.size());

            Eigen::VectorXd p_int(ni);
            for (int i = 0; i < ni; ++i) p_int(i) = inj(rng);
            Eigen::VectorXd theta_b(nb);
            for (int b = 0; b < nb; ++b) theta_b(b) = 0.2 * inj(rng);

            // Full model: solve interior angles, read boundary injections of
            // the internal network.
            Eigen::MatrixXd y_ii(ni, ni), y_ib(ni, nb), y_bi(nb, ni);
            Eigen::MatrixXd y_bb = netmodel::kron_reduce(blocks, a); // to compare against
            const PowerNetwork& n = net;
            Eigen::MatrixXd internal_bb = Eigen::MatrixXd::Zero(nb, nb);
            {
                // internal-only matrix blocks
                Eigen::MatrixXd internal = blocks.full;
                for (const Branch& br : part.tie_lines) {
                    const int f = n.bus_index(br.from_bus);
                    const int t = n.bus_index(br.to_bus);
                    const double bb = br.susceptance_pu();
                    internal(f, f) -= bb;
                    internal(t, t) -= bb;
                    internal(f, t) += bb;
                    internal(t, f) += bb;
                }
                for (int i = 0; i < ni; ++i) {
                    for (int j = 0; j < ni; ++j)
                        y_ii(i, j) = internal(n.bus_index(interior[i]), n.bus_index(interior[j]));
                    for (int b = 0; b < nb; ++b) {
                        y_ib(i, b) = internal(n.bus_index(interior[i]), n.bus_index(boundary[b]));
                        y_bi(b, i) = internal(n.bus_index(boundary[b]), n.bus_index(interior[i]));
                    }
                }
                for (int b = 0; b < nb; ++b)
                    for (int c = 0; c < nb; ++c)
                        internal_bb(b, c) = internal(n.bus_index(boundary[b]), n.bus_index(boundary[c]));
            }
            Eigen::VectorXd boundary_inj_full;
            if (ni > 0) {
                const Eigen::VectorXd theta_i =
                    Eigen::PartialPivLU<Eigen::MatrixXd>(y_ii).solve(p_int - y_ib * theta_b);
                boundary_inj_full = y_bi * theta_i + internal_bb * theta_b;
            } else {
                boundary_inj_full = internal_bb * theta_b;
            }

            // Reduced model: Ytilde theta_b - gtilde.
            const Eigen::VectorXd gtilde = netmodel::kron_equivalent_injection(blocks, a, p_int);
            const Eigen::VectorXd boundary_inj_reduced = y_bb * theta_b - gtilde;

            CHECK((boundary_inj_full - boundary_inj_reduced).cwiseAbs().maxCoeff() <= 1e-9);
            // Schur complement stays symmetric.
            CHECK((y_bb - y_bb.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("dc flows: sign, shift invariance, and unit conversion") {
    PowerNetwork net = two_bus_net(0.1);
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);

    Eigen::VectorXd theta(2);
    theta << 0.1, 0.0;
    Eigen::VectorXd flows = netmodel::dc_flows(blocks, theta);
    CHECK(flows(0) == doctest::Approx(100.0)); // 0.1 rad / 0.1 pu * 100 MVA

    // Uniform shift leaves flows unchanged.
    Eigen::VectorXd shifted = theta.array() + 3.7;
    CHECK((netmodel::dc_flows(blocks, shifted) - flows).cwiseAbs().maxCoeff() <= 1e-9);

    // Antisymmetry under direction reversal.
    PowerNetwork rev = two_bus_net(0.1);
    std::swap(rev.branches[0].from_bus, rev.branches[0].to_bus);
    rev.finalize();
    auto rblocks = netmodel::build_susceptance(rev, AreaPartition::from_network(rev));
    CHECK(netmodel::dc_flows(rblocks, theta)(0) == doctest::Approx(-100.0));
}

TEST_CASE("tie shift factors match finite differences") {
    std::mt19937_64 rng(11);
    testutil::RandomNetOptions opt;
    opt.n_areas = 2;
    opt.n_tie_lines = 2;
    PowerNetwork net = testutil::random_network(rng, opt);
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);

    const Eigen::MatrixXd s = netmodel::tie_shift_factors(blocks);
    const int nb = blocks.n_boundary();
    const int ref = blocks.boundary_ref();

    // Balanced injection pairs (b, ref): S column b equals the flow response.
    for (int b = 0; b < nb; ++b) {
        if (b == ref) continue;
        Eigen::VectorXd p = Eigen::VectorXd::Zero(nb);
        p(b) = 1.0;
        p(ref) -= 1.0;
        const Eigen::VectorXd theta = netmodel::solve_boundary_pinned(blocks, p);
        const Eigen::VectorXd flows = blocks.tie_flow_matrix() * theta;
        CHECK((s.col(b) - flows).cwiseAbs().maxCoeff() <= 1e-8);
    }

    // Zero injection -> zero flows.
    CHECK((s * Eigen::VectorXd::Zero(nb)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single tie-line shift factor is a unit split") {
    PowerNetwork net = two_bus_net(0.1);
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);
    const Eigen::MatrixXd s = netmodel::tie_shift_factors(blocks);
    REQUIRE(s.rows() == 1);
    // Injecting at the non-reference boundary bus moves the whole MW over
    // the single tie: magnitude 1 toward the reference.
    CHECK(std::abs(s(0, 1)) == doctest::Approx(1.0));
    CHECK(s(0, blocks.boundary_ref()) == doctest::Approx(0.0));
}

TEST_CASE("three-area boundary shift factors balance at every node") {
    std::mt19937_64 rng(29);
    testutil::RandomNetOptions opt;
    opt.n_areas = 3;
    opt.n_tie_lines = 4;
    PowerNetwork net = testutil::random_network(rng, opt);
    auto part = AreaPartition::from_network(net);
    auto blocks = netmodel::build_susceptance(net, part);

    const Eigen::MatrixXd s = netmodel::tie_shift_factors(blocks);
    const int nb = blocks.n_boundary();
    const int ref = blocks.boundary_ref();
    std::uniform_real_distribution<double> u(-1.0, 1.0);

    // A balanced injection: shift-factor flows equal the solved flows, and
    // the boundary state they come from balances every equivalent node.
    Eigen::VectorXd p(nb);
    for (int b = 0; b < nb; ++b) p(b) = u(rng);
    p.array() -= p.mean();
    const Eigen::VectorXd theta = netmodel::solve_boundary_pinned(blocks, p);
    const Eigen::VectorXd flows = blocks.tie_flow_matrix() * theta;
    CHECK((s * p - flows).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((blocks.boundary_equiv * theta - p).cwiseAbs().maxCoeff() <= 1e-9);
    (void)ref;
}
