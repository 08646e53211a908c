#include "seamsim/netmodel.hpp"

#include <Eigen/LU>

#include <sstream>

namespace seamsim::netmodel {

namespace {

// Condition estimate from the LU factors' diagonal ratio; cheap and adequate
// for the error messages here.
double pivot_ratio(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
    const Eigen::VectorXd d = lu.matrixLU().diagonal().cwiseAbs();
    if (d.size() == 0) return 0.0;
    const double dmin = d.minCoeff();
    const double dmax = d.maxCoeff();
    return dmax > 0.0 ? dmin / dmax : 0.0;
}

constexpr double kPivotTol = 1e-10;

Eigen::VectorXd solve_pinned(const Eigen::MatrixXd& m, Eigen::VectorXd rhs, int ref,
                             const char* what) {
    Eigen::MatrixXd a = m;
    a.row(ref).setZero();
    a(ref, ref) = 1.0;
    rhs(ref) = 0.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (pivot_ratio(lu) < kPivotTol) {
        std::ostringstream msg;
        msg << what << ": singular system (pivot ratio " << pivot_ratio(lu) << ")";
        throw NumericalError(msg.str());
    }
    return lu.solve(rhs);
}

} // namespace

Eigen::MatrixXd SusceptanceBlocks::tie_flow_matrix() const {
    const int nl = part.n_tie_lines();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(nl, n_boundary());
    for (int l = 0; l < nl; ++l) {
        const Branch& br = part.tie_lines[l];
        h(l, part.boundary_index(br.from_bus)) += br.susceptance_pu();
        h(l, part.boundary_index(br.to_bus)) -= br.susceptance_pu();
    }
    return h;
}

int SusceptanceBlocks::slack_index() const {
    const AreaId first = part.areas.front();
    BusId lowest = std::numeric_limits<BusId>::max();
    for (const Bus& b : net->buses)
        if (b.area == first) lowest = std::min(lowest, b.id);
    return net->bus_index(lowest);
}

int SusceptanceBlocks::boundary_ref() const {
    const AreaId first = part.areas.front();
    return part.boundary_index(part.boundary_buses.at(first).front());
}

SusceptanceBlocks build_susceptance(const PowerNetwork& net_in, const AreaPartition& part) {
    if (!net_in.finalized()) throw ConfigError("network must be finalized");
    SusceptanceBlocks blocks;
    blocks.owned_net = std::make_shared<const PowerNetwork>(net_in);
    blocks.net = blocks.owned_net.get();
    blocks.part = part;
    const PowerNetwork& net = *blocks.net;

    const int n = net.n_buses();
    blocks.full = Eigen::MatrixXd::Zero(n, n);
    for (const Branch& br : net.branches) {
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const double b = br.susceptance_pu();
        blocks.full(f, f) += b;
        blocks.full(t, t) += b;
        blocks.full(f, t) -= b;
        blocks.full(t, f) -= b;
    }

    for (AreaId a : part.areas) {
        auto& ii = blocks.interior_idx[a];
        for (BusId id : part.interior_buses.at(a)) ii.push_back(net.bus_index(id));
        auto& bi = blocks.boundary_idx[a];
        for (BusId id : part.boundary_buses.at(a)) bi.push_back(net.bus_index(id));
    }
    for (AreaId a : part.areas)
        for (int idx : blocks.boundary_idx[a]) blocks.boundary_all_idx.push_back(idx);

    for (AreaId a : part.areas) blocks.area_equiv[a] = kron_reduce(blocks, a);

    // Boundary equivalent = block-diagonal internal equivalents + tie terms.
    const int nb = static_cast<int>(blocks.boundary_all_idx.size());
    blocks.boundary_equiv = Eigen::MatrixXd::Zero(nb, nb);
    for (AreaId a : part.areas) {
        auto [b0, b1] = part.boundary_range(a);
        blocks.boundary_equiv.block(b0, b0, b1 - b0, b1 - b0) = blocks.area_equiv[a];
    }
    for (const Branch& br : part.tie_lines) {
        const int f = part.boundary_index(br.from_bus);
        const int t = part.boundary_index(br.to_bus);
        const double b = br.susceptance_pu();
        blocks.boundary_equiv(f, f) += b;
        blocks.boundary_equiv(t, t) += b;
        blocks.boundary_equiv(f, t) -= b;
        blocks.boundary_equiv(t, f) -= b;
    }
    return blocks;
}

Eigen::MatrixXd kron_reduce(const SusceptanceBlocks& blocks, AreaId area) {
    const PowerNetwork& net = *blocks.net;
    const auto& part = blocks.part;
    const std::vector<BusId>& interior = part.interior_buses.at(area);
    const std::vector<BusId>& boundary = part.boundary_buses.at(area);
    const int ni = static_cast<int>(interior.size());
    const int nb = static_cast<int>(boundary.size());
    if (nb == 0) return Eigen::MatrixXd(0, 0); // isolated area: nothing to reduce onto

    // Internal network of this area only: tie-lines excluded.
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(ni + nb, ni + nb);
    std::map<BusId, int> local;
    for (int i = 0; i < ni; ++i) local[interior[i]] = i;
    for (int b = 0; b < nb; ++b) local[boundary[b]] = ni + b;
    for (const Branch& br : net.branches) {
        if (br.is_tie_line) continue;
        auto fi = local.find(br.from_bus);
        auto ti = local.find(br.to_bus);
        if (fi == local.end() || ti == local.end()) continue; // other area
        const double b = br.susceptance_pu();
        y(fi->second, fi->second) += b;
        y(ti->second, ti->second) += b;
        y(fi->second, ti->second) -= b;
        y(ti->second, fi->second) -= b;
    }

    if (ni == 0) return y; // nothing to eliminate

    const Eigen::MatrixXd y_ii = y.topLeftCorner(ni, ni);
    const Eigen::MatrixXd y_ib = y.topRightCorner(ni, nb);
    const Eigen::MatrixXd y_bi = y.bottomLeftCorner(nb, ni);
    const Eigen::MatrixXd y_bb = y.bottomRightCorner(nb, nb);

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(y_ii);
    const double ratio = pivot_ratio(lu);
    if (ratio < kPivotTol) {
        std::ostringstream msg;
        msg << "interior block of area " << area << " is singular (pivot ratio " << ratio
            << "); an interior bus group has no path to the boundary";
        throw NumericalError(msg.str());
    }
    Eigen::MatrixXd reduced = y_bb - y_bi * lu.solve(y_ib);
    reduced = 0.5 * (reduced + reduced.transpose().eval()); // keep exact symmetry
    return reduced;
}

Eigen::VectorXd kron_equivalent_injection(const SusceptanceBlocks& blocks, AreaId area,
                                          const Eigen::VectorXd& p_interior_pu) {
    const auto& part = blocks.part;
    const std::vector<BusId>& interior = part.interior_buses.at(area);
    const std::vector<BusId>& boundary = part.boundary_buses.at(area);
    const int ni = static_cast<int>(interior.size());
    const int nb = static_cast<int>(boundary.size());
    if (p_interior_pu.size() != ni)
        throw NumericalError("interior injection vector has wrong size");
    if (ni == 0) return Eigen::VectorXd::Zero(nb);

    Eigen::MatrixXd y_ii(ni, ni);
    Eigen::MatrixXd y_bi(nb, ni);
    const PowerNetwork& net = *blocks.net;
    for (int i = 0; i < ni; ++i) {
        for (int j = 0; j < ni; ++j)
            y_ii(i, j) = blocks.full(net.bus_index(interior[i]), net.bus_index(interior[j]));
        for (int b = 0; b < nb; ++b)
            y_bi(b, i) = blocks.full(net.bus_index(boundary[b]), net.bus_index(interior[i]));
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(y_ii);
    if (pivot_ratio(lu) < kPivotTol)
        throw NumericalError("interior block singular while forming equivalent injection");
    return -y_bi * lu.solve(p_interior_pu);
}

Eigen::MatrixXd tie_shift_factors(const SusceptanceBlocks& blocks) {
    const Eigen::MatrixXd h = blocks.tie_flow_matrix();
    const int nb = blocks.n_boundary();
    const int ref = blocks.boundary_ref();

    Eigen::MatrixXd a = blocks.boundary_equiv;
    a.row(ref).setZero();
    a.col(ref).setZero();
    a(ref, ref) = 1.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    if (pivot_ratio(lu) < kPivotTol)
        throw NumericalError("boundary equivalent matrix is singular beyond the angle reference");

    // S = H * Apinned^{-1} with the reference column zeroed afterwards
    // (A symmetric, so solve A x = H^T per row).
    (void)nb;
    Eigen::MatrixXd s = lu.solve(h.transpose()).transpose();
    s.col(ref).setZero();
    return s;
}

Eigen::VectorXd dc_flows(const SusceptanceBlocks& blocks, const Eigen::VectorXd& theta) {
    const PowerNetwork& net = *blocks.net;
    if (theta.size() != net.n_buses())
        throw NumericalError("angle vector does not cover all buses");
    Eigen::VectorXd flows(net.n_branches());
    for (int l = 0; l < net.n_branches(); ++l) {
        const Branch& br = net.branches[l];
        const double d = theta(net.bus_index(br.from_bus)) - theta(net.bus_index(br.to_bus));
        flows(l) = d * br.susceptance_pu() * net.base_mva;
    }
    return flows;
}

Eigen::VectorXd tie_flows_from_boundary(const SusceptanceBlocks& blocks,
                                        const Eigen::VectorXd& theta_bar) {
    if (theta_bar.size() != blocks.n_boundary())
        throw NumericalError("boundary angle vector has wrong size");
    return blocks.tie_flow_matrix() * theta_bar * blocks.net->base_mva;
}

Eigen::VectorXd solve_boundary_pinned(const SusceptanceBlocks& blocks,
                                      const Eigen::VectorXd& rhs_pu) {
    if (rhs_pu.size() != blocks.n_boundary())
        throw NumericalError("boundary rhs has wrong size");
    return solve_pinned(blocks.boundary_equiv, rhs_pu, blocks.boundary_ref(),
                        "boundary equivalent solve");
}

Eigen::VectorXd solve_full_pinned(const SusceptanceBlocks& blocks, const Eigen::VectorXd& p_pu) {
    if (p_pu.size() != blocks.n_buses())
        throw NumericalError("injection vector has wrong size");
    return solve_pinned(blocks.full, p_pu, blocks.slack_index(), "full network solve");
}

} // namespace seamsim::netmodel
