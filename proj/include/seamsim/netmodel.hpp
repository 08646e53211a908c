#pragma once

#include <Eigen/Dense>

#include <memory>

#include "seamsim/types.hpp"

namespace seamsim::netmodel {

/// DC nodal susceptance model of a finalized interconnection, partitioned
/// per AreaPartition. All matrices are per-unit. Immutable after build and
/// self-contained: it owns a copy of the network it was built from.
struct SusceptanceBlocks {
    std::shared_ptr<const PowerNetwork> owned_net;
    const PowerNetwork* net = nullptr; // points into owned_net
    AreaPartition part;

    /// Full n x n nodal matrix (tie-lines included), indexed by dense bus
    /// index. Symmetric, zero row sums.
    Eigen::MatrixXd full;

    /// Dense bus indices of each area's interior / boundary buses, in
    /// partition order.
    std::map<AreaId, std::vector<int>> interior_idx;
    std::map<AreaId, std::vector<int>> boundary_idx;

    /// Dense bus index for each entry of the concatenated boundary vector.
    std::vector<int> boundary_all_idx;

    /// Per-area interior-eliminated equivalents Ytilde (internal network
    /// only, no tie-line terms). Square in the area's boundary count.
    std::map<AreaId, Eigen::MatrixXd> area_equiv;

    /// Boundary equivalent matrix: block-diagonal area equivalents plus the
    /// tie-line Laplacian restricted to boundary buses. Symmetric, zero row
    /// sums, size n_boundary x n_boundary.
    Eigen::MatrixXd boundary_equiv;

    int n_buses() const { return static_cast<int>(full.rows()); }
    int n_boundary() const { return static_cast<int>(boundary_equiv.rows()); }

    /// Row of the tie-line flow matrix Hbar over the boundary vector:
    /// +1/x at the from end, -1/x at the to end (pu flow per rad).
    Eigen::MatrixXd tie_flow_matrix() const;

    /// Global angle reference: dense index of the lowest bus id in the
    /// first area.
    int slack_index() const;

    /// Boundary reference: position in the boundary vector of the lowest
    /// boundary bus id of the first area.
    int boundary_ref() const;
};

/// Assemble the partitioned DC susceptance model.
SusceptanceBlocks build_susceptance(const PowerNetwork& net, const AreaPartition& part);

/// Interior elimination of one area's internal network (Schur complement):
/// Ytilde = Y_bb - Y_bi Y_ii^{-1} Y_ib. Returns the boundary-square
/// equivalent; throws NumericalError if the interior block is singular.
Eigen::MatrixXd kron_reduce(const SusceptanceBlocks& blocks, AreaId area);

/// Equivalent boundary injection of one area's interior sources:
/// gtilde = -Y_bi Y_ii^{-1} p_interior (pu). p_interior is in interior
/// partition order.
Eigen::VectorXd kron_equivalent_injection(const SusceptanceBlocks& blocks, AreaId area,
                                          const Eigen::VectorXd& p_interior_pu);

/// Shift factors of boundary injections onto tie-line flows:
/// S = Hbar * pinned-inverse(boundary_equiv), one row per tie-line.
Eigen::MatrixXd tie_shift_factors(const SusceptanceBlocks& blocks);

/// Per-branch MW flows from a full angle vector (radians, dense bus order).
/// Branch order follows net.branches.
Eigen::VectorXd dc_flows(const SusceptanceBlocks& blocks, const Eigen::VectorXd& theta);

/// Tie-line MW flows from the boundary angle vector alone.
Eigen::VectorXd tie_flows_from_boundary(const SusceptanceBlocks& blocks,
                                        const Eigen::VectorXd& theta_bar);

/// Solve boundary_equiv * theta_bar = rhs with the reference row pinned to
/// zero. rhs entries must sum to ~0 (consistency of the singular system).
Eigen::VectorXd solve_boundary_pinned(const SusceptanceBlocks& blocks, const Eigen::VectorXd& rhs_pu);

/// Solve the full-network DC equations B theta = p (pu) with the global
/// slack pinned to zero. p must sum to ~0.
Eigen::VectorXd solve_full_pinned(const SusceptanceBlocks& blocks, const Eigen::VectorXd& p_pu);

} // namespace seamsim::netmodel
