#pragma once

#include <Eigen/Dense>

#include "seamsim/bids.hpp"
#include "seamsim/market.hpp"
#include "seamsim/netmodel.hpp"

namespace seamsim::settlement {

/// Sensitivity of one area's real-time optimal cost to the boundary state,
/// assembled from the area's balance-row and line-limit duals. Entries in
/// $/rad h over the full boundary vector.
Eigen::VectorXd cost_gradient_wrt_boundary(const netmodel::SusceptanceBlocks& blocks,
                                           const market::RealtimeSolution& rt);

/// Interface-bid settlement prices of one area: mu = M' Btilde^{-1} grad,
/// one entry per bid in $/MWh. Positive means the bid pays the area.
Eigen::VectorXd interface_price_mu(const netmodel::SusceptanceBlocks& blocks,
                                   const bids::IncidenceMatrix& m,
                                   const market::RealtimeSolution& rt);

/// Tie-line congestion prices per bid: rho = M' S' eta_bar, using the
/// look-ahead tie duals (signed). $/MWh per bid.
Eigen::VectorXd congestion_price_rho(const netmodel::SusceptanceBlocks& blocks,
                                     const bids::IncidenceMatrix& m,
                                     const Eigen::VectorXd& tie_eta_signed_per_mwh);

/// Area share of the per-bid congestion price: half of every incident
/// tie-line's contribution.
Eigen::VectorXd congestion_price_rho_share(const netmodel::SusceptanceBlocks& blocks,
                                           const bids::IncidenceMatrix& m,
                                           const Eigen::VectorXd& tie_eta_signed_per_mwh,
                                           AreaId area);

/// One area's real-time settlement and its revenue-adequacy identity
///   (d-g)'lambda + s'(mu + rho_share) = f'eta + tie rent share.
struct AreaSettlement {
    AreaId area = 0;
    double energy_revenue = 0.0;     // (d-g)'lambda over the area's buses, $/h
    double bid_revenue = 0.0;        // s'(mu + rho_share), $/h
    double internal_rent = 0.0;      // f'eta over internal lines, $/h
    double tie_rent_share = 0.0;     // half of incident tie-line rents, $/h
    double net_revenue = 0.0;        // energy + bid revenue
    double residual = 0.0;           // net_revenue - (internal_rent + tie_rent_share)
    Eigen::VectorXd mu;              // per bid, $/MWh
    Eigen::VectorXd rho_share;       // per bid, $/MWh
};

AreaSettlement settle_area(const netmodel::SusceptanceBlocks& blocks,
                           const bids::IncidenceMatrix& m, const Eigen::VectorXd& s_mw,
                           const market::RealtimeSolution& rt,
                           const market::ClearingSolution& look_ahead,
                           const Eigen::VectorXd& realized_load_mw);

struct AuditResult {
    bool ok = false;
    double max_residual = 0.0;        // worst |identity residual|, $/h
    double min_rent = 0.0;            // most negative right-hand side, $/h
    std::vector<AreaSettlement> areas;
};

/// Revenue-adequacy audit across every area, at tolerance tol_dollars_per_hour.
AuditResult revenue_adequacy_audit(const netmodel::SusceptanceBlocks& blocks,
                                   const bids::IncidenceMatrix& m, const Eigen::VectorXd& s_mw,
                                   const std::vector<market::RealtimeSolution>& rt_by_area,
                                   const market::ClearingSolution& look_ahead,
                                   const Eigen::VectorXd& realized_load_mw,
                                   double tol_dollars_per_hour = 1e-6);

struct SurplusReport {
    double consumer = 0.0;      // D - lambda'd
    double supplier = 0.0;      // lambda'g - c(g)
    double transmission = 0.0;  // f'eta
    double total() const { return consumer + supplier + transmission; }
};

/// Local surplus of one area's real-time market; D is the constant consumer
/// utility (defaults to zero, cancels in comparisons).
SurplusReport local_surplus(const netmodel::SusceptanceBlocks& blocks,
                            const market::RealtimeSolution& rt,
                            const Eigen::VectorXd& realized_load_mw, double consumer_utility = 0.0);

/// Everything a settlement file needs for one clearing + real-time round.
struct SettlementReport {
    std::vector<AreaSettlement> areas;
    Eigen::VectorXd boundary_price;  // look-ahead clearing prices, $/MWh
    Eigen::VectorXd rho;             // total per-bid congestion price, $/MWh
    double tie_rent_total = 0.0;     // $/h
};

SettlementReport build_report(const netmodel::SusceptanceBlocks& blocks,
                              const bids::IncidenceMatrix& m, const Eigen::VectorXd& s_mw,
                              const std::vector<market::RealtimeSolution>& rt_by_area,
                              const market::ClearingSolution& look_ahead,
                              const Eigen::VectorXd& realized_load_mw);

} // namespace seamsim::settlement
