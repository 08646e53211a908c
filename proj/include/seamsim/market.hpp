#pragma once

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <vector>

#include "seamsim/bids.hpp"
#include "seamsim/netmodel.hpp"
#include "seamsim/qpsolver.hpp"
#include "seamsim/types.hpp"

namespace seamsim::market {

enum class Mechanism { Jed, Cts, Gcts };

const char* mechanism_name(Mechanism m);

/// Primal and dual outcome of one look-ahead clearing program. All public
/// quantities are in MW / $ / $ per MWh; angles in radians.
struct ClearingSolution {
    Mechanism mechanism = Mechanism::Jed;

    Eigen::VectorXd g_mw;        // per generator, net order
    Eigen::VectorXd s_mw;        // per bid, book order (empty for JED)
    Eigen::VectorXd theta;       // per bus (proxy-model angles for CTS)
    Eigen::VectorXd theta_bar;   // boundary angles, pinned normalization (empty for CTS)

    double internal_cost = 0.0;  // sum of generator cost curves, $/h
    double interface_cost = 0.0; // dpi's, $/h
    double total_cost() const { return internal_cost + interface_cost; }

    Eigen::VectorXd lmp;            // per bus, $/MWh
    Eigen::VectorXd boundary_price; // per boundary position, $/MWh (GCTS only)
    Eigen::VectorXd eta_signed;     // per branch, $/MWh (0 for unlimited/absent rows)
    Eigen::VectorXd eta_total;      // per branch, eta+ + eta-, $/MWh

    std::vector<double> interchange_q_mw; // CTS: scalar interchange per area pair
    std::vector<std::pair<AreaId, AreaId>> interchange_pairs; // q > 0 imports into .first

    qp::KktResiduals kkt;
    int iterations = 0;

    /// Tie-line MW flows implied by the boundary state (GCTS/JED).
    Eigen::VectorXd tie_flows_mw;
};

/// One area's real-time dispatch against a fixed boundary state (or fixed
/// proxy injections for the CTS comparator).
struct RealtimeSolution {
    AreaId area = 0;
    std::vector<int> bus_idx;   // dense indices of this area's buses
    std::vector<int> gen_idx;   // global generator indices
    std::vector<int> line_idx;  // global branch indices of internal lines

    Eigen::VectorXd g_mw;       // per gen_idx entry
    Eigen::VectorXd theta;      // per bus_idx entry (boundary entries fixed inputs)
    Eigen::VectorXd lmp;        // per bus_idx entry, $/MWh
    Eigen::VectorXd eta_signed; // per line_idx entry, $/MWh
    Eigen::VectorXd eta_total;  // per line_idx entry, $/MWh
    Eigen::VectorXd flows_mw;   // per line_idx entry

    double cost = 0.0;          // c_i(g_i), $/h
    bool relaxed = false;       // line limits uniformly relaxed to restore feasibility
    double relax_slack_mw = 0.0;
    qp::KktResiduals kkt;
};

/// Joint economic dispatch: one DC-OPF over the stitched interconnection.
ClearingSolution solve_jed(const netmodel::SusceptanceBlocks& blocks,
                           const std::optional<Eigen::VectorXd>& load_mw_override = std::nullopt);

/// GCTS clearing: JED plus interface bids, bid caps, and the boundary
/// equation tying the boundary state to cleared bids. Handles any number of
/// areas >= 2.
ClearingSolution solve_gcts(const netmodel::SusceptanceBlocks& blocks, const BidBook& book,
                            const std::optional<Eigen::VectorXd>& load_mw_override = std::nullopt);

/// Explicit n-area entry point; identical model to solve_gcts.
ClearingSolution solve_gcts_n_area(const netmodel::SusceptanceBlocks& blocks, const BidBook& book,
                                   const std::optional<Eigen::VectorXd>& load_mw_override = std::nullopt);

/// CTS clearing: every bid is moved to the proxy-bus pair of its two areas,
/// each area is modelled on its internal network only, and a scalar
/// interchange per area pair enters at the proxy buses.
ClearingSolution solve_cts(const netmodel::SusceptanceBlocks& blocks,
                           const std::map<AreaId, BusId>& proxy_bus, const BidBook& book,
                           const std::optional<Eigen::VectorXd>& load_mw_override = std::nullopt);

/// Default proxy selection: lowest-id boundary bus of each area.
std::map<AreaId, BusId> default_proxies(const AreaPartition& part);

/// Boundary state from cleared bids: boundary_equiv * theta_bar = M s with
/// the reference row pinned to zero.
Eigen::VectorXd recover_boundary_state(const netmodel::SusceptanceBlocks& blocks,
                                       const bids::IncidenceMatrix& m, const Eigen::VectorXd& s_mw);

struct RealtimeOptions {
    bool allow_line_relaxation = true;
};

/// Area real-time dispatch with all boundary angles fixed.
RealtimeSolution solve_realtime(const netmodel::SusceptanceBlocks& blocks, AreaId area,
                                const Eigen::VectorXd& theta_bar,
                                const Eigen::VectorXd& load_mw, // full dense-bus vector
                                const RealtimeOptions& opts = {});

/// Area real-time dispatch on the isolated internal network with fixed MW
/// injections (CTS proxy schedules, or zero for autarky).
RealtimeSolution solve_realtime_isolated(const netmodel::SusceptanceBlocks& blocks, AreaId area,
                                         const std::map<BusId, double>& injection_mw,
                                         const Eigen::VectorXd& load_mw,
                                         const RealtimeOptions& opts = {});

/// Conventional pre-CTS comparator: each area clears the bid book against
/// its own network with its share of every bid price; the schedule is the
/// elementwise minimum of the two cleared vectors. Two areas, single
/// tie-line only.
struct SeparateClearingResult {
    Eigen::VectorXd s_mw;          // scheduled: elementwise min
    Eigen::VectorXd s_area1_mw;    // cleared by the first area
    Eigen::VectorXd s_area2_mw;    // cleared by the second area
};
SeparateClearingResult solve_separate_clearing(const netmodel::SusceptanceBlocks& blocks,
                                               const BidBook& book, double price_split_fraction);

} // namespace seamsim::market
