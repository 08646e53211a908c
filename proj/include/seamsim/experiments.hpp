#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "seamsim/caseio.hpp"
#include "seamsim/market.hpp"
#include "seamsim/netmodel.hpp"

namespace seamsim::experiments {

/// One mechanism's row of the look-ahead / real-time comparison table.
struct ComparisonRow {
    market::Mechanism mechanism = market::Mechanism::Jed;
    double net_interchange_mw = 0.0;
    double lookahead_generation_cost = 0.0;
    bool has_lookahead_total = false; // JED has no interface cost column
    double lookahead_total_cost = 0.0;
    double avg_realtime_total_cost = 0.0;
    int scenarios = 0;
    int failed_scenarios = 0;
    int relaxed_scenarios = 0;
    int scenarios_with_overflow = 0;
    double mean_overflow_lines = 0.0;
    double mean_overflow_ratio_pct = 0.0;
    double mean_tie_discrepancy_pct = 0.0;
};

struct SweepPoint {
    double w = 1.0;
    double dpi = 0.0;
    double cost_gcts = 0.0; // GCTS generation cost, $/h
    double cost_jed = 0.0;  // JED generation cost, $/h
    double gap() const { return cost_gcts - cost_jed; }
};

/// One weighting-factor scenario of the clearing illustration.
struct WSweepRow {
    double w = 1.0;
    bool feasible = false;
    std::string error;
    Eigen::VectorXd cleared_s_mw;
    Eigen::VectorXd tie_flows_mw;
    Eigen::VectorXd boundary_price;
    double internal_cost = 0.0;
    double interface_cost = 0.0;
    double max_boundary_residual_pu = 0.0; // boundary power-flow equation check
};

/// Exact-flow audit of one dispatch against the real topology.
struct OverflowStats {
    Eigen::VectorXd exact_flows_mw;             // per branch
    int overflow_count = 0;                     // lines loaded past their limit
    double mean_overflow_ratio_pct = 0.0;       // mean over overflowed lines
    std::map<AreaId, double> tie_discrepancy_pct; // schedule vs exact, per area
};

/// Recompute global DC flows from a full dispatch and compare each area's
/// scheduled tie-line flow view (partition order) with the exact ones.
OverflowStats audit_loop_flow(const netmodel::SusceptanceBlocks& blocks,
                              const Eigen::VectorXd& g_mw_full, const Eigen::VectorXd& load_mw,
                              const std::map<AreaId, Eigen::VectorXd>& scheduled_tie_flows_mw);

/// Every area shares one physical schedule (JED and GCTS).
OverflowStats audit_loop_flow(const netmodel::SusceptanceBlocks& blocks,
                              const Eigen::VectorXd& g_mw_full, const Eigen::VectorXd& load_mw,
                              const Eigen::VectorXd& scheduled_tie_flows_mw);

/// The tie-flow view each area's CTS proxy model implies: the whole pair
/// interchange enters at the proxy bus.
std::map<AreaId, Eigen::VectorXd> cts_scheduled_tie_flows(
    const netmodel::SusceptanceBlocks& blocks, const std::map<AreaId, BusId>& proxy_bus,
    const market::ClearingSolution& cts);

/// Scale one area's generator price coefficients (c1 and c2) by w.
PowerNetwork scale_area_costs(const PowerNetwork& net, AreaId area, double w);

/// Clearing illustration: clear the bid book under several price
/// weighting factors. Infeasible points are recorded, not fatal.
std::vector<WSweepRow> run_w_sweep(const PowerNetwork& net, const BidBook& book,
                                   const std::vector<double>& w_values);

/// Price-convergence sweep: uniform bid price dpi against the JED benchmark.
std::vector<SweepPoint> run_dpi_sweep(const PowerNetwork& net, const BidBook& book,
                                      const std::vector<double>& dpi_values,
                                      const std::vector<double>& w_values = {1.0});

/// Seeded load realization for scenario k: max(0, d * (1 + sigma * z)).
Eigen::VectorXd realized_loads(const PowerNetwork& net, const caseio::ScenarioConfig& sc, int scenario);

/// Monte-Carlo real-time comparison under common random numbers.
std::vector<ComparisonRow> run_realtime_mc(const PowerNetwork& net, const BidBook& book,
                                           const caseio::ScenarioConfig& scenario,
                                           const std::vector<market::Mechanism>& mechanisms);

} // namespace seamsim::experiments
