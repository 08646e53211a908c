#include "seamsim/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "seamsim/rng.hpp"
#include "seamsim/settlement.hpp"

namespace seamsim::experiments {

using market::ClearingSolution;
using market::Mechanism;
using netmodel::SusceptanceBlocks;

namespace {

constexpr double kOverflowTolMw = 1e-6;

Eigen::VectorXd bus_injections_pu(const SusceptanceBlocks& blocks, const Eigen::VectorXd& g_mw_full,
                                  const Eigen::VectorXd& load_mw) {
    const PowerNetwork& net = *blocks.net;
    Eigen::VectorXd p = -load_mw / net.base_mva;
    for (int j = 0; j < net.n_generators(); ++j)
        p(net.bus_index(net.generators[j].bus)) += g_mw_full(j) / net.base_mva;
    return p;
}

std::vector<int> tie_branch_indices(const SusceptanceBlocks& blocks) {
    const PowerNetwork& net = *blocks.net;
    std::vector<int> idx;
    for (const Branch& tie : blocks.part.tie_lines)
        for (int l = 0; l < net.n_branches(); ++l) {
            const Branch& br = net.branches[l];
            if (br.is_tie_line && br.from_bus == tie.from_bus && br.to_bus == tie.to_bus) {
                idx.push_back(l);
                break;
            }
        }
    return idx;
}

/// Net MW moving into the lower-ordered area of each tie pair, keyed by pair.
std::map<std::pair<AreaId, AreaId>, double> pair_net_flows(const SusceptanceBlocks& blocks,
                                                           const Eigen::VectorXd& tie_flows_mw) {
    std::map<std::pair<AreaId, AreaId>, double> net_flow;
    for (int l = 0; l < blocks.part.n_tie_lines(); ++l) {
        const Branch& tie = blocks.part.tie_lines[l];
        const AreaId fa = blocks.part.area_of(tie.from_bus);
        const AreaId ta = blocks.part.area_of(tie.to_bus);
        const std::pair<AreaId, AreaId> key = fa < ta ? std::pair{fa, ta} : std::pair{ta, fa};
        // flow from->to imports into the to-side area
        const double into_first = (ta == key.first) ? tie_flows_mw(l) : -tie_flows_mw(l);
        net_flow[key] += into_first;
    }
    return net_flow;
}

double net_interchange_mw(const SusceptanceBlocks& blocks, const ClearingSolution& sol) {
    if (sol.mechanism == Mechanism::Cts) {
        double total = 0.0;
        for (double q : sol.interchange_q_mw) total += std::abs(q);
        return total;
    }
    double total = 0.0;
    for (const auto& [pair, f] : pair_net_flows(blocks, sol.tie_flows_mw)) total += std::abs(f);
    return total;
}

} // namespace

OverflowStats audit_loop_flow(const SusceptanceBlocks& blocks, const Eigen::VectorXd& g_mw_full,
                              const Eigen::VectorXd& load_mw,
                              const std::map<AreaId, Eigen::VectorXd>& scheduled_tie_flows_mw) {
    const PowerNetwork& net = *blocks.net;
    OverflowStats stats;

    const Eigen::VectorXd p = bus_injections_pu(blocks, g_mw_full, load_mw);
    const Eigen::VectorXd theta = netmodel::solve_full_pinned(blocks, p);
    stats.exact_flows_mw = netmodel::dc_flows(blocks, theta);

    double ratio_sum = 0.0;
    for (int l = 0; l < net.n_branches(); ++l) {
        const Branch& br = net.branches[l];
        if (!br.has_limit()) continue;
        const double excess = std::abs(stats.exact_flows_mw(l)) - br.limit_mw;
        if (excess > kOverflowTolMw) {
            ++stats.overflow_count;
            ratio_sum += excess / br.limit_mw;
        }
    }
    if (stats.overflow_count > 0)
        stats.mean_overflow_ratio_pct = 100.0 * ratio_sum / stats.overflow_count;

    const std::vector<int> tie_idx = tie_branch_indices(blocks);
    for (const auto& [area, sched] : scheduled_tie_flows_mw) {
        double diff = 0.0, norm = 0.0;
        for (int l = 0; l < blocks.part.n_tie_lines(); ++l) {
            const Branch& tie = blocks.part.tie_lines[l];
            if (blocks.part.area_of(tie.from_bus) != area && blocks.part.area_of(tie.to_bus) != area)
                continue;
            const double exact = stats.exact_flows_mw(tie_idx[l]);
            diff += std::abs(exact - sched(l));
            norm += std::max(std::abs(exact), std::abs(sched(l)));
        }
        stats.tie_discrepancy_pct[area] = norm > 1e-9 ? 100.0 * diff / norm : 0.0;
    }
    return stats;
}

OverflowStats audit_loop_flow(const SusceptanceBlocks& blocks, const Eigen::VectorXd& g_mw_full,
                              const Eigen::VectorXd& load_mw,
                              const Eigen::VectorXd& scheduled_tie_flows_mw) {
    std::map<AreaId, Eigen::VectorXd> by_area;
    for (AreaId a : blocks.part.areas) by_area[a] = scheduled_tie_flows_mw;
    return audit_loop_flow(blocks, g_mw_full, load_mw, by_area);
}

std::map<AreaId, Eigen::VectorXd> cts_scheduled_tie_flows(const SusceptanceBlocks& blocks,
                                                          const std::map<AreaId, BusId>& proxy_bus,
                                                          const ClearingSolution& cts) {
    const AreaPartition& part = blocks.part;
    std::map<AreaId, Eigen::VectorXd> sched;
    for (AreaId a : part.areas) sched[a] = Eigen::VectorXd::Zero(part.n_tie_lines());

    for (size_t p = 0; p < cts.interchange_pairs.size(); ++p) {
        const auto [a_lo, a_hi] = cts.interchange_pairs[p];
        const double q = cts.interchange_q_mw[p]; // > 0 imports into a_lo
        for (AreaId a : {a_lo, a_hi}) {
            const double import_a = (a == a_lo) ? q : -q;
            const BusId proxy = proxy_bus.at(a);
            // Ties of this pair that land on the proxy bus; if the proxy is
            // not a tie endpoint of the pair, the model is agnostic and the
            // schedule spreads evenly over the pair's ties.
            std::vector<int> at_proxy, of_pair;
            for (int l = 0; l < part.n_tie_lines(); ++l) {
                const Branch& tie = part.tie_lines[l];
                const auto mm = std::minmax(part.area_of(tie.from_bus), part.area_of(tie.to_bus));
                if (std::pair<AreaId, AreaId>(mm.first, mm.second) != std::pair<AreaId, AreaId>(a_lo, a_hi))
                    continue;
                of_pair.push_back(l);
                if (tie.from_bus == proxy || tie.to_bus == proxy) at_proxy.push_back(l);
            }
            const std::vector<int>& lines = at_proxy.empty() ? of_pair : at_proxy;
            if (lines.empty()) continue;
            for (int l : lines) {
                const Branch& tie = part.tie_lines[l];
                const double toward_a = import_a / static_cast<double>(lines.size());
                sched[a](l) += (part.area_of(tie.to_bus) == a) ? toward_a : -toward_a;
            }
        }
    }
    return sched;
}

PowerNetwork scale_area_costs(const PowerNetwork& net, AreaId area, double w) {
    PowerNetwork out = net;
    for (Generator& g : out.generators) {
        if (net.bus(g.bus).area != area) continue;
        g.cost.c1 *= w;
        g.cost.c2 *= w;
    }
    return out;
}

std::vector<WSweepRow> run_w_sweep(const PowerNetwork& net, const BidBook& book,
                                   const std::vector<double>& w_values) {
    const AreaPartition base_part = AreaPartition::from_network(net);
    const AreaId first_area = base_part.areas.front();

    std::vector<WSweepRow> rows;
    for (double w : w_values) {
        WSweepRow row;
        row.w = w;
        try {
            const PowerNetwork net_w = scale_area_costs(net, first_area, w);
            const AreaPartition part = AreaPartition::from_network(net_w);
            const SusceptanceBlocks blocks = netmodel::build_susceptance(net_w, part);
            const ClearingSolution sol = market::solve_gcts(blocks, book);
            row.feasible = true;
            row.cleared_s_mw = sol.s_mw;
            row.tie_flows_mw = sol.tie_flows_mw;
            row.boundary_price = sol.boundary_price;
            row.internal_cost = sol.internal_cost;
            row.interface_cost = sol.interface_cost;
            const bids::IncidenceMatrix m = bids::build_incidence(book, part);
            const Eigen::VectorXd residual =
                blocks.boundary_equiv * sol.theta_bar - m.stacked * (sol.s_mw / net_w.base_mva);
            row.max_boundary_residual_pu = residual.size() ? residual.cwiseAbs().maxCoeff() : 0.0;
        } catch (const InfeasibleError& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<SweepPoint> run_dpi_sweep(const PowerNetwork& net, const BidBook& book,
                                      const std::vector<double>& dpi_values,
                                      const std::vector<double>& w_values) {
    const AreaPartition base_part = AreaPartition::from_network(net);
    const AreaId first_area = base_part.areas.front();

    std::vector<SweepPoint> points;
    for (double w : w_values) {
        const PowerNetwork net_w = scale_area_costs(net, first_area, w);
        const AreaPartition part = AreaPartition::from_network(net_w);
        const SusceptanceBlocks blocks = netmodel::build_susceptance(net_w, part);
        const double cost_jed = market::solve_jed(blocks).internal_cost;
        for (double dpi : dpi_values) {
            BidBook priced = book;
            for (InterfaceBid& b : priced.bids) b.dpi = dpi;
            SweepPoint pt;
            pt.w = w;
            pt.dpi = dpi;
            pt.cost_jed = cost_jed;
            pt.cost_gcts = market::solve_gcts(blocks, priced).internal_cost;
            points.push_back(pt);
        }
    }
    return points;
}

Eigen::VectorXd realized_loads(const PowerNetwork& net, const caseio::ScenarioConfig& sc,
                               int scenario) {
    const int n = net.n_buses();
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) {
        const double z =
            rng::normal(sc.rng_seed, static_cast<std::uint64_t>(scenario) * n + i);
        d(i) = std::max(0.0, net.buses[i].load_mw * (1.0 + sc.load_sigma_fraction * z));
    }
    return d;
}

std::vector<ComparisonRow> run_realtime_mc(const PowerNetwork& net, const BidBook& book,
                                           const caseio::ScenarioConfig& scenario,
                                           const std::vector<Mechanism>& mechanisms) {
    const AreaPartition part = AreaPartition::from_network(net);
    const SusceptanceBlocks blocks = netmodel::build_susceptance(net, part);
    const std::map<AreaId, BusId> proxies = market::default_proxies(part);

    struct PerMechanism {
        ComparisonRow row;
        ClearingSolution look_ahead;
        std::map<AreaId, Eigen::VectorXd> sched_ties;
        double cost_sum = 0.0;
        double overflow_lines_sum = 0.0;
        double overflow_ratio_sum = 0.0;
        double discrepancy_sum = 0.0;
    };
    std::vector<PerMechanism> per;

    for (Mechanism mech : mechanisms) {
        PerMechanism pm;
        pm.row.mechanism = mech;
        switch (mech) {
            case Mechanism::Jed: pm.look_ahead = market::solve_jed(blocks); break;
            case Mechanism::Gcts: pm.look_ahead = market::solve_gcts(blocks, book); break;
            case Mechanism::Cts: pm.look_ahead = market::solve_cts(blocks, proxies, book); break;
        }
        pm.row.net_interchange_mw = net_interchange_mw(blocks, pm.look_ahead);
        pm.row.lookahead_generation_cost = pm.look_ahead.internal_cost;
        pm.row.has_lookahead_total = mech != Mechanism::Jed;
        pm.row.lookahead_total_cost = pm.look_ahead.total_cost();
        if (mech == Mechanism::Cts) {
            pm.sched_ties = cts_scheduled_tie_flows(blocks, proxies, pm.look_ahead);
        } else if (pm.look_ahead.tie_flows_mw.size()) {
            for (AreaId a : part.areas) pm.sched_ties[a] = pm.look_ahead.tie_flows_mw;
        }
        per.push_back(std::move(pm));
    }

    for (int k = 0; k < scenario.n_samples; ++k) {
        const Eigen::VectorXd d_k = realized_loads(net, scenario, k);

        for (PerMechanism& pm : per) {
            try {
                Eigen::VectorXd g_full = Eigen::VectorXd::Zero(net.n_generators());
                double cost = 0.0;
                bool relaxed = false;

                if (pm.row.mechanism == Mechanism::Jed) {
                    const ClearingSolution rt = market::solve_jed(blocks, d_k);
                    g_full = rt.g_mw;
                    cost = rt.internal_cost;
                    // The joint re-solve's own tie flows are its schedule.
                    for (AreaId a : part.areas) pm.sched_ties[a] = rt.tie_flows_mw;
                } else if (pm.row.mechanism == Mechanism::Gcts) {
                    for (AreaId a : part.areas) {
                        const market::RealtimeSolution rt =
                            market::solve_realtime(blocks, a, pm.look_ahead.theta_bar, d_k);
                        for (size_t j = 0; j < rt.gen_idx.size(); ++j)
                            g_full(rt.gen_idx[j]) = rt.g_mw(static_cast<int>(j));
                        cost += rt.cost;
                        relaxed = relaxed || rt.relaxed;
                    }
                    cost += pm.look_ahead.interface_cost;
                } else {
                    for (AreaId a : part.areas) {
                        std::map<BusId, double> inj;
                        for (size_t p = 0; p < pm.look_ahead.interchange_pairs.size(); ++p) {
                            const auto [lo, hi] = pm.look_ahead.interchange_pairs[p];
                            const double q = pm.look_ahead.interchange_q_mw[p];
                            if (a == lo) inj[proxies.at(a)] += q;
                            if (a == hi) inj[proxies.at(a)] -= q;
                        }
                        const market::RealtimeSolution rt =
                            market::solve_realtime_isolated(blocks, a, inj, d_k);
                        for (size_t j = 0; j < rt.gen_idx.size(); ++j)
                            g_full(rt.gen_idx[j]) = rt.g_mw(static_cast<int>(j));
                        cost += rt.cost;
                        relaxed = relaxed || rt.relaxed;
                    }
                    cost += pm.look_ahead.interface_cost;
                }

                const OverflowStats stats = audit_loop_flow(blocks, g_full, d_k, pm.sched_ties);
                pm.cost_sum += cost;
                pm.overflow_lines_sum += stats.overflow_count;
                if (stats.overflow_count > 0) {
                    ++pm.row.scenarios_with_overflow;
                    pm.overflow_ratio_sum += stats.mean_overflow_ratio_pct;
                }
                double disc = 0.0;
                for (const auto& [a, v] : stats.tie_discrepancy_pct) disc += v;
                if (!stats.tie_discrepancy_pct.empty())
                    disc /= static_cast<double>(stats.tie_discrepancy_pct.size());
                pm.discrepancy_sum += disc;
                if (relaxed) ++pm.row.relaxed_scenarios;
                ++pm.row.scenarios;
            } catch (const InfeasibleError&) {
                ++pm.row.failed_scenarios;
            }
        }
    }

    std::vector<ComparisonRow> rows;
    for (PerMechanism& pm : per) {
        if (pm.row.scenarios > 0) {
            pm.row.avg_realtime_total_cost = pm.cost_sum / pm.row.scenarios;
            pm.row.mean_overflow_lines = pm.overflow_lines_sum / pm.row.scenarios;
            pm.row.mean_tie_discrepancy_pct = pm.discrepancy_sum / pm.row.scenarios;
            if (pm.row.scenarios_with_overflow > 0)
                pm.row.mean_overflow_ratio_pct = pm.overflow_ratio_sum / pm.row.scenarios_with_overflow;
        }
        rows.push_back(pm.row);
    }
    return rows;
}

} // namespace seamsim::experiments
