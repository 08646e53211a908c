#include "seamsim/settlement.hpp"

#include <algorithm>
#include <cmath>

namespace seamsim::settlement {

using netmodel::SusceptanceBlocks;

Eigen::VectorXd cost_gradient_wrt_boundary(const SusceptanceBlocks& blocks,
                                           const market::RealtimeSolution& rt) {
    const PowerNetwork& net = *blocks.net;
    const double base = net.base_mva;
    const int nb = blocks.n_boundary();
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(nb);

    // Balance-row duals against the full nodal matrix columns.
    for (int b = 0; b < nb; ++b) {
        const int col = blocks.boundary_all_idx[b];
        double acc = 0.0;
        for (size_t i = 0; i < rt.bus_idx.size(); ++i) {
            const double v = blocks.full(rt.bus_idx[i], col);
            if (v != 0.0) acc += v * rt.lmp(static_cast<int>(i));
        }
        grad(b) = acc * base;
    }
    // Line-limit duals: H' eta contributions at this area's boundary buses.
    for (size_t li = 0; li < rt.line_idx.size(); ++li) {
        const double eta = rt.eta_signed(static_cast<int>(li));
        if (eta == 0.0) continue;
        const Branch& br = net.branches[rt.line_idx[li]];
        const double b = br.susceptance_pu();
        const int bf = blocks.part.boundary_index(br.from_bus);
        const int bt = blocks.part.boundary_index(br.to_bus);
        if (bf >= 0) grad(bf) += b * eta * base;
        if (bt >= 0) grad(bt) -= b * eta * base;
    }
    return grad;
}

Eigen::VectorXd interface_price_mu(const SusceptanceBlocks& blocks, const bids::IncidenceMatrix& m,
                                   const market::RealtimeSolution& rt) {
    const Eigen::VectorXd grad = cost_gradient_wrt_boundary(blocks, rt); // $/rad h
    const Eigen::VectorXd z = netmodel::solve_boundary_pinned(blocks, grad);
    return m.stacked.transpose() * z / blocks.net->base_mva; // $/MWh per bid
}

Eigen::VectorXd congestion_price_rho(const SusceptanceBlocks& blocks, const bids::IncidenceMatrix& m,
                                     const Eigen::VectorXd& tie_eta_signed_per_mwh) {
    const Eigen::MatrixXd s = netmodel::tie_shift_factors(blocks);
    if (tie_eta_signed_per_mwh.size() != s.rows())
        throw ConfigError("tie dual vector has wrong size");
    return (s * m.stacked).transpose() * tie_eta_signed_per_mwh;
}

Eigen::VectorXd congestion_price_rho_share(const SusceptanceBlocks& blocks,
                                           const bids::IncidenceMatrix& m,
                                           const Eigen::VectorXd& tie_eta_signed_per_mwh,
                                           AreaId area) {
    const Eigen::MatrixXd s = netmodel::tie_shift_factors(blocks);
    if (tie_eta_signed_per_mwh.size() != s.rows())
        throw ConfigError("tie dual vector has wrong size");
    const Eigen::MatrixXd sm = s * m.stacked; // tie x bid flow contributions
    Eigen::VectorXd share = Eigen::VectorXd::Zero(m.n_bids());
    for (int l = 0; l < sm.rows(); ++l) {
        const Branch& tie = blocks.part.tie_lines[l];
        const bool incident = blocks.part.area_of(tie.from_bus) == area ||
                              blocks.part.area_of(tie.to_bus) == area;
        if (!incident) continue;
        share += 0.5 * tie_eta_signed_per_mwh(l) * sm.row(l).transpose();
    }
    return share;
}

AreaSettlement settle_area(const SusceptanceBlocks& blocks, const bids::IncidenceMatrix& m,
                           const Eigen::VectorXd& s_mw, const market::RealtimeSolution& rt,
                           const market::ClearingSolution& look_ahead,
                           const Eigen::VectorXd& realized_load_mw) {
    const PowerNetwork& net = *blocks.net;
    AreaSettlement out;
    out.area = rt.area;

    Eigen::VectorXd gen_at_bus = Eigen::VectorXd::Zero(static_cast<int>(rt.bus_idx.size()));
    for (size_t j = 0; j < rt.gen_idx.size(); ++j) {
        const BusId bus = net.generators[rt.gen_idx[j]].bus;
        for (size_t i = 0; i < rt.bus_idx.size(); ++i)
            if (net.buses[rt.bus_idx[i]].id == bus) {
                gen_at_bus(static_cast<int>(i)) += rt.g_mw(static_cast<int>(j));
                break;
            }
    }
    for (size_t i = 0; i < rt.bus_idx.size(); ++i) {
        const double d = realized_load_mw(rt.bus_idx[i]);
        out.energy_revenue += (d - gen_at_bus(static_cast<int>(i))) * rt.lmp(static_cast<int>(i));
    }

    // Internal congestion rent as flow * signed dual: equals f'eta under
    // exact complementarity and keeps the identity exact when limits were
    // relaxed.
    for (int l = 0; l < rt.flows_mw.size(); ++l)
        out.internal_rent += rt.flows_mw(l) * rt.eta_signed(l);

    // Tie rents from the look-ahead clearing.
    Eigen::VectorXd tie_eta(blocks.part.n_tie_lines());
    for (int l = 0; l < blocks.part.n_tie_lines(); ++l) {
        int branch_idx = -1;
        for (int g = 0; g < net.n_branches(); ++g) {
            const Branch& br = net.branches[g];
            if (br.is_tie_line && br.from_bus == blocks.part.tie_lines[l].from_bus &&
                br.to_bus == blocks.part.tie_lines[l].to_bus) {
                branch_idx = g;
                break;
            }
        }
        tie_eta(l) = look_ahead.eta_signed.size() ? look_ahead.eta_signed(branch_idx) : 0.0;
        const Branch& tie = blocks.part.tie_lines[l];
        const bool incident =
            blocks.part.area_of(tie.from_bus) == rt.area || blocks.part.area_of(tie.to_bus) == rt.area;
        if (incident && look_ahead.tie_flows_mw.size())
            out.tie_rent_share += 0.5 * look_ahead.tie_flows_mw(l) * tie_eta(l);
    }

    if (s_mw.size()) {
        out.mu = interface_price_mu(blocks, m, rt);
        out.rho_share = congestion_price_rho_share(blocks, m, tie_eta, rt.area);
        out.bid_revenue = s_mw.dot(out.mu + out.rho_share);
    } else {
        out.mu = Eigen::VectorXd();
        out.rho_share = Eigen::VectorXd();
    }

    out.net_revenue = out.energy_revenue + out.bid_revenue;
    out.residual = out.net_revenue - (out.internal_rent + out.tie_rent_share);
    return out;
}

AuditResult revenue_adequacy_audit(const SusceptanceBlocks& blocks, const bids::IncidenceMatrix& m,
                                   const Eigen::VectorXd& s_mw,
                                   const std::vector<market::RealtimeSolution>& rt_by_area,
                                   const market::ClearingSolution& look_ahead,
                                   const Eigen::VectorXd& realized_load_mw,
                                   double tol_dollars_per_hour) {
    AuditResult res;
    res.min_rent = std::numeric_limits<double>::infinity();
    for (const auto& rt : rt_by_area) {
        AreaSettlement s = settle_area(blocks, m, s_mw, rt, look_ahead, realized_load_mw);
        res.max_residual = std::max(res.max_residual, std::abs(s.residual));
        res.min_rent = std::min(res.min_rent, s.internal_rent + s.tie_rent_share);
        res.areas.push_back(std::move(s));
    }
    res.ok = res.max_residual <= tol_dollars_per_hour && res.min_rent >= -tol_dollars_per_hour;
    return res;
}

SurplusReport local_surplus(const SusceptanceBlocks& blocks, const market::RealtimeSolution& rt,
                            const Eigen::VectorXd& realized_load_mw, double consumer_utility) {
    const PowerNetwork& net = *blocks.net;
    SurplusReport s;
    s.consumer = consumer_utility;
    for (size_t i = 0; i < rt.bus_idx.size(); ++i)
        s.consumer -= rt.lmp(static_cast<int>(i)) * realized_load_mw(rt.bus_idx[i]);

    double revenue = 0.0;
    for (size_t j = 0; j < rt.gen_idx.size(); ++j) {
        const BusId bus = net.generators[rt.gen_idx[j]].bus;
        for (size_t i = 0; i < rt.bus_idx.size(); ++i)
            if (net.buses[rt.bus_idx[i]].id == bus) {
                revenue += rt.lmp(static_cast<int>(i)) * rt.g_mw(static_cast<int>(j));
                break;
            }
    }
    s.supplier = revenue - rt.cost;
    for (int l = 0; l < rt.flows_mw.size(); ++l) s.transmission += rt.flows_mw(l) * rt.eta_signed(l);
    return s;
}

SettlementReport build_report(const SusceptanceBlocks& blocks, const bids::IncidenceMatrix& m,
                              const Eigen::VectorXd& s_mw,
                              const std::vector<market::RealtimeSolution>& rt_by_area,
                              const market::ClearingSolution& look_ahead,
                              const Eigen::VectorXd& realized_load_mw) {
    SettlementReport rep;
    rep.boundary_price = look_ahead.boundary_price;
    Eigen::VectorXd tie_eta(blocks.part.n_tie_lines());
    for (int l = 0; l < blocks.part.n_tie_lines(); ++l) {
        const Branch& tie = blocks.part.tie_lines[l];
        int branch_idx = -1;
        for (int g = 0; g < blocks.net->n_branches(); ++g) {
            const Branch& br = blocks.net->branches[g];
            if (br.is_tie_line && br.from_bus == tie.from_bus && br.to_bus == tie.to_bus) {
                branch_idx = g;
                break;
            }
        }
        tie_eta(l) = look_ahead.eta_signed.size() ? look_ahead.eta_signed(branch_idx) : 0.0;
        if (look_ahead.tie_flows_mw.size())
            rep.tie_rent_total += look_ahead.tie_flows_mw(l) * tie_eta(l);
    }
    if (s_mw.size()) rep.rho = congestion_price_rho(blocks, m, tie_eta);
    for (const auto& rt : rt_by_area)
        rep.areas.push_back(settle_area(blocks, m, s_mw, rt, look_ahead, realized_load_mw));
    return rep;
}

} // namespace seamsim::settlement
