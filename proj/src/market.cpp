#include "seamsim/market.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace seamsim::market {

namespace {

using netmodel::SusceptanceBlocks;

constexpr double kBidTieBreak = 1e-9; // $/MWh per bid id, deterministic tie resolution
constexpr double kRelaxMargin = 1e-9; // pu headroom added on top of the minimal slack

struct RowSet {
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    std::vector<std::string> names;

    int add(Eigen::VectorXd row, double b, std::string name) {
        rows.push_back(std::move(row));
        rhs.push_back(b);
        names.push_back(std::move(name));
        return static_cast<int>(rows.size()) - 1;
    }

    void emit(int n_vars, Eigen::MatrixXd& m, Eigen::VectorXd& v,
              std::vector<std::string>& out_names) const {
        const int nr = static_cast<int>(rows.size());
        m = Eigen::MatrixXd::Zero(nr, n_vars);
        v = Eigen::VectorXd::Zero(nr);
        for (int r = 0; r < nr; ++r) {
            m.row(r) = rows[r];
            v(r) = rhs[r];
        }
        out_names = names;
    }
};

std::string bus_row_name(const char* prefix, BusId id) {
    return std::string(prefix) + "[" + std::to_string(id) + "]";
}

std::string line_row_name(const Branch& br, bool positive) {
    return std::string("flow") + (positive ? "+" : "-") + "[" + std::to_string(br.from_bus) + "-" +
           std::to_string(br.to_bus) + "]";
}

qp::Solution run_or_throw(const qp::Program& prob, const std::string& what) {
    qp::Solution sol = qp::solve(prob);
    if (sol.status == qp::SolveStatus::Optimal) return sol;
    if (sol.status == qp::SolveStatus::Infeasible) {
        std::ostringstream msg;
        msg << what << ": infeasible";
        if (!sol.infeasible_rows.empty()) {
            msg << "; unsatisfiable rows:";
            for (size_t i = 0; i < sol.infeasible_rows.size() && i < 5; ++i)
                msg << " " << sol.infeasible_rows[i].first << " (" << sol.infeasible_rows[i].second
                    << " pu)";
        }
        throw InfeasibleError(msg.str());
    }
    std::ostringstream msg;
    msg << what << ": solver did not converge (worst KKT residual " << sol.kkt.worst() << ")";
    throw NumericalError(msg.str());
}

/// Shared assembly for the full-network programs (JED and GCTS).
struct InterconnectionProgram {
    qp::Program prob;
    int n_theta = 0;
    int off_g = 0;
    int off_s = 0;
    std::vector<int> balance_row;               // per dense bus index
    std::vector<int> bndpf_row;                 // per boundary position, -1 at reference
    std::vector<std::pair<int, int>> line_rows; // per branch, (-1,-1) if unlimited
};

Eigen::VectorXd loads_pu(const SusceptanceBlocks& blocks,
                         const std::optional<Eigen::VectorXd>& load_mw_override) {
    const PowerNetwork& net = *blocks.net;
    Eigen::VectorXd d(net.n_buses());
    if (load_mw_override) {
        if (load_mw_override->size() != net.n_buses())
            throw ConfigError("load override must cover every bus");
        d = *load_mw_override / net.base_mva;
        if (d.minCoeff() < 0.0) throw ConfigError("negative load in override");
    } else {
        for (int i = 0; i < net.n_buses(); ++i) d(i) = net.load_pu(i);
    }
    return d;
}

void add_generator_columns(const PowerNetwork& net, qp::Program& prob, int off_g) {
    const double base = net.base_mva;
    for (int j = 0; j < net.n_generators(); ++j) {
        const Generator& g = net.generators[j];
        prob.c(off_g + j) = g.cost.c1 * base;
        prob.q(off_g + j) = 2.0 * g.cost.c2 * base * base;
    }
}

void add_generator_bounds(const PowerNetwork& net, RowSet& ineq, int n_vars, int off_g) {
    const double base = net.base_mva;
    for (int j = 0; j < net.n_generators(); ++j) {
        const Generator& g = net.generators[j];
        Eigen::VectorXd up = Eigen::VectorXd::Zero(n_vars);
        up(off_g + j) = 1.0;
        ineq.add(up, g.g_max_mw / base, "gmax[" + std::to_string(g.bus) + "#" + std::to_string(j) + "]");
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(n_vars);
        lo(off_g + j) = -1.0;
        ineq.add(lo, -g.g_min_mw / base, "gmin[" + std::to_string(g.bus) + "#" + std::to_string(j) + "]");
    }
}

InterconnectionProgram build_interconnection_program(const SusceptanceBlocks& blocks,
                                                     const BidBook* book,
                                                     const bids::IncidenceMatrix* m,
                                                     const Eigen::VectorXd& d_pu) {
    const PowerNetwork& net = *blocks.net;
    const int n = net.n_buses();
    const int ng = net.n_generators();
    const int nk = book ? book->n_bids() : 0;

    InterconnectionProgram ip;
    ip.n_theta = n;
    ip.off_g = n;
    ip.off_s = n + ng;
    const int nv = n + ng + nk;

    ip.prob.c = Eigen::VectorXd::Zero(nv);
    ip.prob.q = Eigen::VectorXd::Zero(nv);
    add_generator_columns(net, ip.prob, ip.off_g);
    if (book) {
        for (int k = 0; k < nk; ++k)
            ip.prob.c(ip.off_s + k) =
                (book->bids[k].dpi + kBidTieBreak * book->bids[k].id) * net.base_mva;
    }

    RowSet eq;
    ip.balance_row.resize(n);
    for (int r = 0; r < n; ++r) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        for (int c = 0; c < n; ++c)
            if (blocks.full(r, c) != 0.0) row(c) = blocks.full(r, c);
        for (int j : net.gens_at_bus()[r]) row(ip.off_g + j) = -1.0;
        ip.balance_row[r] = eq.add(std::move(row), -d_pu(r), bus_row_name("balance", net.buses[r].id));
    }
    {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(blocks.slack_index()) = 1.0;
        eq.add(std::move(row), 0.0, "slack");
    }
    if (book) {
        const int nb = blocks.n_boundary();
        const int ref = blocks.boundary_ref();
        ip.bndpf_row.assign(nb, -1);
        for (int b = 0; b < nb; ++b) {
            if (b == ref) continue;
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
            for (int c = 0; c < nb; ++c)
                if (blocks.boundary_equiv(b, c) != 0.0)
                    row(blocks.boundary_all_idx[c]) = blocks.boundary_equiv(b, c);
            for (int k = 0; k < nk; ++k)
                if (m->stacked(b, k) != 0.0) row(ip.off_s + k) = -m->stacked(b, k);
            ip.bndpf_row[b] =
                eq.add(std::move(row), 0.0,
                       bus_row_name("bndpf", net.buses[blocks.boundary_all_idx[b]].id));
        }
    }

    RowSet ineq;
    ip.line_rows.assign(net.n_branches(), {-1, -1});
    for (int l = 0; l < net.n_branches(); ++l) {
        const Branch& br = net.branches[l];
        if (!br.has_limit()) continue;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(net.bus_index(br.from_bus)) = br.susceptance_pu();
        row(net.bus_index(br.to_bus)) = -br.susceptance_pu();
        const double lim = br.limit_mw / net.base_mva;
        const int pos = ineq.add(row, lim, line_row_name(br, true));
        const int neg = ineq.add(-row, lim, line_row_name(br, false));
        ip.line_rows[l] = {pos, neg};
    }
    add_generator_bounds(net, ineq, nv, ip.off_g);
    if (book) {
        for (int k = 0; k < nk; ++k) {
            Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
            up(ip.off_s + k) = 1.0;
            ineq.add(up, book->bids[k].s_max_mw / net.base_mva,
                     "smax[" + std::to_string(book->bids[k].id) + "]");
            Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
            lo(ip.off_s + k) = -1.0;
            ineq.add(lo, 0.0, "smin[" + std::to_string(book->bids[k].id) + "]");
        }
    }

    eq.emit(nv, ip.prob.a, ip.prob.b, ip.prob.eq_names);
    ineq.emit(nv, ip.prob.g, ip.prob.h, ip.prob.in_names);
    return ip;
}

ClearingSolution extract_interconnection_solution(const SusceptanceBlocks& blocks,
                                                  const InterconnectionProgram& ip,
                                                  const BidBook* book,
                                                  const bids::IncidenceMatrix* m,
                                                  const qp::Solution& sol, Mechanism mech) {
    const PowerNetwork& net = *blocks.net;
    const double base = net.base_mva;
    ClearingSolution out;
    out.mechanism = mech;
    out.kkt = sol.kkt;
    out.iterations = sol.iterations;

    out.theta = sol.x.head(ip.n_theta);
    out.g_mw = sol.x.segment(ip.off_g, net.n_generators()) * base;
    out.internal_cost = 0.0;
    for (int j = 0; j < net.n_generators(); ++j)
        out.internal_cost += net.generators[j].cost.eval(out.g_mw(j));

    if (book) {
        out.s_mw = sol.x.segment(ip.off_s, book->n_bids()) * base;
        out.interface_cost = 0.0;
        for (int k = 0; k < book->n_bids(); ++k)
            out.interface_cost += book->bids[k].dpi * out.s_mw(k);
    }

    out.lmp = Eigen::VectorXd(net.n_buses());
    for (int r = 0; r < net.n_buses(); ++r) out.lmp(r) = sol.y(ip.balance_row[r]) / base;

    if (!ip.bndpf_row.empty()) {
        out.boundary_price = Eigen::VectorXd::Zero(blocks.n_boundary());
        for (int b = 0; b < blocks.n_boundary(); ++b)
            if (ip.bndpf_row[b] >= 0) out.boundary_price(b) = -sol.y(ip.bndpf_row[b]) / base;
    }

    out.eta_signed = Eigen::VectorXd::Zero(net.n_branches());
    out.eta_total = Eigen::VectorXd::Zero(net.n_branches());
    for (int l = 0; l < net.n_branches(); ++l) {
        const auto [pos, neg] = ip.line_rows[l];
        if (pos < 0) continue;
        out.eta_signed(l) = (sol.z(pos) - sol.z(neg)) / base;
        out.eta_total(l) = (sol.z(pos) + sol.z(neg)) / base;
    }

    if (mech == Mechanism::Gcts && m) {
        out.theta_bar = recover_boundary_state(blocks, *m, out.s_mw);
    } else {
        // Pinned normalization of the LP's own boundary angles.
        out.theta_bar = Eigen::VectorXd(blocks.n_boundary());
        for (int b = 0; b < blocks.n_boundary(); ++b)
            out.theta_bar(b) = out.theta(blocks.boundary_all_idx[b]);
        if (blocks.n_boundary() > 0)
            out.theta_bar.array() -= out.theta_bar(blocks.boundary_ref());
    }
    if (blocks.n_boundary() > 0)
        out.tie_flows_mw = netmodel::tie_flows_from_boundary(blocks, out.theta_bar);
    return out;
}

void check_area_internal_connectivity(const SusceptanceBlocks& blocks, AreaId area) {
    const PowerNetwork& net = *blocks.net;
    std::map<BusId, int> local;
    std::vector<BusId> ids;
    for (const Bus& b : net.buses)
        if (b.area == area) {
            local[b.id] = static_cast<int>(ids.size());
            ids.push_back(b.id);
        }
    std::vector<int> parent(ids.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) { parent[a] = parent[parent[a]]; a = parent[a]; }
        return a;
    };
    for (const Branch& br : net.branches) {
        if (br.is_tie_line) continue;
        auto f = local.find(br.from_bus);
        auto t = local.find(br.to_bus);
        if (f == local.end() || t == local.end()) continue;
        parent[find(f->second)] = find(t->second);
    }
    int root = find(0);
    for (size_t i = 1; i < ids.size(); ++i)
        if (find(static_cast<int>(i)) != root)
            throw ConfigError("internal network of area " + std::to_string(area) +
                              " is disconnected; the proxy model is ill-posed");
}

} // namespace

const char* mechanism_name(Mechanism m) {
    switch (m) {
        case Mechanism::Jed: return "jed";
        case Mechanism::Cts: return "cts";
        case Mechanism::Gcts: return "gcts";
    }
    return "?";
}

ClearingSolution solve_jed(const SusceptanceBlocks& blocks,
                           const std::optional<Eigen::VectorXd>& load_mw_override) {
    const Eigen::VectorXd d = loads_pu(blocks, load_mw_override);
    InterconnectionProgram ip = build_interconnection_program(blocks, nullptr, nullptr, d);
    const qp::Solution sol = run_or_throw(ip.prob, "JED");
    return extract_interconnection_solution(blocks, ip, nullptr, nullptr, sol, Mechanism::Jed);
}

ClearingSolution solve_gcts(const SusceptanceBlocks& blocks, const BidBook& book,
                            const std::optional<Eigen::VectorXd>& load_mw_override) {
    book.validate(blocks.part);
    const bids::IncidenceMatrix m = bids::build_incidence(book, blocks.part);
    const Eigen::VectorXd d = loads_pu(blocks, load_mw_override);
    InterconnectionProgram ip = build_interconnection_program(blocks, &book, &m, d);
    const qp::Solution sol = run_or_throw(ip.prob, "GCTS clearing");
    return extract_interconnection_solution(blocks, ip, &book, &m, sol, Mechanism::Gcts);
}

ClearingSolution solve_gcts_n_area(const SusceptanceBlocks& blocks, const BidBook& book,
                                   const std::optional<Eigen::VectorXd>& load_mw_override) {
    if (blocks.part.n_areas() < 2)
        throw ConfigError("n-area clearing needs at least two areas");
    return solve_gcts(blocks, book, load_mw_override);
}

std::map<AreaId, BusId> default_proxies(const AreaPartition& part) {
    std::map<AreaId, BusId> proxies;
    for (AreaId a : part.areas) {
        const auto& bnd = part.boundary_buses.at(a);
        if (bnd.empty()) throw ConfigError("area " + std::to_string(a) + " has no boundary bus");
        proxies[a] = bnd.front();
    }
    return proxies;
}

ClearingSolution solve_cts(const SusceptanceBlocks& blocks, const std::map<AreaId, BusId>& proxy_bus,
                           const BidBook& book,
                           const std::optional<Eigen::VectorXd>& load_mw_override) {
    const PowerNetwork& net = *blocks.net;
    const AreaPartition& part = blocks.part;
    const double base = net.base_mva;

    for (AreaId a : part.areas) {
        auto it = proxy_bus.find(a);
        if (it == proxy_bus.end())
            throw ConfigError("no proxy bus for area " + std::to_string(a));
        if (part.area_of(it->second) != a)
            throw ConfigError("proxy bus " + std::to_string(it->second) + " is not in area " +
                              std::to_string(a));
        if (part.boundary_index(it->second) < 0)
            throw ConfigError("proxy bus " + std::to_string(it->second) + " is not a boundary bus");
        check_area_internal_connectivity(blocks, a);
    }

    // All bids trade at the proxy pair of their two areas.
    BidBook proxy_book = book;
    for (InterfaceBid& bid : proxy_book.bids) {
        bid.sell_to_bus = proxy_bus.at(bid.sell_to_area);
        bid.buy_from_bus = proxy_bus.at(bid.buy_from_area);
    }
    proxy_book.validate(part);

    // Area pairs joined by at least one tie-line, oriented (low, high) in
    // area order; q > 0 imports into the lower-ordered area.
    std::map<std::pair<AreaId, AreaId>, double> pair_limit_pu;
    for (const Branch& br : part.tie_lines) {
        const AreaId fa = part.area_of(br.from_bus);
        const AreaId ta = part.area_of(br.to_bus);
        const std::pair<AreaId, AreaId> key = fa < ta ? std::pair{fa, ta} : std::pair{ta, fa};
        pair_limit_pu[key] += (br.has_limit() ? br.limit_mw : kUnlimitedMw) / base;
    }
    std::vector<std::pair<AreaId, AreaId>> pairs;
    for (const auto& [key, lim] : pair_limit_pu) pairs.push_back(key);

    const int n = net.n_buses();
    const int ng = net.n_generators();
    const int nk = proxy_book.n_bids();
    const int np = static_cast<int>(pairs.size());
    const int off_g = n;
    const int off_s = n + ng;
    const int off_q = n + ng + nk;
    const int nv = n + ng + nk + np;

    // Internal-network nodal matrix: the full matrix minus tie-line terms.
    Eigen::MatrixXd internal = blocks.full;
    for (const Branch& br : part.tie_lines) {
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const double b = br.susceptance_pu();
        internal(f, f) -= b;
        internal(t, t) -= b;
        internal(f, t) += b;
        internal(t, f) += b;
    }

    qp::Program prob;
    prob.c = Eigen::VectorXd::Zero(nv);
    prob.q = Eigen::VectorXd::Zero(nv);
    add_generator_columns(net, prob, off_g);
    for (int k = 0; k < nk; ++k)
        prob.c(off_s + k) = (proxy_book.bids[k].dpi + kBidTieBreak * proxy_book.bids[k].id) * base;

    const Eigen::VectorXd d = loads_pu(blocks, load_mw_override);

    RowSet eq;
    std::vector<int> balance_row(n);
    for (int r = 0; r < n; ++r) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        for (int c = 0; c < n; ++c)
            if (internal(r, c) != 0.0) row(c) = internal(r, c);
        for (int j : net.gens_at_bus()[r]) row(off_g + j) = -1.0;
        for (int p = 0; p < np; ++p) {
            if (net.buses[r].id == proxy_bus.at(pairs[p].first)) row(off_q + p) -= 1.0;
            if (net.buses[r].id == proxy_bus.at(pairs[p].second)) row(off_q + p) += 1.0;
        }
        balance_row[r] = eq.add(std::move(row), -d(r), bus_row_name("balance", net.buses[r].id));
    }
    for (AreaId a : part.areas) {
        BusId lowest = std::numeric_limits<BusId>::max();
        for (const Bus& b : net.buses)
            if (b.area == a) lowest = std::min(lowest, b.id);
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(net.bus_index(lowest)) = 1.0;
        eq.add(std::move(row), 0.0, "slack[area " + std::to_string(a) + "]");
    }
    for (int p = 0; p < np; ++p) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(off_q + p) = 1.0;
        for (int k = 0; k < nk; ++k) {
            const InterfaceBid& bid = proxy_book.bids[k];
            if (bid.sell_to_area == pairs[p].first && bid.buy_from_area == pairs[p].second)
                row(off_s + k) -= 1.0;
            else if (bid.sell_to_area == pairs[p].second && bid.buy_from_area == pairs[p].first)
                row(off_s + k) += 1.0;
        }
        eq.add(std::move(row), 0.0,
               "interchange[" + std::to_string(pairs[p].first) + "-" +
                   std::to_string(pairs[p].second) + "]");
    }

    RowSet ineq;
    std::vector<std::pair<int, int>> line_rows(net.n_branches(), {-1, -1});
    for (int l = 0; l < net.n_branches(); ++l) {
        const Branch& br = net.branches[l];
        if (br.is_tie_line || !br.has_limit()) continue;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(net.bus_index(br.from_bus)) = br.susceptance_pu();
        row(net.bus_index(br.to_bus)) = -br.susceptance_pu();
        const double lim = br.limit_mw / base;
        const int pos = ineq.add(row, lim, line_row_name(br, true));
        const int neg = ineq.add(-row, lim, line_row_name(br, false));
        line_rows[l] = {pos, neg};
    }
    add_generator_bounds(net, ineq, nv, off_g);
    for (int k = 0; k < nk; ++k) {
        Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
        up(off_s + k) = 1.0;
        ineq.add(up, proxy_book.bids[k].s_max_mw / base,
                 "smax[" + std::to_string(proxy_book.bids[k].id) + "]");
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
        lo(off_s + k) = -1.0;
        ineq.add(lo, 0.0, "smin[" + std::to_string(proxy_book.bids[k].id) + "]");
    }
    for (int p = 0; p < np; ++p) {
        const double lim = pair_limit_pu[pairs[p]];
        if (!std::isfinite(lim)) continue;
        Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
        up(off_q + p) = 1.0;
        ineq.add(up, lim, "qmax[" + std::to_string(p) + "]");
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
        lo(off_q + p) = -1.0;
        ineq.add(lo, lim, "qmin[" + std::to_string(p) + "]");
    }

    eq.emit(nv, prob.a, prob.b, prob.eq_names);
    ineq.emit(nv, prob.g, prob.h, prob.in_names);

    const qp::Solution sol = run_or_throw(prob, "CTS clearing");

    ClearingSolution out;
    out.mechanism = Mechanism::Cts;
    out.kkt = sol.kkt;
    out.iterations = sol.iterations;
    out.theta = sol.x.head(n);
    out.g_mw = sol.x.segment(off_g, ng) * base;
    for (int j = 0; j < ng; ++j) out.internal_cost += net.generators[j].cost.eval(out.g_mw(j));
    out.s_mw = sol.x.segment(off_s, nk) * base;
    for (int k = 0; k < nk; ++k) out.interface_cost += proxy_book.bids[k].dpi * out.s_mw(k);
    out.lmp = Eigen::VectorXd(n);
    for (int r = 0; r < n; ++r) out.lmp(r) = sol.y(balance_row[r]) / base;
    out.eta_signed = Eigen::VectorXd::Zero(net.n_branches());
    out.eta_total = Eigen::VectorXd::Zero(net.n_branches());
    for (int l = 0; l < net.n_branches(); ++l) {
        const auto [pos, neg] = line_rows[l];
        if (pos < 0) continue;
        out.eta_signed(l) = (sol.z(pos) - sol.z(neg)) / base;
        out.eta_total(l) = (sol.z(pos) + sol.z(neg)) / base;
    }
    for (int p = 0; p < np; ++p) {
        out.interchange_q_mw.push_back(sol.x(off_q + p) * base);
        out.interchange_pairs.push_back(pairs[p]);
    }
    return out;
}

Eigen::VectorXd recover_boundary_state(const SusceptanceBlocks& blocks,
                                       const bids::IncidenceMatrix& m,
                                       const Eigen::VectorXd& s_mw) {
    if (blocks.n_boundary() == 0) return Eigen::VectorXd();
    const Eigen::VectorXd rhs = m.stacked * (s_mw / blocks.net->base_mva);
    return netmodel::solve_boundary_pinned(blocks, rhs);
}

namespace {

struct RealtimeProgram {
    qp::Program prob;
    std::vector<int> bus_idx;
    std::vector<int> gen_idx;
    std::vector<int> line_idx;
    std::vector<int> theta_var;       // per bus_idx entry, -1 when fixed
    std::vector<int> balance_row;     // per bus_idx entry
    std::vector<std::pair<int, int>> line_rows; // per line_idx entry
    std::vector<bool> relax_mask;
    int off_g = 0;
    Eigen::VectorXd theta_fixed;      // per bus_idx entry, valid where theta_var < 0
};

RealtimeSolution extract_realtime(const SusceptanceBlocks& blocks, AreaId area,
                                  const RealtimeProgram& rp, const qp::Solution& sol,
                                  bool relaxed, double relax_slack_pu) {
    const PowerNetwork& net = *blocks.net;
    const double base = net.base_mva;
    RealtimeSolution rt;
    rt.area = area;
    rt.bus_idx = rp.bus_idx;
    rt.gen_idx = rp.gen_idx;
    rt.line_idx = rp.line_idx;
    rt.kkt = sol.kkt;
    rt.relaxed = relaxed;
    rt.relax_slack_mw = relax_slack_pu * base;

    const int nb = static_cast<int>(rp.bus_idx.size());
    rt.theta = Eigen::VectorXd(nb);
    for (int i = 0; i < nb; ++i)
        rt.theta(i) = rp.theta_var[i] >= 0 ? sol.x(rp.theta_var[i]) : rp.theta_fixed(i);

    rt.g_mw = Eigen::VectorXd(rp.gen_idx.size());
    for (size_t j = 0; j < rp.gen_idx.size(); ++j) {
        rt.g_mw(j) = sol.x(rp.off_g + static_cast<int>(j)) * base;
        rt.cost += net.generators[rp.gen_idx[j]].cost.eval(rt.g_mw(j));
    }

    rt.lmp = Eigen::VectorXd(nb);
    for (int i = 0; i < nb; ++i) rt.lmp(i) = sol.y(rp.balance_row[i]) / base;

    const int nl = static_cast<int>(rp.line_idx.size());
    rt.eta_signed = Eigen::VectorXd::Zero(nl);
    rt.eta_total = Eigen::VectorXd::Zero(nl);
    rt.flows_mw = Eigen::VectorXd::Zero(nl);
    std::map<int, int> bus_pos;
    for (int i = 0; i < nb; ++i) bus_pos[rp.bus_idx[i]] = i;
    for (int l = 0; l < nl; ++l) {
        const Branch& br = net.branches[rp.line_idx[l]];
        const auto [pos, neg] = rp.line_rows[l];
        if (pos >= 0) {
            rt.eta_signed(l) = (sol.z(pos) - sol.z(neg)) / base;
            rt.eta_total(l) = (sol.z(pos) + sol.z(neg)) / base;
        }
        const double df = rt.theta(bus_pos.at(net.bus_index(br.from_bus))) -
                          rt.theta(bus_pos.at(net.bus_index(br.to_bus)));
        rt.flows_mw(l) = df * br.susceptance_pu() * base;
    }
    return rt;
}

RealtimeSolution solve_realtime_program(const SusceptanceBlocks& blocks, AreaId area,
                                        RealtimeProgram& rp, const RealtimeOptions& opts,
                                        const std::string& what) {
    qp::Solution sol = qp::solve(rp.prob);
    if (sol.status == qp::SolveStatus::Optimal)
        return extract_realtime(blocks, area, rp, sol, false, 0.0);

    if (sol.status == qp::SolveStatus::Infeasible && opts.allow_line_relaxation) {
        const auto slack = qp::minimal_row_relaxation(rp.prob, rp.relax_mask);
        if (slack && *slack > 0.0) {
            for (size_t i = 0; i < rp.relax_mask.size(); ++i)
                if (rp.relax_mask[i]) rp.prob.h(i) += *slack + kRelaxMargin;
            sol = qp::solve(rp.prob);
            if (sol.status == qp::SolveStatus::Optimal)
                return extract_realtime(blocks, area, rp, sol, true, *slack);
        }
    }
    run_or_throw(rp.prob, what); // throws with diagnostics
    throw NumericalError(what + ": unreachable");
}

} // namespace

RealtimeSolution solve_realtime(const SusceptanceBlocks& blocks, AreaId area,
                                const Eigen::VectorXd& theta_bar, const Eigen::VectorXd& load_mw,
                                const RealtimeOptions& opts) {
    const PowerNetwork& net = *blocks.net;
    const AreaPartition& part = blocks.part;
    if (theta_bar.size() != blocks.n_boundary())
        throw ConfigError("boundary state vector has wrong size");
    if (load_mw.size() != net.n_buses()) throw ConfigError("load vector must cover every bus");

    RealtimeProgram rp;
    std::map<int, int> interior_var; // dense bus index -> theta variable
    for (int i = 0; i < net.n_buses(); ++i)
        if (net.buses[i].area == area) rp.bus_idx.push_back(i);
    for (int j = 0; j < net.n_generators(); ++j)
        if (part.area_of(net.generators[j].bus) == area) rp.gen_idx.push_back(j);

    int nv = 0;
    rp.theta_var.assign(rp.bus_idx.size(), -1);
    rp.theta_fixed = Eigen::VectorXd::Zero(rp.bus_idx.size());
    for (size_t i = 0; i < rp.bus_idx.size(); ++i) {
        const int r = rp.bus_idx[i];
        const int bpos = part.boundary_index(net.buses[r].id);
        if (bpos < 0) {
            rp.theta_var[i] = nv;
            interior_var[r] = nv;
            ++nv;
        } else {
            rp.theta_fixed(i) = theta_bar(bpos);
        }
    }
    rp.off_g = nv;
    nv += static_cast<int>(rp.gen_idx.size());

    const double base = net.base_mva;
    rp.prob.c = Eigen::VectorXd::Zero(nv);
    rp.prob.q = Eigen::VectorXd::Zero(nv);
    for (size_t j = 0; j < rp.gen_idx.size(); ++j) {
        const Generator& g = net.generators[rp.gen_idx[j]];
        rp.prob.c(rp.off_g + static_cast<int>(j)) = g.cost.c1 * base;
        rp.prob.q(rp.off_g + static_cast<int>(j)) = 2.0 * g.cost.c2 * base * base;
    }

    std::map<int, int> gen_col; // global gen index -> column
    for (size_t j = 0; j < rp.gen_idx.size(); ++j)
        gen_col[rp.gen_idx[j]] = rp.off_g + static_cast<int>(j);

    RowSet eq;
    rp.balance_row.resize(rp.bus_idx.size());
    for (size_t i = 0; i < rp.bus_idx.size(); ++i) {
        const int r = rp.bus_idx[i];
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        double rhs = -load_mw(r) / base;
        for (int c = 0; c < net.n_buses(); ++c) {
            const double v = blocks.full(r, c);
            if (v == 0.0) continue;
            auto it = interior_var.find(c);
            if (it != interior_var.end()) {
                row(it->second) = v;
            } else {
                const int bpos = part.boundary_index(net.buses[c].id);
                if (bpos < 0)
                    throw NumericalError("coupling to a foreign interior bus"); // cannot happen
                rhs -= v * theta_bar(bpos);
            }
        }
        for (int j : net.gens_at_bus()[r]) {
            auto it = gen_col.find(j);
            if (it != gen_col.end()) row(it->second) = -1.0;
        }
        rp.balance_row[i] = eq.add(std::move(row), rhs, bus_row_name("balance", net.buses[r].id));
    }

    RowSet ineq;
    for (int l = 0; l < net.n_branches(); ++l) {
        const Branch& br = net.branches[l];
        if (br.is_tie_line) continue;
        if (part.area_of(br.from_bus) != area) continue;
        rp.line_idx.push_back(l);
    }
    rp.line_rows.assign(rp.line_idx.size(), {-1, -1});
    for (size_t li = 0; li < rp.line_idx.size(); ++li) {
        const Branch& br = net.branches[rp.line_idx[li]];
        if (!br.has_limit()) continue;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        double offset = 0.0;
        const double b = br.susceptance_pu();
        for (auto [bus, sign] : {std::pair{br.from_bus, 1.0}, std::pair{br.to_bus, -1.0}}) {
            const int c = net.bus_index(bus);
            auto it = interior_var.find(c);
            if (it != interior_var.end()) {
                row(it->second) += sign * b;
            } else {
                offset += sign * b * theta_bar(part.boundary_index(bus));
            }
        }
        if (row.cwiseAbs().maxCoeff() == 0.0) continue; // both ends fixed by the boundary state
        const double lim = br.limit_mw / base;
        const int pos = ineq.add(row, lim - offset, line_row_name(br, true));
        const int neg = ineq.add(-row, lim + offset, line_row_name(br, false));
        rp.line_rows[li] = {pos, neg};
    }
    const int n_line_rows = static_cast<int>(ineq.rows.size());
    for (size_t j = 0; j < rp.gen_idx.size(); ++j) {
        const Generator& g = net.generators[rp.gen_idx[j]];
        Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
        up(rp.off_g + static_cast<int>(j)) = 1.0;
        ineq.add(up, g.g_max_mw / base, "gmax[" + std::to_string(g.bus) + "]");
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
        lo(rp.off_g + static_cast<int>(j)) = -1.0;
        ineq.add(lo, -g.g_min_mw / base, "gmin[" + std::to_string(g.bus) + "]");
    }

    eq.emit(nv, rp.prob.a, rp.prob.b, rp.prob.eq_names);
    ineq.emit(nv, rp.prob.g, rp.prob.h, rp.prob.in_names);
    rp.relax_mask.assign(rp.prob.n_in(), false);
    for (int i = 0; i < n_line_rows; ++i) rp.relax_mask[i] = true;

    return solve_realtime_program(blocks, area, rp, opts,
                                  "real-time dispatch of area " + std::to_string(area));
}

RealtimeSolution solve_realtime_isolated(const SusceptanceBlocks& blocks, AreaId area,
                                         const std::map<BusId, double>& injection_mw,
                                         const Eigen::VectorXd& load_mw,
                                         const RealtimeOptions& opts) {
    const PowerNetwork& net = *blocks.net;
    if (load_mw.size() != net.n_buses()) throw ConfigError("load vector must cover every bus");
    check_area_internal_connectivity(blocks, area);

    RealtimeProgram rp;
    for (int i = 0; i < net.n_buses(); ++i)
        if (net.buses[i].area == area) rp.bus_idx.push_back(i);
    for (int j = 0; j < net.n_generators(); ++j)
        if (blocks.part.area_of(net.generators[j].bus) == area) rp.gen_idx.push_back(j);

    std::map<int, int> theta_col;
    int nv = 0;
    rp.theta_var.assign(rp.bus_idx.size(), -1);
    rp.theta_fixed = Eigen::VectorXd::Zero(rp.bus_idx.size());
    for (size_t i = 0; i < rp.bus_idx.size(); ++i) {
        rp.theta_var[i] = nv;
        theta_col[rp.bus_idx[i]] = nv;
        ++nv;
    }
    rp.off_g = nv;
    nv += static_cast<int>(rp.gen_idx.size());

    const double base = net.base_mva;
    rp.prob.c = Eigen::VectorXd::Zero(nv);
    rp.prob.q = Eigen::VectorXd::Zero(nv);
    for (size_t j = 0; j < rp.gen_idx.size(); ++j) {
        const Generator& g = net.generators[rp.gen_idx[j]];
        rp.prob.c(rp.off_g + static_cast<int>(j)) = g.cost.c1 * base;
        rp.prob.q(rp.off_g + static_cast<int>(j)) = 2.0 * g.cost.c2 * base * base;
    }
    std::map<int, int> gen_col;
    for (size_t j = 0; j < rp.gen_idx.size(); ++j)
        gen_col[rp.gen_idx[j]] = rp.off_g + static_cast<int>(j);

    // Internal-network rows only.
    Eigen::MatrixXd internal = blocks.full;
    for (const Branch& br : blocks.part.tie_lines) {
        const int f = net.bus_index(br.from_bus);
        const int t = net.bus_index(br.to_bus);
        const double b = br.susceptance_pu();
        internal(f, f) -= b;
        internal(t, t) -= b;
        internal(f, t) += b;
        internal(t, f) += b;
    }

    RowSet eq;
    rp.balance_row.resize(rp.bus_idx.size());
    for (size_t i = 0; i < rp.bus_idx.size(); ++i) {
        const int r = rp.bus_idx[i];
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        double rhs = -load_mw(r) / base;
        auto inj = injection_mw.find(net.buses[r].id);
        if (inj != injection_mw.end()) rhs += inj->second / base;
        for (int c = 0; c < net.n_buses(); ++c) {
            const double v = internal(r, c);
            if (v == 0.0) continue;
            row(theta_col.at(c)) = v;
        }
        for (int j : net.gens_at_bus()[r]) {
            auto it = gen_col.find(j);
            if (it != gen_col.end()) row(it->second) = -1.0;
        }
        rp.balance_row[i] = eq.add(std::move(row), rhs, bus_row_name("balance", net.buses[r].id));
    }
    {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(rp.theta_var[0]) = 1.0; // lowest bus id of the area
        eq.add(std::move(row), 0.0, "slack[area " + std::to_string(area) + "]");
    }

    RowSet ineq;
    for (int l = 0; l < net.n_branches(); ++l) {
        const Branch& br = net.branches[l];
        if (br.is_tie_line) continue;
        if (blocks.part.area_of(br.from_bus) != area) continue;
        rp.line_idx.push_back(l);
    }
    rp.line_rows.assign(rp.line_idx.size(), {-1, -1});
    for (size_t li = 0; li < rp.line_idx.size(); ++li) {
        const Branch& br = net.branches[rp.line_idx[li]];
        if (!br.has_limit()) continue;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
        row(theta_col.at(net.bus_index(br.from_bus))) = br.susceptance_pu();
        row(theta_col.at(net.bus_index(br.to_bus))) = -br.susceptance_pu();
        const double lim = br.limit_mw / base;
        const int pos = ineq.add(row, lim, line_row_name(br, true));
        const int neg = ineq.add(-row, lim, line_row_name(br, false));
        rp.line_rows[li] = {pos, neg};
    }
    const int n_line_rows = static_cast<int>(ineq.rows.size());
    for (size_t j = 0; j < rp.gen_idx.size(); ++j) {
        const Generator& g = net.generators[rp.gen_idx[j]];
        Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
        up(rp.off_g + static_cast<int>(j)) = 1.0;
        ineq.add(up, g.g_max_mw / base, "gmax[" + std::to_string(g.bus) + "]");
        Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
        lo(rp.off_g + static_cast<int>(j)) = -1.0;
        ineq.add(lo, -g.g_min_mw / base, "gmin[" + std::to_string(g.bus) + "]");
    }

    eq.emit(nv, rp.prob.a, rp.prob.b, rp.prob.eq_names);
    ineq.emit(nv, rp.prob.g, rp.prob.h, rp.prob.in_names);
    rp.relax_mask.assign(rp.prob.n_in(), false);
    for (int i = 0; i < n_line_rows; ++i) rp.relax_mask[i] = true;

    return solve_realtime_program(blocks, area, rp, opts,
                                  "isolated dispatch of area " + std::to_string(area));
}

SeparateClearingResult solve_separate_clearing(const SusceptanceBlocks& blocks,
                                               const BidBook& book, double price_split_fraction) {
    const PowerNetwork& net = *blocks.net;
    const AreaPartition& part = blocks.part;
    if (part.n_areas() != 2 || part.n_tie_lines() != 1)
        throw ConfigError("separate clearing is defined for two areas joined by one tie-line");
    if (price_split_fraction < 0.0 || price_split_fraction > 1.0)
        throw ConfigError("price split fraction must lie in [0, 1]");
    book.validate(part);

    const AreaId a1 = part.areas[0];
    const double base = net.base_mva;
    const Branch& tie = part.tie_lines[0];
    const double q_lim = (tie.has_limit() ? tie.limit_mw : kUnlimitedMw) / base;

    Eigen::MatrixXd internal = blocks.full;
    {
        const int f = net.bus_index(tie.from_bus);
        const int t = net.bus_index(tie.to_bus);
        const double b = tie.susceptance_pu();
        internal(f, f) -= b;
        internal(t, t) -= b;
        internal(f, t) += b;
        internal(t, f) += b;
    }

    auto clear_one_area = [&](AreaId area, double price_fraction) {
        check_area_internal_connectivity(blocks, area);
        std::vector<int> bus_idx;
        for (int i = 0; i < net.n_buses(); ++i)
            if (net.buses[i].area == area) bus_idx.push_back(i);
        std::vector<int> gen_idx;
        for (int j = 0; j < net.n_generators(); ++j)
            if (part.area_of(net.generators[j].bus) == area) gen_idx.push_back(j);

        const int nb = static_cast<int>(bus_idx.size());
        const int ng = static_cast<int>(gen_idx.size());
        const int nk = book.n_bids();
        const int off_g = nb;
        const int off_s = nb + ng;
        const int off_q = nb + ng + nk;
        const int nv = off_q + 1;

        std::map<int, int> theta_col;
        for (int i = 0; i < nb; ++i) theta_col[bus_idx[i]] = i;

        qp::Program prob;
        prob.c = Eigen::VectorXd::Zero(nv);
        prob.q = Eigen::VectorXd::Zero(nv);
        for (int j = 0; j < ng; ++j) {
            const Generator& g = net.generators[gen_idx[j]];
            prob.c(off_g + j) = g.cost.c1 * base;
            prob.q(off_g + j) = 2.0 * g.cost.c2 * base * base;
        }
        for (int k = 0; k < nk; ++k)
            prob.c(off_s + k) =
                (book.bids[k].dpi * price_fraction + kBidTieBreak * book.bids[k].id) * base;

        const BusId boundary = part.boundary_buses.at(area).front();
        const double import_sign = (area == a1) ? 1.0 : -1.0; // q imports into area 1

        RowSet eq;
        for (int i = 0; i < nb; ++i) {
            const int r = bus_idx[i];
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
            for (int c : bus_idx)
                if (internal(r, c) != 0.0) row(theta_col.at(c)) = internal(r, c);
            for (int j = 0; j < ng; ++j)
                if (net.generators[gen_idx[j]].bus == net.buses[r].id) row(off_g + j) = -1.0;
            if (net.buses[r].id == boundary) row(off_q) = -import_sign;
            eq.add(std::move(row), -net.load_pu(r), bus_row_name("balance", net.buses[r].id));
        }
        {
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
            row(theta_col.at(net.bus_index(boundary))) = 1.0;
            eq.add(std::move(row), 0.0, "slack");
        }
        {
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
            row(off_q) = 1.0;
            for (int k = 0; k < nk; ++k) {
                const InterfaceBid& bid = book.bids[k];
                row(off_s + k) += (bid.sell_to_area == a1) ? -1.0 : 1.0;
            }
            eq.add(std::move(row), 0.0, "interchange");
        }

        RowSet ineq;
        for (const Branch& br : net.branches) {
            if (br.is_tie_line || part.area_of(br.from_bus) != area || !br.has_limit()) continue;
            Eigen::VectorXd row = Eigen::VectorXd::Zero(nv);
            row(theta_col.at(net.bus_index(br.from_bus))) = br.susceptance_pu();
            row(theta_col.at(net.bus_index(br.to_bus))) = -br.susceptance_pu();
            const double lim = br.limit_mw / base;
            ineq.add(row, lim, line_row_name(br, true));
            ineq.add(-row, lim, line_row_name(br, false));
        }
        for (int j = 0; j < ng; ++j) {
            const Generator& g = net.generators[gen_idx[j]];
            Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
            up(off_g + j) = 1.0;
            ineq.add(up, g.g_max_mw / base, "gmax");
            Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
            lo(off_g + j) = -1.0;
            ineq.add(lo, -g.g_min_mw / base, "gmin");
        }
        for (int k = 0; k < nk; ++k) {
            Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
            up(off_s + k) = 1.0;
            ineq.add(up, book.bids[k].s_max_mw / base, "smax");
            Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
            lo(off_s + k) = -1.0;
            ineq.add(lo, 0.0, "smin");
        }
        if (std::isfinite(q_lim)) {
            Eigen::VectorXd up = Eigen::VectorXd::Zero(nv);
            up(off_q) = 1.0;
            ineq.add(up, q_lim, "qmax");
            Eigen::VectorXd lo = Eigen::VectorXd::Zero(nv);
            lo(off_q) = -1.0;
            ineq.add(lo, q_lim, "qmin");
        }

        eq.emit(nv, prob.a, prob.b, prob.eq_names);
        ineq.emit(nv, prob.g, prob.h, prob.in_names);
        const qp::Solution sol =
            run_or_throw(prob, "separate clearing of area " + std::to_string(area));
        return Eigen::VectorXd(sol.x.segment(off_s, nk) * base);
    };

    SeparateClearingResult res;
    res.s_area1_mw = clear_one_area(part.areas[0], price_split_fraction);
    res.s_area2_mw = clear_one_area(part.areas[1], 1.0 - price_split_fraction);
    res.s_mw = res.s_area1_mw.cwiseMin(res.s_area2_mw).cwiseMax(0.0);
    return res;
}

} // namespace seamsim::market
