#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "seamsim/caseio.hpp"
#include "seamsim/experiments.hpp"
#include "seamsim/market.hpp"
#include "seamsim/settlement.hpp"
#include "seamsim/version.hpp"

namespace fs = std::filesystem;
using namespace seamsim;
using caseio::format_sig6;
using caseio::Table;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
    std::string stitch_path;
    std::string bids_path;
    std::string scenario_path;
    std::string out_dir = ".";
    std::string format = "csv";
    std::uint64_t seed = 0; // 0: take the scenario's seed
};

struct LoadedCase {
    caseio::StitchConfig stitch_cfg;
    caseio::ScenarioConfig scenario;
    PowerNetwork net;
    AreaPartition part;
    BidBook book; // resolved to global ids, overrides applied
    std::vector<std::string> warnings;
};

LoadedCase load_case(const CommonArgs& args, bool need_bids) {
    LoadedCase lc;
    lc.stitch_cfg = caseio::parse_stitch_config(args.stitch_path);
    if (!args.scenario_path.empty()) lc.scenario = caseio::parse_scenario(args.scenario_path);
    if (args.seed != 0) lc.scenario.rng_seed = args.seed;

    std::tie(lc.net, lc.part) = caseio::stitch(lc.stitch_cfg);
    if (lc.scenario.w != 1.0)
        lc.net = experiments::scale_area_costs(lc.net, lc.part.areas.front(), lc.scenario.w);

    if (!args.bids_path.empty()) {
        caseio::ParsedBids parsed = caseio::parse_bids(args.bids_path);
        lc.warnings = parsed.warnings;
        lc.book = caseio::apply_bid_overrides(caseio::resolve_bids(parsed.book, lc.stitch_cfg),
                                              lc.scenario);
        lc.book.validate(lc.part);
    } else if (need_bids) {
        throw ConfigError("--bids is required for this command");
    }
    return lc;
}

std::string mech_upper(market::Mechanism m) {
    std::string s = market::mechanism_name(m);
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

fs::path report_path(const CommonArgs& args, const std::string& stem) {
    return fs::path(args.out_dir) / (stem + (args.format == "json" ? ".json" : ".csv"));
}

void write_manifest(const CommonArgs& args, const std::string& command,
                    const std::vector<std::string>& mechanisms,
                    const std::vector<fs::path>& outputs) {
    nlohmann::json j;
    j["tool"] = "seamsim";
    j["version"] = kVersion;
    j["command"] = command;
    j["format"] = args.format;
    j["seed"] = args.seed;
    j["mechanisms"] = mechanisms;
    nlohmann::json cfgs = nlohmann::json::array();
    for (const std::string& p : {args.stitch_path, args.bids_path, args.scenario_path}) {
        if (p.empty()) continue;
        cfgs.push_back({{"path", p}, {"fnv1a64", caseio::file_hash_hex(p)}});
    }
    j["configs"] = cfgs;
    nlohmann::json outs = nlohmann::json::array();
    for (const fs::path& p : outputs) outs.push_back(p.filename().string());
    j["outputs"] = outs;

    std::ofstream out(fs::path(args.out_dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    out << j.dump(2) << "\n";
}

Table solution_table(const LoadedCase& lc, const market::ClearingSolution& sol) {
    Table t;
    t.columns = {"record", "key", "value"};
    t.add_row({"mechanism", market::mechanism_name(sol.mechanism), ""});
    t.add_row({"cost_internal_per_h", "", format_sig6(sol.internal_cost)});
    t.add_row({"cost_interface_per_h", "", format_sig6(sol.interface_cost)});
    t.add_row({"cost_total_per_h", "", format_sig6(sol.total_cost())});
    const PowerNetwork& net = lc.net;
    for (int j = 0; j < net.n_generators(); ++j)
        t.add_row({"generation_mw", std::to_string(net.generators[j].bus) + "#" + std::to_string(j),
                   format_sig6(sol.g_mw(j))});
    for (int k = 0; k < sol.s_mw.size(); ++k)
        t.add_row({"bid_cleared_mw", std::to_string(lc.book.bids[k].id), format_sig6(sol.s_mw(k))});
    for (int l = 0; l < static_cast<int>(lc.part.tie_lines.size()) && l < sol.tie_flows_mw.size(); ++l) {
        const Branch& tie = lc.part.tie_lines[l];
        t.add_row({"tie_flow_mw", std::to_string(tie.from_bus) + "->" + std::to_string(tie.to_bus),
                   format_sig6(sol.tie_flows_mw(l))});
    }
    for (size_t p = 0; p < sol.interchange_q_mw.size(); ++p)
        t.add_row({"interchange_mw",
                   std::to_string(sol.interchange_pairs[p].second) + "->" +
                       std::to_string(sol.interchange_pairs[p].first),
                   format_sig6(sol.interchange_q_mw[p])});
    for (int i = 0; i < sol.lmp.size(); ++i)
        t.add_row({"lmp_per_mwh", std::to_string(net.buses[i].id), format_sig6(sol.lmp(i))});
    if (sol.boundary_price.size()) {
        const std::vector<BusId> order = lc.part.boundary_order();
        for (int b = 0; b < sol.boundary_price.size(); ++b)
            t.add_row({"boundary_price_per_mwh", std::to_string(order[b]),
                       format_sig6(sol.boundary_price(b))});
    }
    return t;
}

int cmd_solve(const CommonArgs& args, const std::string& mechanism) {
    const LoadedCase lc = load_case(args, mechanism != "jed");
    for (const std::string& w : lc.warnings) std::cerr << "warning: " << w << "\n";
    const auto blocks = netmodel::build_susceptance(lc.net, lc.part);

    market::ClearingSolution sol;
    if (mechanism == "jed") {
        sol = market::solve_jed(blocks);
    } else if (mechanism == "gcts") {
        sol = market::solve_gcts(blocks, lc.book);
    } else if (mechanism == "cts") {
        sol = market::solve_cts(blocks, market::default_proxies(lc.part), lc.book);
    } else {
        throw ConfigError("unknown mechanism '" + mechanism + "' (jed, cts, or gcts)");
    }

    fs::create_directories(args.out_dir);
    const caseio::ReportFormat fmt = caseio::parse_format(args.format);
    std::vector<fs::path> outputs;

    const fs::path sol_path = report_path(args, std::string("solution_") + mechanism);
    caseio::emit_report(solution_table(lc, sol), fmt, sol_path);
    outputs.push_back(sol_path);

    if (mechanism == "gcts") {
        // Settle the forecast-load real-time round.
        const bids::IncidenceMatrix m = bids::build_incidence(lc.book, lc.part);
        Eigen::VectorXd forecast(lc.net.n_buses());
        for (int i = 0; i < lc.net.n_buses(); ++i) forecast(i) = lc.net.buses[i].load_mw;
        std::vector<market::RealtimeSolution> rts;
        for (AreaId a : lc.part.areas)
            rts.push_back(market::solve_realtime(blocks, a, sol.theta_bar, forecast));
        const settlement::SettlementReport rep =
            settlement::build_report(blocks, m, sol.s_mw, rts, sol, forecast);

        Table ta;
        ta.columns = {"area", "net_revenue_per_h", "energy_revenue_per_h", "bid_revenue_per_h",
                      "internal_rent_per_h", "tie_rent_share_per_h", "identity_residual_per_h"};
        for (const auto& aset : rep.areas)
            ta.add_row({std::to_string(aset.area), format_sig6(aset.net_revenue),
                        format_sig6(aset.energy_revenue), format_sig6(aset.bid_revenue),
                        format_sig6(aset.internal_rent), format_sig6(aset.tie_rent_share),
                        format_sig6(aset.residual)});
        const fs::path area_path = report_path(args, "settlement_areas");
        caseio::emit_report(ta, fmt, area_path);
        outputs.push_back(area_path);

        Table tb;
        tb.columns = {"bid", "cleared_mw", "price_per_mwh", "rho_per_mwh"};
        for (AreaId a : lc.part.areas) tb.columns.push_back("mu_area" + std::to_string(a) + "_per_mwh");
        for (int k = 0; k < lc.book.n_bids(); ++k) {
            std::vector<std::string> row = {std::to_string(lc.book.bids[k].id),
                                            format_sig6(sol.s_mw(k)),
                                            format_sig6(lc.book.bids[k].dpi),
                                            format_sig6(rep.rho.size() ? rep.rho(k) : 0.0)};
            for (const auto& aset : rep.areas)
                row.push_back(format_sig6(aset.mu.size() ? aset.mu(k) : 0.0));
            tb.add_row(std::move(row));
        }
        const fs::path bid_path = report_path(args, "settlement_bids");
        caseio::emit_report(tb, fmt, bid_path);
        outputs.push_back(bid_path);
    }

    write_manifest(args, "solve", {mechanism}, outputs);
    return kExitOk;
}

int cmd_compare(const CommonArgs& args, const std::string& mechanisms_csv, int samples_override,
                double sigma_override) {
    LoadedCase lc = load_case(args, true);
    for (const std::string& w : lc.warnings) std::cerr << "warning: " << w << "\n";
    if (samples_override > 0) lc.scenario.n_samples = samples_override;
    if (sigma_override >= 0.0) lc.scenario.load_sigma_fraction = sigma_override;

    std::vector<market::Mechanism> mechanisms;
    std::vector<std::string> names;
    std::stringstream ss(mechanisms_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "jed") mechanisms.push_back(market::Mechanism::Jed);
        else if (item == "cts") mechanisms.push_back(market::Mechanism::Cts);
        else if (item == "gcts") mechanisms.push_back(market::Mechanism::Gcts);
        else throw ConfigError("unknown mechanism '" + item + "' in --mechanisms");
        names.push_back(item);
    }
    if (mechanisms.empty()) throw ConfigError("--mechanisms must name at least one mechanism");

    const auto rows = experiments::run_realtime_mc(lc.net, lc.book, lc.scenario, mechanisms);

    Table t;
    t.columns = {"mechanism", "net_interchange_mw", "lookahead_generation_cost_per_h",
                 "lookahead_total_cost_per_h", "avg_realtime_total_cost_per_h", "scenarios",
                 "failed_scenarios", "relaxed_scenarios", "scenarios_with_overflow",
                 "mean_overflow_lines", "mean_overflow_ratio_pct", "mean_tie_discrepancy_pct"};
    for (const auto& r : rows)
        t.add_row({mech_upper(r.mechanism), format_sig6(r.net_interchange_mw),
                   format_sig6(r.lookahead_generation_cost),
                   r.has_lookahead_total ? format_sig6(r.lookahead_total_cost) : "--",
                   format_sig6(r.avg_realtime_total_cost), std::to_string(r.scenarios),
                   std::to_string(r.failed_scenarios), std::to_string(r.relaxed_scenarios),
                   std::to_string(r.scenarios_with_overflow), format_sig6(r.mean_overflow_lines),
                   format_sig6(r.mean_overflow_ratio_pct),
                   format_sig6(r.mean_tie_discrepancy_pct)});

    fs::create_directories(args.out_dir);
    const fs::path path = report_path(args, "comparison");
    caseio::emit_report(t, caseio::parse_format(args.format), path);
    write_manifest(args, "compare", names, {path});
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& w_csv, const std::string& dpi_csv) {
    const LoadedCase lc = load_case(args, true);
    for (const std::string& w : lc.warnings) std::cerr << "warning: " << w << "\n";

    auto parse_grid = [](const std::string& csv, const char* what) {
        std::vector<double> values;
        std::stringstream ss(csv);
        std::string item;
        while (std::getline(ss, item, ',')) values.push_back(caseio::parse_double(item));
        if (values.empty()) throw ConfigError(std::string(what) + " grid is empty");
        return values;
    };
    const std::vector<double> w_grid = parse_grid(w_csv, "--w");
    const std::vector<double> dpi_grid = parse_grid(dpi_csv, "--dpi");

    const auto points = experiments::run_dpi_sweep(lc.net, lc.book, dpi_grid, w_grid);

    Table t;
    t.columns = {"w", "dpi_per_mwh", "cost_jed_per_h", "cost_gcts_per_h", "gap_per_h"};
    for (const auto& p : points)
        t.add_row({format_sig6(p.w), format_sig6(p.dpi), format_sig6(p.cost_jed),
                   format_sig6(p.cost_gcts), format_sig6(p.gap())});

    fs::create_directories(args.out_dir);
    const fs::path path = report_path(args, "sweep");
    caseio::emit_report(t, caseio::parse_format(args.format), path);
    write_manifest(args, "sweep", {"gcts", "jed"}, {path});
    return kExitOk;
}

int cmd_validate(const CommonArgs& args) {
    const LoadedCase lc = load_case(args, false);
    for (const std::string& w : lc.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "stitch config ok: " << lc.net.n_buses() << " buses, " << lc.net.n_branches()
              << " branches, " << lc.net.n_generators() << " generators, "
              << lc.part.n_areas() << " areas, " << lc.part.n_tie_lines() << " tie-lines\n";
    if (!args.bids_path.empty()) {
        std::cout << "bid book ok: " << lc.book.n_bids() << " bids\n";
        if (lc.book.n_bids() > 0) {
            const auto blocks = netmodel::build_susceptance(lc.net, lc.part);
            const auto m = bids::build_incidence(lc.book, lc.part);
            const bool diverse = bids::bid_rank_check(m.stacked, blocks.boundary_ref());
            std::cout << "bid diversity (full row rank off the reference bus): "
                      << (diverse ? "yes" : "no") << "\n";
        }
    }
    if (!args.scenario_path.empty())
        std::cout << "scenario ok: " << lc.scenario.n_samples << " samples, sigma "
                  << lc.scenario.load_sigma_fraction << ", seed " << lc.scenario.rng_seed << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"seamsim: multi-area interchange scheduling simulator"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string mechanism = "gcts";
    std::string mechanisms_csv = "jed,cts,gcts";
    std::string w_csv = "1.0";
    std::string dpi_csv = "10,1,0.5,0.1,0.01,0";
    int samples_override = -1;
    double sigma_override = -1.0;

    auto add_common = [&](CLI::App* cmd, bool bids_required) {
        cmd->add_option("--stitch", args.stitch_path, "stitch config (json)")->required();
        auto* b = cmd->add_option("--bids", args.bids_path, "bid book (json)");
        if (bids_required) b->required();
        cmd->add_option("--scenario", args.scenario_path, "scenario config (json)");
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--format", args.format, "report format: csv or json")
            ->check(CLI::IsMember({"csv", "json"}));
        cmd->add_option("--seed", args.seed, "override the scenario rng seed");
    };

    CLI::App* solve = app.add_subcommand("solve", "clear one mechanism and write its solution");
    add_common(solve, false);
    solve->add_option("--mechanism", mechanism, "jed, cts, or gcts")->required();

    CLI::App* compare = app.add_subcommand("compare", "Monte-Carlo comparison of mechanisms");
    add_common(compare, true);
    compare->add_option("--mechanisms", mechanisms_csv, "comma list of jed,cts,gcts");
    compare->add_option("--samples", samples_override, "override scenario sample count");
    compare->add_option("--sigma", sigma_override, "override load sigma fraction");

    CLI::App* sweep = app.add_subcommand("sweep", "price-convergence sweep over w x dpi");
    add_common(sweep, true);
    sweep->add_option("--w", w_csv, "comma list of weighting factors");
    sweep->add_option("--dpi", dpi_csv, "comma list of uniform bid prices");

    CLI::App* validate = app.add_subcommand("validate", "check configs and report totals");
    add_common(validate, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (solve->parsed()) return cmd_solve(args, mechanism);
        if (compare->parsed()) return cmd_compare(args, mechanisms_csv, samples_override, sigma_override);
        if (sweep->parsed()) return cmd_sweep(args, w_csv, dpi_csv);
        if (validate->parsed()) return cmd_validate(args);
    } catch (const InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitConfig;
}
