#include "seamsim/caseio.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace seamsim::caseio {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_sig6(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    if (v == 0.0) v = 0.0; // normalize -0
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& token) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    while (first != last && (*first == ' ' || *first == '\t')) ++first;
    while (last != first && (*(last - 1) == ' ' || *(last - 1) == '\t')) --last;
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || first == last)
        throw ParseError("not a number: '" + token + "'");
    return v;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << content;
    if (!out) throw ConfigError("short write to " + path.string());
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void require_version(const json& j, const fs::path& path) {
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"] != 1)
        throw ParseError(path.string() + ": missing or unsupported \"version\" (expected 1)");
}

// ---------------------------------------------------------------------------
// MATPOWER-style case parsing

struct MatrixBlock {
    std::vector<std::vector<double>> rows;
    std::vector<int> row_lines; // source line numbers
};

struct CaseFile {
    double base_mva = 100.0;
    std::map<std::string, MatrixBlock> blocks;
};

std::vector<double> parse_row(const std::string& text, int line_no, const fs::path& path) {
    std::vector<double> out;
    const char* p = text.data();
    const char* end = text.data() + text.size();
    while (p != end) {
        while (p != end && (*p == ' ' || *p == '\t' || *p == ',')) ++p;
        if (p == end) break;
        double v = 0.0;
        auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc() || res.ptr == p)
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed number near '" +
                             std::string(p, std::min<size_t>(8, end - p)) + "'");
        out.push_back(v);
        p = res.ptr;
    }
    return out;
}

CaseFile parse_case_text(const fs::path& path) {
    const std::string text = read_file(path);
    CaseFile cf;

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    std::string block_name;
    bool any_block = false;

    while (std::getline(in, raw)) {
        ++line_no;
        const size_t comment = raw.find('%');
        std::string line = comment == std::string::npos ? raw : raw.substr(0, comment);
        auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), not_space));
        line.erase(std::find_if(line.rbegin(), line.rend(), not_space).base(), line.end());
        if (line.empty()) continue;

        if (block_name.empty()) {
            if (line.rfind("mpc.baseMVA", 0) == 0) {
                const size_t eq = line.find('=');
                std::string v = line.substr(eq + 1);
                v.erase(std::remove(v.begin(), v.end(), ';'), v.end());
                cf.base_mva = parse_double(v);
                continue;
            }
            if (line.rfind("mpc.", 0) == 0 && line.find("= [") != std::string::npos) {
                const size_t dot = line.find('.');
                const size_t sp = line.find_first_of(" \t=", dot);
                block_name = line.substr(dot + 1, sp - dot - 1);
                cf.blocks[block_name];
                any_block = true;
                const size_t open = line.find('[');
                line = line.substr(open + 1);
                if (line.empty()) continue;
                // fall through with the remainder as data
            } else {
                continue; // function header, version string, unknown fields
            }
        }

        if (!block_name.empty()) {
            bool closes = false;
            const size_t close = line.find(']');
            if (close != std::string::npos) {
                closes = true;
                line = line.substr(0, close);
            }
            // One or more rows, ';'-separated.
            size_t start = 0;
            while (start <= line.size()) {
                const size_t semi = line.find(';', start);
                const std::string piece =
                    line.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
                if (piece.find_first_not_of(" \t") != std::string::npos) {
                    cf.blocks[block_name].rows.push_back(parse_row(piece, line_no, path));
                    cf.blocks[block_name].row_lines.push_back(line_no);
                }
                if (semi == std::string::npos) break;
                start = semi + 1;
            }
            if (closes) block_name.clear();
        }
    }

    if (!any_block) throw ParseError(path.string() + ": no case data found");
    return cf;
}

const MatrixBlock& require_block(const CaseFile& cf, const std::string& name, const fs::path& path) {
    auto it = cf.blocks.find(name);
    if (it == cf.blocks.end() || it->second.rows.empty())
        throw ParseError(path.string() + ": missing mpc." + name + " block");
    return it->second;
}

void require_cols(const std::vector<double>& row, size_t n, const std::string& what, int line,
                  const fs::path& path) {
    if (row.size() < n)
        throw ParseError(path.string() + ":" + std::to_string(line) + ": " + what + " row has " +
                         std::to_string(row.size()) + " columns, need >= " + std::to_string(n));
}

} // namespace

PowerNetwork parse_case(const fs::path& path) {
    const CaseFile cf = parse_case_text(path);
    PowerNetwork net;
    net.base_mva = cf.base_mva;

    const MatrixBlock& bus = require_block(cf, "bus", path);
    for (size_t i = 0; i < bus.rows.size(); ++i) {
        require_cols(bus.rows[i], 3, "bus", bus.row_lines[i], path);
        Bus b;
        b.id = static_cast<BusId>(bus.rows[i][0]);
        b.area = 0;
        b.load_mw = std::max(0.0, bus.rows[i][2]);
        net.buses.push_back(b);
    }

    const MatrixBlock& branch = require_block(cf, "branch", path);
    for (size_t i = 0; i < branch.rows.size(); ++i) {
        const auto& r = branch.rows[i];
        require_cols(r, 6, "branch", branch.row_lines[i], path);
        if (r.size() >= 11 && r[10] == 0.0) continue; // out of service
        Branch br;
        br.from_bus = static_cast<BusId>(r[0]);
        br.to_bus = static_cast<BusId>(r[1]);
        br.reactance_pu = r[3];
        br.limit_mw = r[5] > 0.0 ? r[5] : kUnlimitedMw;
        net.branches.push_back(br);
    }

    const MatrixBlock& gen = require_block(cf, "gen", path);
    const MatrixBlock* gencost = nullptr;
    if (auto it = cf.blocks.find("gencost"); it != cf.blocks.end() && !it->second.rows.empty())
        gencost = &it->second;
    if (gencost && gencost->rows.size() < gen.rows.size())
        throw ParseError(path.string() + ": gencost has fewer rows than gen");

    for (size_t i = 0; i < gen.rows.size(); ++i) {
        const auto& r = gen.rows[i];
        require_cols(r, 10, "gen", gen.row_lines[i], path);
        if (r.size() >= 8 && r[7] <= 0.0) continue; // out of service
        Generator g;
        g.bus = static_cast<BusId>(r[0]);
        g.g_max_mw = r[8];
        g.g_min_mw = std::min(r[9], r[8]);
        if (gencost) {
            const auto& c = gencost->rows[i];
            require_cols(c, 4, "gencost", gencost->row_lines[i], path);
            const int model = static_cast<int>(c[0]);
            if (model != 2)
                throw ParseError(path.string() + ":" + std::to_string(gencost->row_lines[i]) +
                                 ": unsupported gencost model " + std::to_string(model) +
                                 " (only polynomial model 2 is handled)");
            const int ncost = static_cast<int>(c[3]);
            require_cols(c, 4 + ncost, "gencost", gencost->row_lines[i], path);
            CostCurve curve;
            if (ncost >= 3) {
                curve.c2 = c[4 + ncost - 3];
                curve.c1 = c[4 + ncost - 2];
                curve.c0 = c[4 + ncost - 1];
            } else if (ncost == 2) {
                curve.c1 = c[4];
                curve.c0 = c[5];
            } else if (ncost == 1) {
                curve.c0 = c[4];
            }
            if (curve.c2 < 0.0)
                throw ParseError(path.string() + ":" + std::to_string(gencost->row_lines[i]) +
                                 ": concave gencost (c2 < 0)");
            curve.kind = curve.c2 > 0.0 ? CostKind::Quadratic : CostKind::Linear;
            g.cost = curve;
        }
        net.generators.push_back(g);
    }

    return net; // not finalized: stitch assigns areas first
}

// ---------------------------------------------------------------------------
// JSON configs

StitchConfig parse_stitch_config(const fs::path& path) {
    const json j = parse_json_file(path);
    require_version(j, path);
    StitchConfig cfg;
    cfg.base_dir = fs::absolute(path).parent_path();
    cfg.name = j.value("name", path.stem().string());
    if (!j.contains("areas") || !j["areas"].is_array() || j["areas"].empty())
        throw ParseError(path.string() + ": \"areas\" must be a non-empty array");
    for (const auto& a : j["areas"]) {
        StitchConfig::AreaCase ac;
        ac.area = a.at("id").get<int>();
        ac.case_path = a.at("case").get<std::string>();
        ac.bus_offset = a.value("bus_offset", 0);
        ac.line_limit_scale = a.value("line_limit_scale", 1.0);
        if (ac.line_limit_scale <= 0.0)
            throw ParseError(path.string() + ": line_limit_scale must be positive");
        cfg.areas.push_back(ac);
    }
    for (const auto& t : j.value("tie_lines", json::array())) {
        StitchConfig::TieLine tl;
        tl.from_area = t.at("from_area").get<int>();
        tl.from_bus = t.at("from_bus").get<int>();
        tl.to_area = t.at("to_area").get<int>();
        tl.to_bus = t.at("to_bus").get<int>();
        tl.reactance_pu = t.value("reactance_pu", 0.1);
        tl.limit_mw = t.value("limit_mw", 100.0);
        cfg.tie_lines.push_back(tl);
    }
    if (j.contains("default_line_limit_mw") && !j["default_line_limit_mw"].is_null())
        cfg.default_line_limit_mw = j["default_line_limit_mw"].get<double>();
    cfg.area1_cost_weight = j.value("area1_cost_weight", 1.0);
    return cfg;
}

void emit_stitch_config(const StitchConfig& cfg, const fs::path& path) {
    json j;
    j["version"] = 1;
    j["name"] = cfg.name;
    j["areas"] = json::array();
    for (const auto& a : cfg.areas)
        j["areas"].push_back({{"id", a.area},
                              {"case", a.case_path},
                              {"bus_offset", a.bus_offset},
                              {"line_limit_scale", a.line_limit_scale}});
    j["tie_lines"] = json::array();
    for (const auto& t : cfg.tie_lines)
        j["tie_lines"].push_back({{"from_area", t.from_area},
                                  {"from_bus", t.from_bus},
                                  {"to_area", t.to_area},
                                  {"to_bus", t.to_bus},
                                  {"reactance_pu", t.reactance_pu},
                                  {"limit_mw", t.limit_mw}});
    if (cfg.default_line_limit_mw) j["default_line_limit_mw"] = *cfg.default_line_limit_mw;
    j["area1_cost_weight"] = cfg.area1_cost_weight;
    write_file(path, j.dump(2) + "\n");
}

ParsedBids parse_bids(const fs::path& path) {
    const json j = parse_json_file(path);
    require_version(j, path);
    ParsedBids out;
    int next_id = 1;
    for (const auto& b : j.value("bids", json::array())) {
        InterfaceBid bid;
        bid.id = b.value("id", next_id);
        next_id = bid.id + 1;
        bid.sell_to_area = b.at("sell_to").at("area").get<int>();
        bid.sell_to_bus = b.at("sell_to").at("bus").get<int>();
        bid.buy_from_area = b.at("buy_from").at("area").get<int>();
        bid.buy_from_bus = b.at("buy_from").at("bus").get<int>();
        bid.dpi = b.at("price_per_mwh").get<double>();
        bid.s_max_mw = b.at("max_mw").get<double>();
        if (bid.s_max_mw < 0.0)
            throw ParseError(path.string() + ": bid " + std::to_string(bid.id) + " has negative max_mw");
        if (bid.dpi < 0.0)
            out.warnings.push_back("bid " + std::to_string(bid.id) +
                                   " has a negative price; accepted but unusual");
        out.book.bids.push_back(bid);
    }
    std::map<int, int> seen;
    for (const auto& b : out.book.bids)
        if (++seen[b.id] > 1)
            throw ParseError(path.string() + ": duplicate bid id " + std::to_string(b.id));
    return out;
}

void emit_bids(const BidBook& book, const fs::path& path) {
    json j;
    j["version"] = 1;
    j["bids"] = json::array();
    for (const auto& b : book.bids)
        j["bids"].push_back({{"id", b.id},
                             {"sell_to", {{"area", b.sell_to_area}, {"bus", b.sell_to_bus}}},
                             {"buy_from", {{"area", b.buy_from_area}, {"bus", b.buy_from_bus}}},
                             {"price_per_mwh", b.dpi},
                             {"max_mw", b.s_max_mw}});
    write_file(path, j.dump(2) + "\n");
}

ScenarioConfig parse_scenario(const fs::path& path) {
    const json j = parse_json_file(path);
    require_version(j, path);
    ScenarioConfig sc;
    sc.n_samples = j.value("n_samples", 100);
    if (sc.n_samples < 1) throw ParseError(path.string() + ": n_samples must be >= 1");
    sc.load_sigma_fraction = j.value("load_sigma_fraction", 0.05);
    if (sc.load_sigma_fraction < 0.0)
        throw ParseError(path.string() + ": load_sigma_fraction must be >= 0");
    sc.rng_seed = j.value("rng_seed", std::uint64_t{1});
    sc.w = j.value("w", 1.0);
    if (j.contains("uniform_dpi") && !j["uniform_dpi"].is_null())
        sc.uniform_dpi = j["uniform_dpi"].get<double>();
    if (j.contains("uniform_smax_mw") && !j["uniform_smax_mw"].is_null())
        sc.uniform_smax_mw = j["uniform_smax_mw"].get<double>();
    return sc;
}

void emit_scenario(const ScenarioConfig& sc, const fs::path& path) {
    json j;
    j["version"] = 1;
    j["n_samples"] = sc.n_samples;
    j["load_sigma_fraction"] = sc.load_sigma_fraction;
    j["rng_seed"] = sc.rng_seed;
    j["w"] = sc.w;
    j["uniform_dpi"] = sc.uniform_dpi ? json(*sc.uniform_dpi) : json(nullptr);
    j["uniform_smax_mw"] = sc.uniform_smax_mw ? json(*sc.uniform_smax_mw) : json(nullptr);
    write_file(path, j.dump(2) + "\n");
}

std::pair<PowerNetwork, AreaPartition> stitch(const StitchConfig& cfg) {
    PowerNetwork net;
    bool first = true;
    std::map<AreaId, int> offset_of;

    for (const auto& ac : cfg.areas) {
        if (offset_of.count(ac.area))
            throw ConfigError("duplicate area id " + std::to_string(ac.area) + " in stitch config");
        offset_of[ac.area] = ac.bus_offset;

        fs::path case_path = ac.case_path;
        if (case_path.is_relative() && !cfg.base_dir.empty()) case_path = cfg.base_dir / case_path;
        PowerNetwork area_net = parse_case(case_path);

        if (first) {
            net.base_mva = area_net.base_mva;
            first = false;
        } else if (area_net.base_mva != net.base_mva) {
            throw ConfigError("areas disagree on base MVA");
        }

        const bool weighted = (ac.area == cfg.areas.front().area) && cfg.area1_cost_weight != 1.0;
        for (Bus b : area_net.buses) {
            b.id += ac.bus_offset;
            b.area = ac.area;
            net.buses.push_back(b);
        }
        for (Branch br : area_net.branches) {
            br.from_bus += ac.bus_offset;
            br.to_bus += ac.bus_offset;
            if (br.has_limit())
                br.limit_mw *= ac.line_limit_scale;
            else if (cfg.default_line_limit_mw)
                br.limit_mw = *cfg.default_line_limit_mw;
            net.branches.push_back(br);
        }
        for (Generator g : area_net.generators) {
            g.bus += ac.bus_offset;
            if (weighted) {
                g.cost.c1 *= cfg.area1_cost_weight;
                g.cost.c2 *= cfg.area1_cost_weight;
            }
            net.generators.push_back(g);
        }
    }

    if (cfg.tie_lines.empty() && cfg.areas.size() > 1)
        throw ConfigError("multi-area stitch config has no tie-lines");

    std::map<BusId, bool> known;
    for (const Bus& b : net.buses) known[b.id] = true;
    for (const auto& tl : cfg.tie_lines) {
        if (!offset_of.count(tl.from_area) || !offset_of.count(tl.to_area))
            throw ConfigError("tie-line references unknown area");
        Branch br;
        br.from_bus = tl.from_bus + offset_of[tl.from_area];
        br.to_bus = tl.to_bus + offset_of[tl.to_area];
        br.reactance_pu = tl.reactance_pu;
        br.limit_mw = tl.limit_mw;
        if (!known.count(br.from_bus) || !known.count(br.to_bus))
            throw ConfigError("dangling tie-line endpoint " + std::to_string(tl.from_bus) + " (area " +
                              std::to_string(tl.from_area) + ") to " + std::to_string(tl.to_bus) +
                              " (area " + std::to_string(tl.to_area) + ")");
        net.branches.push_back(br);
    }

    net.finalize();
    return {net, AreaPartition::from_network(net)};
}

BidBook resolve_bids(const BidBook& local, const StitchConfig& cfg) {
    std::map<AreaId, int> offset_of;
    for (const auto& ac : cfg.areas) offset_of[ac.area] = ac.bus_offset;
    BidBook out = local;
    for (InterfaceBid& b : out.bids) {
        auto sell = offset_of.find(b.sell_to_area);
        auto buy = offset_of.find(b.buy_from_area);
        if (sell == offset_of.end() || buy == offset_of.end())
            throw ConfigError("bid " + std::to_string(b.id) + " references an area missing from the stitch config");
        b.sell_to_bus += sell->second;
        b.buy_from_bus += buy->second;
    }
    return out;
}

BidBook apply_bid_overrides(const BidBook& book, const ScenarioConfig& sc) {
    BidBook out = book;
    for (InterfaceBid& b : out.bids) {
        if (sc.uniform_dpi) b.dpi = *sc.uniform_dpi;
        if (sc.uniform_smax_mw) b.s_max_mw = *sc.uniform_smax_mw;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

void Table::add_row(std::vector<std::string> cells) {
    if (cells.size() != columns.size())
        throw ConfigError("report row width mismatch");
    rows.push_back(std::move(cells));
}

ReportFormat parse_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw ConfigError("unknown report format '" + name + "' (csv or json)");
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

bool looks_numeric(const std::string& s) {
    if (s.empty()) return false;
    double v;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

} // namespace

void emit_report(const Table& table, ReportFormat format, const fs::path& path) {
    std::ostringstream out;
    if (format == ReportFormat::Csv) {
        for (size_t c = 0; c < table.columns.size(); ++c)
            out << (c ? "," : "") << csv_escape(table.columns[c]);
        out << "\n";
        for (const auto& row : table.rows) {
            for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << csv_escape(row[c]);
            out << "\n";
        }
    } else {
        json arr = json::array();
        for (const auto& row : table.rows) {
            json obj = json::object();
            for (size_t c = 0; c < row.size(); ++c) {
                if (looks_numeric(row[c]))
                    obj[table.columns[c]] = parse_double(row[c]);
                else
                    obj[table.columns[c]] = row[c];
            }
            arr.push_back(obj);
        }
        out << arr.dump(2) << "\n";
    }
    write_file(path, out.str());
}

std::string file_hash_hex(const fs::path& path) {
    const std::string data = read_file(path);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace seamsim::caseio
