#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seamsim/types.hpp"

namespace seamsim::caseio {

/// Multi-area stitching recipe: per-area case files plus the tie-lines that
/// join them. Bus ids inside each case are local; bus_offset maps them into
/// the global numbering.
struct StitchConfig {
    struct AreaCase {
        AreaId area = 0;
        std::string case_path; // relative to the config file
        int bus_offset = 0;
        double line_limit_scale = 1.0; // applied to the case's finite ratings
    };
    struct TieLine {
        AreaId from_area = 0;
        BusId from_bus = 0; // local id within from_area's case
        AreaId to_area = 0;
        BusId to_bus = 0;   // local id
        double reactance_pu = 0.1;
        double limit_mw = 100.0;
    };

    std::string name;
    std::vector<AreaCase> areas;
    std::vector<TieLine> tie_lines;
    std::optional<double> default_line_limit_mw; // replaces "unlimited" case ratings
    double area1_cost_weight = 1.0;              // w, scales the first area's c1 and c2
    std::filesystem::path base_dir;              // resolved at parse time
};

struct ScenarioConfig {
    int n_samples = 100;
    double load_sigma_fraction = 0.05;
    std::uint64_t rng_seed = 1;
    double w = 1.0;                          // first-area price weighting factor
    std::optional<double> uniform_dpi;       // overrides every bid price
    std::optional<double> uniform_smax_mw;   // overrides every bid cap
};

struct ParsedBids {
    BidBook book; // bus ids still local to their areas
    std::vector<std::string> warnings;
};

/// Parse a MATPOWER-style case file into a single-area network (area id 0,
/// reassigned by stitch). Reads the DC-relevant columns only.
PowerNetwork parse_case(const std::filesystem::path& path);

StitchConfig parse_stitch_config(const std::filesystem::path& path);
void emit_stitch_config(const StitchConfig& cfg, const std::filesystem::path& path);

ParsedBids parse_bids(const std::filesystem::path& path);
void emit_bids(const BidBook& book, const std::filesystem::path& path);

ScenarioConfig parse_scenario(const std::filesystem::path& path);
void emit_scenario(const ScenarioConfig& sc, const std::filesystem::path& path);

/// Build the interconnection: parse every area case, renumber, apply the
/// cost weight and default limits, add tie-lines, finalize.
std::pair<PowerNetwork, AreaPartition> stitch(const StitchConfig& cfg);

/// Map a locally-numbered bid book onto the stitched global numbering.
BidBook resolve_bids(const BidBook& local, const StitchConfig& cfg);

/// Apply scenario overrides (uniform price / cap) to a resolved book.
BidBook apply_bid_overrides(const BidBook& book, const ScenarioConfig& sc);

/// Tabular report with pre-formatted cells; the one shape every CSV/JSON
/// output uses.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells);
};

enum class ReportFormat { Csv, Json };

ReportFormat parse_format(const std::string& name);

void emit_report(const Table& table, ReportFormat format, const std::filesystem::path& path);

/// Shortest round-trippable representation with 6 significant digits.
std::string format_sig6(double v);

/// Locale-independent double parsing (std::from_chars).
double parse_double(const std::string& token);

/// FNV-1a 64-bit content hash, hex-encoded; used by run manifests.
std::string file_hash_hex(const std::filesystem::path& path);

} // namespace seamsim::caseio
