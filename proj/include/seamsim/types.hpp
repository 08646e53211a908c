#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace seamsim {

using AreaId = int;
using BusId = int;

/// Thrown on malformed input files (bad rows, unknown keys, ...).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown on semantically invalid configs or networks (dangling bus,
/// disconnected graph, bid at a non-boundary bus, ...).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when linear algebra breaks down (singular interior block, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when an optimization problem has no feasible point.
class InfeasibleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// MW value meaning "no thermal limit" on a branch.
inline constexpr double kUnlimitedMw = std::numeric_limits<double>::infinity();

enum class CostKind { Linear, Quadratic };

/// Convex polynomial offer curve, c0 + c1*g + c2*g^2 in $/h with g in MW.
struct CostCurve {
    CostKind kind = CostKind::Linear;
    double c0 = 0.0; // $/h
    double c1 = 0.0; // $/MWh
    double c2 = 0.0; // $/MW^2 h, >= 0

    double eval(double mw) const { return c0 + c1 * mw + c2 * mw * mw; }
    double marginal(double mw) const { return c1 + 2.0 * c2 * mw; }
};

struct Bus {
    BusId id = 0;
    AreaId area = 0;
    double load_mw = 0.0;       // forecast demand
    bool is_boundary = false;   // terminates at least one tie-line
};

struct Branch {
    BusId from_bus = 0;
    BusId to_bus = 0;
    double reactance_pu = 0.0;  // > 0
    double limit_mw = kUnlimitedMw;
    bool is_tie_line = false;   // endpoints in different areas

    double susceptance_pu() const { return 1.0 / reactance_pu; }
    bool has_limit() const { return std::isfinite(limit_mw); }
};

struct Generator {
    BusId bus = 0;
    double g_min_mw = 0.0;
    double g_max_mw = 0.0;
    CostCurve cost;
};

/// One area or the stitched interconnection, per-unit DC model.
/// Call finalize() after filling the raw vectors; every other module
/// assumes a finalized network (sorted buses, merged parallel branches,
/// boundary flags set, connectivity verified).
struct PowerNetwork {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    double base_mva = 100.0;

    /// Validate invariants and normalize: sort buses by id, merge parallel
    /// branches (summed susceptance and limits), flag tie-lines and
    /// boundary buses, verify connectivity.
    void finalize();

    bool finalized() const { return finalized_; }
    int n_buses() const { return static_cast<int>(buses.size()); }
    int n_branches() const { return static_cast<int>(branches.size()); }
    int n_generators() const { return static_cast<int>(generators.size()); }

    /// Dense index of a bus id (buses are sorted by id after finalize()).
    int bus_index(BusId id) const;
    const Bus& bus(BusId id) const { return buses[bus_index(id)]; }

    double load_pu(int bus_idx) const { return buses[bus_idx].load_mw / base_mva; }

    /// Indices of generators attached to each bus index.
    const std::vector<std::vector<int>>& gens_at_bus() const { return gens_at_bus_; }

    /// Distinct area ids, ascending.
    const std::vector<AreaId>& area_ids() const { return area_ids_; }

private:
    std::map<BusId, int> index_of_;
    std::vector<std::vector<int>> gens_at_bus_;
    std::vector<AreaId> area_ids_;
    bool finalized_ = false;
};

/// Bus-to-area block structure: ordered areas, per-area boundary lists,
/// tie-lines. Orderings are sorted by bus id so matrix indexing is
/// reproducible run to run.
struct AreaPartition {
    std::vector<AreaId> areas;                          // ascending
    std::map<AreaId, std::vector<BusId>> interior_buses; // sorted by id
    std::map<AreaId, std::vector<BusId>> boundary_buses; // sorted by id
    std::vector<Branch> tie_lines;                       // deterministic order

    int n_areas() const { return static_cast<int>(areas.size()); }
    int n_boundary() const;
    int n_tie_lines() const { return static_cast<int>(tie_lines.size()); }

    /// Position of `id` in the concatenated boundary ordering
    /// [boundary(area_1); boundary(area_2); ...]; -1 if not a boundary bus.
    int boundary_index(BusId id) const;

    /// Concatenated boundary bus ids in boundary-vector order.
    std::vector<BusId> boundary_order() const;

    /// Half-open [begin, end) range of area `a` rows in the boundary vector.
    std::pair<int, int> boundary_range(AreaId a) const;

    AreaId area_of(BusId id) const;

    static AreaPartition from_network(const PowerNetwork& net);

private:
    std::map<BusId, int> boundary_index_;
    std::map<BusId, AreaId> area_of_;
};

/// Interface bid: withdraw s at buy_from, inject s at sell_to, offered at
/// price dpi on the settlement gap, capped at s_max.
struct InterfaceBid {
    int id = 0;
    AreaId sell_to_area = 0;
    BusId sell_to_bus = 0;   // power delivered (injected) here
    AreaId buy_from_area = 0;
    BusId buy_from_bus = 0;  // power purchased (withdrawn) here
    double dpi = 0.0;        // $/MWh
    double s_max_mw = 0.0;   // >= 0
};

struct BidBook {
    std::vector<InterfaceBid> bids;

    int n_bids() const { return static_cast<int>(bids.size()); }

    /// Check every bid trades between distinct areas at boundary buses.
    void validate(const AreaPartition& part) const;
};

} // namespace seamsim
