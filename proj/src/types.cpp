#include "seamsim/types.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace seamsim {

namespace {

// Union-find over dense indices.
struct DisjointSets {
    std::vector<int> parent;
    explicit DisjointSets(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) { parent[a] = parent[parent[a]]; a = parent[a]; }
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

} // namespace

void PowerNetwork::finalize() {
    if (buses.empty()) throw ConfigError("network has no buses");
    if (base_mva <= 0.0) throw ConfigError("base_mva must be positive");

    std::sort(buses.begin(), buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    index_of_.clear();
    for (int i = 0; i < n_buses(); ++i) {
        const Bus& b = buses[i];
        if (index_of_.count(b.id))
            throw ConfigError("duplicate bus id " + std::to_string(b.id));
        if (b.load_mw < 0.0)
            throw ConfigError("negative load at bus " + std::to_string(b.id));
        index_of_[b.id] = i;
    }

    for (const Branch& br : branches) {
        if (br.from_bus == br.to_bus)
            throw ConfigError("branch with identical endpoints at bus " + std::to_string(br.from_bus));
        if (!index_of_.count(br.from_bus) || !index_of_.count(br.to_bus))
            throw ConfigError("branch " + std::to_string(br.from_bus) + "-" +
                              std::to_string(br.to_bus) + " references unknown bus");
        if (!(br.reactance_pu > 0.0))
            throw ConfigError("branch " + std::to_string(br.from_bus) + "-" +
                              std::to_string(br.to_bus) + " needs strictly positive reactance");
        if (!(br.limit_mw > 0.0))
            throw ConfigError("branch " + std::to_string(br.from_bus) + "-" +
                              std::to_string(br.to_bus) + " needs positive flow limit");
    }

    // Merge parallel branches between the same bus pair: susceptances add,
    // limits add, orientation of the first occurrence wins.
    {
        std::map<std::pair<BusId, BusId>, int> seen; // unordered pair -> merged index
        std::vector<Branch> merged;
        merged.reserve(branches.size());
        for (const Branch& br : branches) {
            auto key = std::minmax(br.from_bus, br.to_bus);
            auto it = seen.find(key);
            if (it == seen.end()) {
                seen[key] = static_cast<int>(merged.size());
                merged.push_back(br);
            } else {
                Branch& m = merged[it->second];
                const double b_sum = m.susceptance_pu() + br.susceptance_pu();
                m.reactance_pu = 1.0 / b_sum;
                if (m.has_limit() && br.has_limit())
                    m.limit_mw += br.limit_mw;
                else
                    m.limit_mw = kUnlimitedMw;
            }
        }
        branches = std::move(merged);
        std::sort(branches.begin(), branches.end(), [](const Branch& a, const Branch& b) {
            auto ka = std::minmax(a.from_bus, a.to_bus);
            auto kb = std::minmax(b.from_bus, b.to_bus);
            return ka < kb;
        });
    }

    for (Bus& b : buses) b.is_boundary = false;
    for (Branch& br : branches) {
        const Bus& f = buses[bus_index(br.from_bus)];
        const Bus& t = buses[bus_index(br.to_bus)];
        br.is_tie_line = (f.area != t.area);
        if (br.is_tie_line) {
            buses[bus_index(br.from_bus)].is_boundary = true;
            buses[bus_index(br.to_bus)].is_boundary = true;
        }
    }

    if (generators.empty()) throw ConfigError("network has no generators");
    gens_at_bus_.assign(n_buses(), {});
    for (int j = 0; j < n_generators(); ++j) {
        const Generator& g = generators[j];
        if (!index_of_.count(g.bus))
            throw ConfigError("generator references unknown bus " + std::to_string(g.bus));
        if (g.g_min_mw > g.g_max_mw)
            throw ConfigError("generator at bus " + std::to_string(g.bus) + " has g_min > g_max");
        if (g.cost.c2 < 0.0)
            throw ConfigError("generator at bus " + std::to_string(g.bus) + " has concave cost (c2 < 0)");
        gens_at_bus_[bus_index(g.bus)].push_back(j);
    }

    // Connectivity.
    DisjointSets ds(n_buses());
    for (const Branch& br : branches) ds.unite(bus_index(br.from_bus), bus_index(br.to_bus));
    std::map<int, std::vector<BusId>> components;
    for (int i = 0; i < n_buses(); ++i) components[ds.find(i)].push_back(buses[i].id);
    if (components.size() > 1) {
        std::ostringstream msg;
        msg << "network is disconnected into " << components.size() << " components:";
        for (const auto& [root, ids] : components) {
            msg << " {";
            for (size_t k = 0; k < ids.size() && k < 6; ++k) msg << (k ? "," : "") << ids[k];
            if (ids.size() > 6) msg << ",...";
            msg << "}";
        }
        throw ConfigError(msg.str());
    }

    area_ids_.clear();
    for (const Bus& b : buses) area_ids_.push_back(b.area);
    std::sort(area_ids_.begin(), area_ids_.end());
    area_ids_.erase(std::unique(area_ids_.begin(), area_ids_.end()), area_ids_.end());

    finalized_ = true;
}

int PowerNetwork::bus_index(BusId id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end())
        throw ConfigError("unknown bus id " + std::to_string(id));
    return it->second;
}

int AreaPartition::n_boundary() const {
    int n = 0;
    for (const auto& [a, v] : boundary_buses) n += static_cast<int>(v.size());
    return n;
}

int AreaPartition::boundary_index(BusId id) const {
    auto it = boundary_index_.find(id);
    return it == boundary_index_.end() ? -1 : it->second;
}

std::vector<BusId> AreaPartition::boundary_order() const {
    std::vector<BusId> order;
    for (AreaId a : areas) {
        const auto& v = boundary_buses.at(a);
        order.insert(order.end(), v.begin(), v.end());
    }
    return order;
}

std::pair<int, int> AreaPartition::boundary_range(AreaId a) const {
    int begin = 0;
    for (AreaId x : areas) {
        const int sz = static_cast<int>(boundary_buses.at(x).size());
        if (x == a) return {begin, begin + sz};
        begin += sz;
    }
    throw ConfigError("unknown area id " + std::to_string(a));
}

AreaId AreaPartition::area_of(BusId id) const {
    auto it = area_of_.find(id);
    if (it == area_of_.end()) throw ConfigError("unknown bus id " + std::to_string(id));
    return it->second;
}

AreaPartition AreaPartition::from_network(const PowerNetwork& net) {
    if (!net.finalized()) throw ConfigError("network must be finalized before partitioning");
    AreaPartition part;
    part.areas = net.area_ids();
    for (AreaId a : part.areas) {
        part.interior_buses[a] = {};
        part.boundary_buses[a] = {};
    }
    for (const Bus& b : net.buses) {
        part.area_of_[b.id] = b.area;
        (b.is_boundary ? part.boundary_buses[b.area] : part.interior_buses[b.area]).push_back(b.id);
    }
    for (const Branch& br : net.branches)
        if (br.is_tie_line) part.tie_lines.push_back(br);

    int pos = 0;
    for (AreaId a : part.areas)
        for (BusId id : part.boundary_buses[a]) part.boundary_index_[id] = pos++;
    return part;
}

void BidBook::validate(const AreaPartition& part) const {
    for (const InterfaceBid& bid : bids) {
        if (bid.sell_to_area == bid.buy_from_area)
            throw ConfigError("bid " + std::to_string(bid.id) + " trades within a single area");
        if (bid.s_max_mw < 0.0)
            throw ConfigError("bid " + std::to_string(bid.id) + " has negative quantity cap");
        for (auto [area, bus] : {std::pair{bid.sell_to_area, bid.sell_to_bus},
                                 std::pair{bid.buy_from_area, bid.buy_from_bus}}) {
            if (part.boundary_index(bus) < 0)
                throw ConfigError("bid " + std::to_string(bid.id) + " references non-boundary bus " +
                                  std::to_string(bus));
            if (part.area_of(bus) != area)
                throw ConfigError("bid " + std::to_string(bid.id) + " places bus " +
                                  std::to_string(bus) + " in the wrong area");
        }
    }
}

} // namespace seamsim
