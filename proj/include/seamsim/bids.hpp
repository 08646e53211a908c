#pragma once

#include <Eigen/Dense>

#include "seamsim/types.hpp"

namespace seamsim::bids {

/// Bid-to-boundary-bus incidence. Rows follow the partition's concatenated
/// boundary ordering, columns follow the bid book. Entry +1 where the bid
/// buys power at that bus from its area, -1 where it sells power to it.
struct IncidenceMatrix {
    Eigen::MatrixXd stacked;                      // n_boundary x n_bids
    std::map<AreaId, Eigen::MatrixXd> per_area;   // boundary rows of one area

    int n_bids() const { return static_cast<int>(stacked.cols()); }
};

IncidenceMatrix build_incidence(const BidBook& book, const AreaPartition& part);

/// True when the stacked matrix has full row rank after removing the
/// reference row, i.e. rank == n_boundary - 1 (the diversity condition for
/// exact interchange matching).
bool bid_rank_check(const Eigen::MatrixXd& stacked, int reference_row);

/// Rank by Gauss elimination with partial pivoting (tolerance 1e-9).
int matrix_rank(Eigen::MatrixXd m);

} // namespace seamsim::bids
