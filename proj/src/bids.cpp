#include "seamsim/bids.hpp"

namespace seamsim::bids {

IncidenceMatrix build_incidence(const BidBook& book, const AreaPartition& part) {
    book.validate(part);
    const int nb = part.n_boundary();
    const int nk = book.n_bids();

    IncidenceMatrix m;
    m.stacked = Eigen::MatrixXd::Zero(nb, nk);
    for (int k = 0; k < nk; ++k) {
        const InterfaceBid& bid = book.bids[k];
        m.stacked(part.boundary_index(bid.buy_from_bus), k) += 1.0;
        m.stacked(part.boundary_index(bid.sell_to_bus), k) -= 1.0;
    }
    for (AreaId a : part.areas) {
        auto [b0, b1] = part.boundary_range(a);
        m.per_area[a] = m.stacked.middleRows(b0, b1 - b0);
    }
    return m;
}

int matrix_rank(Eigen::MatrixXd m) {
    const int rows = static_cast<int>(m.rows());
    const int cols = static_cast<int>(m.cols());
    int rank = 0;
    for (int col = 0; col < cols && rank < rows; ++col) {
        int pivot = rank;
        for (int r = rank + 1; r < rows; ++r)
            if (std::abs(m(r, col)) > std::abs(m(pivot, col))) pivot = r;
        if (std::abs(m(pivot, col)) < 1e-9) continue;
        m.row(pivot).swap(m.row(rank));
        for (int r = rank + 1; r < rows; ++r) {
            const double f = m(r, col) / m(rank, col);
            m.row(r) -= f * m.row(rank);
        }
        ++rank;
    }
    return rank;
}

bool bid_rank_check(const Eigen::MatrixXd& stacked, int reference_row) {
    const int nb = static_cast<int>(stacked.rows());
    if (reference_row < 0 || reference_row >= nb)
        throw ConfigError("reference row out of range");
    Eigen::MatrixXd reduced(nb - 1, stacked.cols());
    int r = 0;
    for (int i = 0; i < nb; ++i)
        if (i != reference_row) reduced.row(r++) = stacked.row(i);
    return matrix_rank(reduced) == nb - 1;
}

} // namespace seamsim::bids
