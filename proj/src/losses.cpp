#include "slotbert/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace slotbert {

Var cosine_similarity_matrix(const Var& slots, double norm_eps) {
    Eigen::VectorXd norms = slots->val.rowwise().norm();
    for (long i = 0; i < norms.size(); ++i)
        if (norms(i) < norm_eps)
            throw std::runtime_error("cosine_similarity_matrix: degenerate slot " +
                                     std::to_string(i) + " has near-zero norm");
    Var sq_norm = ag::row_sum(ag::square(slots));          // K x 1
    Var unit = ag::div_col_broadcast(slots, ag::sqrt(sq_norm));
    Var sim = ag::matmul(unit, ag::transpose(unit));       // K x K, diagonal ~= 1
    return ag::zero_diagonal(sim);                         // subtract identity, exact zeros
}

Var slot_contrastive_loss(const SlotSequence& s, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("slot_contrastive_loss: tau must be positive");
    if (s.t() == 0) throw std::invalid_argument("slot_contrastive_loss: empty sequence");
    const double k = static_cast<double>(s.k());
    Var acc;
    for (const Var& frame : s.frames) {
        Var c = cosine_similarity_matrix(frame);
        Var scores = ag::scale(c, -1.0 / tau);           // K x K
        // sum_i sum_j [ -scores_ij + logsumexp_l(scores_il) ]
        Var lse = ag::logsumexp_rows(scores);            // K x 1
        Var frame_loss = ag::add(ag::neg(ag::sum(scores)), ag::scale(ag::sum(lse), k));
        acc = acc ? ag::add(acc, frame_loss) : frame_loss;
    }
    return ag::scale(acc, 1.0 / (static_cast<double>(s.t()) * k * k));
}

Var reconstruction_loss(const std::vector<Var>& x_recon, const std::vector<Mat>& x_target) {
    if (x_recon.size() != x_target.size())
        throw std::invalid_argument("reconstruction_loss: frame count mismatch");
    if (x_recon.empty()) throw std::invalid_argument("reconstruction_loss: empty input");
    Var acc;
    long count = 0;
    for (size_t ti = 0; ti < x_recon.size(); ++ti) {
        if (x_recon[ti]->rows() != x_target[ti].rows() ||
            x_recon[ti]->cols() != x_target[ti].cols())
            throw std::invalid_argument("reconstruction_loss: shape mismatch at frame " +
                                        std::to_string(ti));
        Var diff = ag::sub(x_recon[ti], ag::constant(x_target[ti]));
        Var sq = ag::sum(ag::square(diff));
        acc = acc ? ag::add(acc, sq) : sq;
        count += x_target[ti].size();
    }
    return ag::scale(acc, 1.0 / static_cast<double>(count));
}

Var total_loss(const Var& recon, const Var& contrast, const LossConfig& cfg) {
    if (!std::isfinite(recon->val(0, 0)) || !std::isfinite(contrast->val(0, 0)))
        throw std::runtime_error("total_loss: non-finite loss term (recon=" +
                                 std::to_string(recon->val(0, 0)) + ", contrast=" +
                                 std::to_string(contrast->val(0, 0)) + ")");
    return ag::add(recon, ag::scale(contrast, cfg.alpha));
}

} // namespace slotbert
