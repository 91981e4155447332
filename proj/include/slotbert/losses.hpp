#pragma once

#include "slotbert/slot_attention.hpp"

namespace slotbert {

struct LossConfig {
    double alpha = 0.01; // contrastive weight
    double tau = 0.5;    // contrastive temperature
};

// C_ij = cos(u_i, u_j) - delta_ij with the diagonal forced to exact zero.
// Throws if any slot vector has near-zero norm, naming the slot.
Var cosine_similarity_matrix(const Var& slots, double norm_eps = 1e-12);

// (1 / (T*K^2)) * sum_t sum_i sum_j -log softmax_j(-C_ij / tau), computed with
// max-subtracted log-sum-exp per row.
Var slot_contrastive_loss(const SlotSequence& s, double tau);

// mean over all elements of the squared difference
Var reconstruction_loss(const std::vector<Var>& x_recon, const std::vector<Mat>& x_target);

Var total_loss(const Var& recon, const Var& contrast, const LossConfig& cfg);

} // namespace slotbert
