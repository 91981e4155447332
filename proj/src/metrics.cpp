#include "slotbert/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace slotbert {

namespace {

void check_shapes(const LabelMaskVideo& pred, const LabelMaskVideo& gt, const char* op) {
    if (pred.t != gt.t || pred.h != gt.h || pred.w != gt.w)
        throw std::invalid_argument(std::string(op) + ": prediction and ground truth shapes differ");
}

double comb2(int64_t n) { return 0.5 * static_cast<double>(n) * static_cast<double>(n - 1); }

// contingency-table ARI over the given point set
double ari_from_pairs(const std::vector<int32_t>& a, const std::vector<int32_t>& b) {
    const int64_t n = static_cast<int64_t>(a.size());
    if (n < 2) return 1.0; // nothing to compare
    std::map<std::pair<int32_t, int32_t>, int64_t> joint;
    std::map<int32_t, int64_t> ca, cb;
    for (size_t i = 0; i < a.size(); ++i) {
        ++joint[{a[i], b[i]}];
        ++ca[a[i]];
        ++cb[b[i]];
    }
    double sum_joint = 0, sum_a = 0, sum_b = 0;
    for (const auto& [k, v] : joint) sum_joint += comb2(v);
    for (const auto& [k, v] : ca) sum_a += comb2(v);
    for (const auto& [k, v] : cb) sum_b += comb2(v);
    double expected = sum_a * sum_b / comb2(n);
    double max_index = 0.5 * (sum_a + sum_b);
    if (std::abs(max_index - expected) < 1e-12) return 1.0; // both clusterings trivial
    return (sum_joint - expected) / (max_index - expected);
}

} // namespace

double fg_ari(const LabelMaskVideo& pred, const LabelMaskVideo& gt, bool* degenerate,
              bool per_frame_average) {
    check_shapes(pred, gt, "fg_ari");
    if (degenerate) *degenerate = false;

    auto collect = [&](int ti_begin, int ti_end, std::vector<int32_t>& pv,
                       std::vector<int32_t>& gv) {
        for (int ti = ti_begin; ti < ti_end; ++ti)
            for (int r = 0; r < gt.h; ++r)
                for (int c = 0; c < gt.w; ++c)
                    if (gt.at(ti, r, c) != gt.background_label) {
                        pv.push_back(pred.at(ti, r, c));
                        gv.push_back(gt.at(ti, r, c));
                    }
    };

    if (!per_frame_average) {
        std::vector<int32_t> pv, gv;
        collect(0, gt.t, pv, gv);
        if (pv.empty()) {
            if (degenerate) *degenerate = true;
            return 1.0; // no foreground: nothing to compare
        }
        return ari_from_pairs(pv, gv);
    }

    double sum = 0;
    int counted = 0;
    for (int ti = 0; ti < gt.t; ++ti) {
        std::vector<int32_t> pv, gv;
        collect(ti, ti + 1, pv, gv);
        if (pv.empty()) continue;
        sum += ari_from_pairs(pv, gv);
        ++counted;
    }
    if (counted == 0) {
        if (degenerate) *degenerate = true;
        return 1.0;
    }
    return sum / counted;
}

double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("iou: mask sizes differ");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        bool pa = a[i] != 0, pb = b[i] != 0;
        inter += pa && pb;
        uni += pa || pb;
    }
    if (uni == 0) return 1.0; // both empty: identical
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<int> hungarian_max_assignment(const std::vector<double>& weights, int n_rows,
                                          int n_cols) {
    if (weights.size() != static_cast<size_t>(n_rows) * n_cols)
        throw std::invalid_argument("hungarian: weight matrix size mismatch");
    // square min-cost formulation with potentials; cost = -weight, padded with 0
    int n = std::max(n_rows, n_cols);
    const double INF = std::numeric_limits<double>::infinity();
    auto cost = [&](int i, int j) -> double {
        if (i < n_rows && j < n_cols) return -weights[static_cast<size_t>(i) * n_cols + j];
        return 0.0;
    };
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, INF);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = INF;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_match(n_rows, -1);
    for (int j = 1; j <= n; ++j) {
        int i = p[j];
        if (i >= 1 && i <= n_rows && j <= n_cols) row_match[i - 1] = j - 1;
    }
    return row_match;
}

namespace {

// instance id -> flat boolean mask over the given pixel range
std::vector<std::pair<int32_t, std::vector<uint8_t>>> extract_instances(
    const LabelMaskVideo& v, int ti_begin, int ti_end) {
    std::map<int32_t, std::vector<uint8_t>> inst;
    size_t span = static_cast<size_t>(ti_end - ti_begin) * v.h * v.w;
    size_t offset = static_cast<size_t>(ti_begin) * v.h * v.w;
    for (size_t i = 0; i < span; ++i) {
        int32_t id = v.labels[offset + i];
        if (v.has_background && id == v.background_label) continue;
        auto it = inst.find(id);
        if (it == inst.end()) it = inst.emplace(id, std::vector<uint8_t>(span, 0)).first;
        it->second[i] = 1;
    }
    return {inst.begin(), inst.end()};
}

// best IoU per gt instance under the requested matching rule
std::vector<double> matched_ious(const std::vector<std::pair<int32_t, std::vector<uint8_t>>>& gts,
                                 const std::vector<std::pair<int32_t, std::vector<uint8_t>>>& preds,
                                 Matching matching, std::vector<int>* match_out = nullptr) {
    std::vector<double> ious(gts.size(), 0.0);
    if (match_out) match_out->assign(gts.size(), -1);
    if (gts.empty()) return ious;
    std::vector<double> table(gts.size() * std::max<size_t>(preds.size(), 1), 0.0);
    for (size_t g = 0; g < gts.size(); ++g)
        for (size_t p = 0; p < preds.size(); ++p)
            table[g * preds.size() + p] = iou(gts[g].second, preds[p].second);

    if (matching == Matching::best_overlap) {
        for (size_t g = 0; g < gts.size(); ++g) {
            double best = 0.0;
            int best_p = -1;
            for (size_t p = 0; p < preds.size(); ++p)
                if (table[g * preds.size() + p] > best) {
                    best = table[g * preds.size() + p];
                    best_p = static_cast<int>(p);
                }
            ious[g] = best;
            if (match_out) (*match_out)[g] = best_p;
        }
    } else {
        if (!preds.empty()) {
            auto match = hungarian_max_assignment(table, static_cast<int>(gts.size()),
                                                  static_cast<int>(preds.size()));
            for (size_t g = 0; g < gts.size(); ++g) {
                if (match[g] >= 0) {
                    ious[g] = table[g * preds.size() + match[g]];
                    if (match_out) (*match_out)[g] = match[g];
                }
            }
        }
    }
    return ious;
}

} // namespace

std::optional<double> mbo(const LabelMaskVideo& pred, const LabelMaskVideo& gt, MboLevel level,
                          Matching matching) {
    check_shapes(pred, gt, "mbo");
    double sum = 0;
    int64_t count = 0;
    if (level == MboLevel::video) {
        auto gts = extract_instances(gt, 0, gt.t);       // spatio-temporal tubes
        auto preds = extract_instances(pred, 0, pred.t);
        for (double v : matched_ious(gts, preds, matching)) {
            sum += v;
            ++count;
        }
    } else {
        for (int ti = 0; ti < gt.t; ++ti) {
            auto gts = extract_instances(gt, ti, ti + 1);
            if (gts.empty()) continue;
            auto preds = extract_instances(pred, ti, ti + 1);
            for (double v : matched_ious(gts, preds, matching)) {
                sum += v;
                ++count;
            }
        }
    }
    if (count == 0) return std::nullopt; // no gt instances anywhere
    return sum / static_cast<double>(count);
}

std::vector<uint8_t> mask_boundary(const std::vector<uint8_t>& mask, int h, int w) {
    std::vector<uint8_t> boundary(mask.size(), 0);
    auto on = [&](int r, int c) {
        return r >= 0 && r < h && c >= 0 && c < w && mask[static_cast<size_t>(r) * w + c] != 0;
    };
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (on(r, c) && (!on(r - 1, c) || !on(r + 1, c) || !on(r, c - 1) || !on(r, c + 1)))
                boundary[static_cast<size_t>(r) * w + c] = 1;
    return boundary;
}

std::vector<double> squared_edt(const std::vector<uint8_t>& on, int h, int w) {
    const double INF = 1e18;
    std::vector<double> g(static_cast<size_t>(h) * w, INF);
    // column pass: 1D distance along rows within each column
    for (int c = 0; c < w; ++c) {
        // forward/backward scans give exact 1D distance to nearest on-pixel
        double dist = INF;
        for (int r = 0; r < h; ++r) {
            if (on[static_cast<size_t>(r) * w + c])
                dist = 0;
            else if (dist < INF)
                dist += 1;
            g[static_cast<size_t>(r) * w + c] = dist;
        }
        dist = INF;
        for (int r = h - 1; r >= 0; --r) {
            if (on[static_cast<size_t>(r) * w + c])
                dist = 0;
            else if (dist < INF)
                dist += 1;
            g[static_cast<size_t>(r) * w + c] = std::min(g[static_cast<size_t>(r) * w + c], dist);
        }
    }
    // row pass: lower envelope of parabolas (Felzenszwalb-Huttenlocher)
    std::vector<double> out(static_cast<size_t>(h) * w, INF);
    std::vector<double> f(w), d(w), z(w + 1);
    std::vector<int> v(w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double gc = g[static_cast<size_t>(r) * w + c];
            f[c] = gc >= INF ? INF : gc * gc;
        }
        int k = 0;
        v[0] = 0;
        z[0] = -INF;
        z[1] = INF;
        for (int q = 1; q < w; ++q) {
            double s;
            for (;;) {
                int p = v[k];
                s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p);
                if (s <= z[k] && k > 0) {
                    --k;
                    continue;
                }
                break;
            }
            ++k;
            v[k] = q;
            z[k] = s;
            z[k + 1] = INF;
        }
        k = 0;
        for (int q = 0; q < w; ++q) {
            while (z[k + 1] < q) ++k;
            int p = v[k];
            double dq = static_cast<double>(q - p);
            out[static_cast<size_t>(r) * w + q] = dq * dq + f[p];
        }
    }
    return out;
}

double hausdorff_boundary_distance(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b,
                                   int h, int w) {
    std::vector<uint8_t> ba = mask_boundary(a, h, w);
    std::vector<uint8_t> bb = mask_boundary(b, h, w);
    std::vector<double> dta = squared_edt(ba, h, w);
    std::vector<double> dtb = squared_edt(bb, h, w);
    double worst = 0;
    for (size_t i = 0; i < ba.size(); ++i) {
        if (ba[i]) worst = std::max(worst, dtb[i]);
        if (bb[i]) worst = std::max(worst, dta[i]);
    }
    return std::sqrt(worst);
}

std::optional<double> mbhd(const LabelMaskVideo& pred, const LabelMaskVideo& gt,
                           Matching matching) {
    check_shapes(pred, gt, "mbhd");
    const double diag = std::sqrt(static_cast<double>(gt.h) * gt.h +
                                  static_cast<double>(gt.w) * gt.w);
    double sum = 0;
    int64_t count = 0;
    for (int ti = 0; ti < gt.t; ++ti) {
        auto gts = extract_instances(gt, ti, ti + 1);
        if (gts.empty()) continue;
        auto preds = extract_instances(pred, ti, ti + 1);
        std::vector<int> match;
        matched_ious(gts, preds, matching, &match);
        for (size_t g = 0; g < gts.size(); ++g) {
            if (match[g] < 0) {
                sum += diag; // unmatched or empty prediction: bounded penalty
            } else {
                sum += hausdorff_boundary_distance(gts[g].second, preds[match[g]].second, gt.h,
                                                   gt.w);
            }
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return sum / static_cast<double>(count);
}

std::vector<Box> masks_to_boxes(const int32_t* labels, int h, int w, bool has_background,
                                int32_t background_label) {
    std::map<int32_t, Box> boxes;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            int32_t id = labels[static_cast<size_t>(r) * w + c];
            if (has_background && id == background_label) continue;
            auto it = boxes.find(id);
            if (it == boxes.end()) {
                boxes.emplace(id, Box{id, r, c, r, c});
            } else {
                Box& b = it->second;
                b.min_row = std::min(b.min_row, r);
                b.min_col = std::min(b.min_col, c);
                b.max_row = std::max(b.max_row, r);
                b.max_col = std::max(b.max_col, c);
            }
        }
    }
    std::vector<Box> out;
    out.reserve(boxes.size());
    for (const auto& [id, b] : boxes) out.push_back(b);
    return out;
}

double box_iou(const Box& a, const Box& b) {
    int ih = std::min(a.max_row, b.max_row) - std::max(a.min_row, b.min_row) + 1;
    int iw = std::min(a.max_col, b.max_col) - std::max(a.min_col, b.min_col) + 1;
    if (ih <= 0 || iw <= 0) return 0.0;
    double inter = static_cast<double>(ih) * iw;
    double area_a = static_cast<double>(a.max_row - a.min_row + 1) * (a.max_col - a.min_col + 1);
    double area_b = static_cast<double>(b.max_row - b.min_row + 1) * (b.max_col - b.min_col + 1);
    return inter / (area_a + area_b - inter);
}

std::optional<double> corloc(const LabelMaskVideo& pred, const LabelMaskVideo& gt) {
    check_shapes(pred, gt, "corloc");
    int64_t hits = 0, total = 0;
    for (int ti = 0; ti < gt.t; ++ti) {
        const int32_t* gl = gt.labels.data() + static_cast<size_t>(ti) * gt.h * gt.w;
        const int32_t* pl = pred.labels.data() + static_cast<size_t>(ti) * pred.h * pred.w;
        auto gt_boxes = masks_to_boxes(gl, gt.h, gt.w, gt.has_background, gt.background_label);
        if (gt_boxes.empty()) continue;
        auto pred_boxes =
            masks_to_boxes(pl, pred.h, pred.w, pred.has_background, pred.background_label);
        for (const Box& g : gt_boxes) {
            ++total;
            for (const Box& p : pred_boxes) {
                if (box_iou(g, p) > 0.5) { // strictly greater per the threshold definition
                    ++hits;
                    break;
                }
            }
        }
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(total);
}

ClipMetrics evaluate_clip_metrics(const LabelMaskVideo& pred, const LabelMaskVideo& gt,
                                  const MetricsConfig& cfg) {
    ClipMetrics out;
    bool degenerate = false;
    out.fg_ari = fg_ari(pred, gt, &degenerate, cfg.fg_ari_per_frame);
    out.fg_ari_degenerate = degenerate;
    out.mbo_v = mbo(pred, gt, MboLevel::video, cfg.matching);
    out.mbo_f = mbo(pred, gt, MboLevel::frame, cfg.matching);
    out.mbhd = mbhd(pred, gt, cfg.matching);
    out.corloc = corloc(pred, gt);
    return out;
}

} // namespace slotbert
