#include "slotbert/tst.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

using namespace slotbert;
using ag::Mat;
using ag::Var;

namespace {

TstConfig tiny_tst(int d = 8, int layers = 1, int heads = 2, int max_t = 8) {
    TstConfig cfg;
    cfg.d_slot = d;
    cfg.n_layers = layers;
    cfg.n_heads = heads;
    cfg.ffn_multiplier = 2;
    cfg.max_t = max_t;
    return cfg;
}

SlotSequence random_sequence(int t, int k, int d, uint64_t seed, SlotStage stage) {
    SlotSequence s;
    s.stage = stage;
    Rng rng(seed);
    for (int ti = 0; ti < t; ++ti) {
        Mat m(k, d);
        for (long i = 0; i < m.rows(); ++i)
            for (long j = 0; j < m.cols(); ++j) m(i, j) = rng.gaussian();
        s.frames.push_back(ag::constant(m));
    }
    return s;
}

} // namespace

TEST_CASE("add_temporal_pos: zero table is identity; broadcast across slots") {
    nn::ParamStore ps(1);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst());
    SlotSequence s = random_sequence(3, 2, 8, 4, SlotStage::initial);

    ps.find("tst.pos_table")->val.setZero();
    SlotSequence pos0 = tst.add_temporal_pos(s);
    for (int ti = 0; ti < 3; ++ti)
        CHECK((pos0.frames[ti]->val - s.frames[ti]->val).cwiseAbs().maxCoeff() == 0.0);
    CHECK(pos0.stage == SlotStage::positioned);

    // restore a random table: both slots at time t receive the same offset
    Rng rng(9);
    for (long i = 0; i < 8; ++i)
        for (long j = 0; j < 8; ++j) ps.find("tst.pos_table")->val(i, j) = rng.gaussian();
    SlotSequence pos = tst.add_temporal_pos(s);
    for (int ti = 0; ti < 3; ++ti) {
        Mat offset0 = pos.frames[ti]->val.row(0) - s.frames[ti]->val.row(0);
        Mat offset1 = pos.frames[ti]->val.row(1) - s.frames[ti]->val.row(1);
        CHECK((offset0 - offset1).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("add_temporal_pos: T beyond max_T is an explicit error") {
    nn::ParamStore ps(2);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst(8, 1, 2, 4));
    SlotSequence s = random_sequence(5, 2, 8, 4, SlotStage::initial);
    CHECK_THROWS_WITH_AS(tst.add_temporal_pos(s), doctest::Contains("max_T"),
                         std::invalid_argument);
}

TEST_CASE("sample_frame_mask: ratio arithmetic and clamping") {
    Rng rng(5);
    TemporalMask none = sample_frame_mask(6, 0.0, rng);
    CHECK(none.masked_count() == 0);

    TemporalMask half = sample_frame_mask(4, 0.5, rng);
    CHECK(half.masked_count() == 2);

    TemporalMask clamped = sample_frame_mask(2, 0.9, rng); // round(1.8)=2 -> clamp to T-1
    CHECK(clamped.masked_count() == 1);

    CHECK_THROWS_AS(sample_frame_mask(4, 1.0, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_frame_mask(4, -0.1, rng), std::invalid_argument);

    Rng a(42), b(42);
    TemporalMask m1 = sample_frame_mask(10, 0.3, a);
    TemporalMask m2 = sample_frame_mask(10, 0.3, b);
    CHECK(m1.kept == m2.kept);
}

TEST_CASE("apply_mask: masked frames exactly zero, kept frames bit-identical") {
    nn::ParamStore ps(3);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst());
    SlotSequence s = random_sequence(4, 3, 8, 6, SlotStage::initial);
    SlotSequence pos = tst.add_temporal_pos(s);

    TemporalMask all_kept;
    all_kept.kept.assign(4, true);
    SlotSequence same = tst.apply_mask(pos, all_kept);
    for (int ti = 0; ti < 4; ++ti)
        CHECK(same.frames[ti].get() == pos.frames[ti].get()); // pass-through, not a copy

    TemporalMask m;
    m.kept = {true, true, false, true};
    SlotSequence masked = tst.apply_mask(pos, m);
    CHECK(masked.frames[2]->val.cwiseAbs().maxCoeff() == 0.0);
    for (int ti : {0, 1, 3})
        CHECK((masked.frames[ti]->val - pos.frames[ti]->val).cwiseAbs().maxCoeff() == 0.0);
    CHECK(masked.stage == SlotStage::masked);
}

TEST_CASE("tst_forward preserves shape and slot-permutation equivariance") {
    nn::ParamStore ps(4);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst(8, 2, 2));
    const int t = 4, k = 3;
    SlotSequence s = random_sequence(t, k, 8, 8, SlotStage::initial);
    TemporalMask m;
    m.kept.assign(t, true);
    m.kept[1] = false;

    SlotSequence fused = tst.forward(tst.apply_mask(tst.add_temporal_pos(s), m), m);
    CHECK(fused.t() == t);
    CHECK(fused.k() == k);
    CHECK(fused.d() == 8);
    CHECK(fused.stage == SlotStage::fused);

    // permute slots consistently across all t
    std::vector<int> perm = {2, 0, 1};
    SlotSequence sp;
    sp.stage = SlotStage::initial;
    for (int ti = 0; ti < t; ++ti) {
        Mat mp(k, 8);
        for (int i = 0; i < k; ++i) mp.row(i) = s.frames[ti]->val.row(perm[i]);
        sp.frames.push_back(ag::constant(mp));
    }
    SlotSequence fused_p = tst.forward(tst.apply_mask(tst.add_temporal_pos(sp), m), m);
    for (int ti = 0; ti < t; ++ti)
        for (int i = 0; i < k; ++i)
            CHECK((fused_p.frames[ti]->val.row(i) - fused.frames[ti]->val.row(perm[i]))
                      .cwiseAbs()
                      .maxCoeff() < 1e-5);
}

TEST_CASE("tst rejects d_slot not divisible by n_heads") {
    nn::ParamStore ps(5);
    CHECK_THROWS_WITH_AS(TemporalSlotTransformer(ps, "tst", tiny_tst(9, 1, 2)),
                         doctest::Contains("divisible"), std::invalid_argument);
}

TEST_CASE("bidirectional flow: future frames influence a masked middle frame") {
    nn::ParamStore ps(6);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst(8, 2, 2));
    const int t = 5, k = 2;
    SlotSequence s = random_sequence(t, k, 8, 10, SlotStage::initial);
    TemporalMask m;
    m.kept.assign(t, true);
    m.kept[2] = false;

    SlotSequence fused = tst.forward(tst.apply_mask(tst.add_temporal_pos(s), m), m);

    // zero the future frames' inputs and compare the masked frame's output
    SlotSequence s_cut = s;
    s_cut.frames[3] = ag::constant(Mat::Zero(k, 8));
    s_cut.frames[4] = ag::constant(Mat::Zero(k, 8));
    SlotSequence fused_cut = tst.forward(tst.apply_mask(tst.add_temporal_pos(s_cut), m), m);

    double change = (fused.frames[2]->val - fused_cut.frames[2]->val).cwiseAbs().mean();
    CHECK(change > 0.0);
}

TEST_CASE("predict_next_slot: shape, determinism, max_T guard") {
    nn::ParamStore ps(7);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst(8, 1, 2, 4));
    SlotSequence hist = random_sequence(3, 2, 8, 12, SlotStage::initial);

    Var next = tst.predict_next_slot(hist);
    CHECK(next->rows() == 2);
    CHECK(next->cols() == 8);
    Var next2 = tst.predict_next_slot(hist);
    CHECK((next->val - next2->val).cwiseAbs().maxCoeff() == 0.0);

    SlotSequence too_long = random_sequence(4, 2, 8, 12, SlotStage::initial);
    CHECK_THROWS_WITH_AS(tst.predict_next_slot(too_long), doctest::Contains("max_T"),
                         std::invalid_argument);
}

TEST_CASE("tst_forward gradients match finite differences (tiny config)") {
    nn::ParamStore ps(8);
    TemporalSlotTransformer tst(ps, "tst", tiny_tst(8, 1, 2, 4));
    const int t = 3, k = 2;
    Rng rng(21);
    std::vector<Var> frames;
    for (int ti = 0; ti < t; ++ti) {
        Mat m(k, 8);
        for (long i = 0; i < m.rows(); ++i)
            for (long j = 0; j < m.cols(); ++j) m(i, j) = rng.gaussian();
        frames.push_back(ag::param(m));
    }
    TemporalMask m;
    m.kept = {true, false, true};

    auto build = [&]() {
        SlotSequence s;
        s.stage = SlotStage::initial;
        s.frames = frames;
        SlotSequence fused = tst.forward(tst.apply_mask(tst.add_temporal_pos(s), m), m);
        Var acc;
        for (const Var& f : fused.frames) {
            Var term = ag::sum(ag::square(f));
            acc = acc ? ag::add(acc, term) : term;
        }
        return acc;
    };
    std::vector<Var> inputs = frames;
    inputs.push_back(ps.find("tst.pos_table"));
    auto res = gradcheck::check([&]() { return build()->val(0, 0); }, inputs,
                                [&]() { ag::backward(build()); });
    CHECK(res.max_rel_error < 1e-3);
}
