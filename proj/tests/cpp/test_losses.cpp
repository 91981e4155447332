#include "slotbert/losses.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace slotbert;
using ag::Mat;
using ag::Var;

namespace {

Mat random_mat(long r, long c, Rng& rng, double scale = 1.0) {
    Mat m(r, c);
    for (long i = 0; i < r; ++i)
        for (long j = 0; j < c; ++j) m(i, j) = rng.gaussian() * scale;
    return m;
}

SlotSequence seq_of(const std::vector<Mat>& frames) {
    SlotSequence s;
    s.stage = SlotStage::fused;
    for (const Mat& m : frames) s.frames.push_back(ag::constant(m));
    return s;
}

} // namespace

TEST_CASE("cosine matrix: identical unit vectors and orthogonal vectors") {
    Mat two(2, 3);
    two << 1, 0, 0, 1, 0, 0; // identical unit vectors
    Var c = cosine_similarity_matrix(ag::constant(two));
    CHECK(c->val(0, 0) == 0.0);
    CHECK(c->val(1, 1) == 0.0);
    CHECK(c->val(0, 1) == doctest::Approx(1.0));
    CHECK(c->val(1, 0) == doctest::Approx(1.0));

    Mat ortho(3, 3);
    ortho << 2, 0, 0, 0, 5, 0, 0, 0, 1;
    Var c2 = cosine_similarity_matrix(ag::constant(ortho));
    CHECK(c2->val.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cosine matrix matches a brute-force double loop") {
    Rng rng(3);
    Mat s = random_mat(3, 5, rng);
    Var c = cosine_similarity_matrix(ag::constant(s));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double expect = s.row(i).dot(s.row(j)) / (s.row(i).norm() * s.row(j).norm());
            if (i == j) expect -= 1.0;
            if (i == j) {
                CHECK(c->val(i, j) == 0.0); // diagonal forced exactly
            } else {
                CHECK(c->val(i, j) == doctest::Approx(expect).epsilon(1e-7));
            }
        }
    }
}

TEST_CASE("cosine matrix rejects near-zero-norm slots naming the index") {
    Mat s(2, 3);
    s << 1, 2, 3, 0, 0, 0;
    CHECK_THROWS_WITH_AS(cosine_similarity_matrix(ag::constant(s)), doctest::Contains("slot 1"),
                         std::runtime_error);
}

TEST_CASE("contrastive loss: orthonormal slots give exactly ln K") {
    for (int k : {2, 3, 5}) {
        Mat eye = Mat::Identity(k, k);
        for (double tau : {0.5, 1.0, 2.0}) {
            for (int t : {1, 3}) {
                SlotSequence s = seq_of(std::vector<Mat>(t, eye));
                Var loss = slot_contrastive_loss(s, tau);
                CHECK(std::abs(loss->val(0, 0) - std::log(static_cast<double>(k))) < 1e-6);
            }
        }
    }
}

TEST_CASE("contrastive loss: K=2 identical slots at tau=1 hits the closed form") {
    Mat s(2, 4);
    s << 1, 2, 3, 4, 1, 2, 3, 4;
    SlotSequence seq = seq_of({s});
    Var loss = slot_contrastive_loss(seq, 1.0);
    double expect = (1.0 + 2.0 * std::log(1.0 + std::exp(-1.0))) / 2.0; // ~0.81326
    CHECK(std::abs(loss->val(0, 0) - expect) < 1e-6);
    CHECK(loss->val(0, 0) == doctest::Approx(0.81326).epsilon(1e-4));
}

TEST_CASE("contrastive loss is invariant to positive rescaling of a slot") {
    Rng rng(7);
    Mat s = random_mat(3, 6, rng);
    SlotSequence a = seq_of({s});
    Mat scaled = s;
    scaled.row(1) *= 17.5;
    SlotSequence b = seq_of({scaled});
    CHECK(slot_contrastive_loss(a, 0.5)->val(0, 0) ==
          doctest::Approx(slot_contrastive_loss(b, 0.5)->val(0, 0)).epsilon(1e-10));
}

TEST_CASE("push-apart direction: orthonormal beats identical at tau=1, K=2") {
    Mat eye = Mat::Identity(2, 2);
    Mat same(2, 2);
    same << 1, 0, 1, 0;
    double ortho = slot_contrastive_loss(seq_of({eye}), 1.0)->val(0, 0);
    double ident = slot_contrastive_loss(seq_of({same}), 1.0)->val(0, 0);
    CHECK(ortho == doctest::Approx(std::log(2.0)).epsilon(1e-9)); // 0.6931
    CHECK(ident == doctest::Approx(0.81326).epsilon(1e-4));
    CHECK(ortho < ident);
}

TEST_CASE("reconstruction loss: zero, unit shift, symmetry") {
    Rng rng(9);
    std::vector<Mat> target = {random_mat(4, 3, rng), random_mat(4, 3, rng)};
    std::vector<Var> same = {ag::constant(target[0]), ag::constant(target[1])};
    CHECK(reconstruction_loss(same, target)->val(0, 0) == 0.0);

    std::vector<Var> shifted = {ag::constant((target[0].array() + 1.0).matrix()),
                                ag::constant((target[1].array() + 1.0).matrix())};
    CHECK(reconstruction_loss(shifted, target)->val(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    // symmetry
    Mat a = random_mat(3, 3, rng), b = random_mat(3, 3, rng);
    double ab = reconstruction_loss({ag::constant(a)}, {b})->val(0, 0);
    double ba = reconstruction_loss({ag::constant(b)}, {a})->val(0, 0);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-15));

    std::vector<Var> bad = {ag::constant(Mat::Zero(3, 3))};
    CHECK_THROWS_AS(reconstruction_loss(bad, target), std::invalid_argument);
}

TEST_CASE("total loss arithmetic") {
    Var recon = ag::constant_scalar(1.0);
    Var contrast = ag::constant_scalar(2.0);
    CHECK(total_loss(recon, contrast, {0.01, 0.5})->val(0, 0) == doctest::Approx(1.02));
    CHECK(total_loss(recon, contrast, {0.0, 0.5})->val(0, 0) == doctest::Approx(1.0));

    Var inf = ag::constant_scalar(std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(total_loss(inf, contrast, {0.01, 0.5}), std::runtime_error);
}

TEST_CASE("total loss gradient is grad(recon) + alpha * grad(contrast)") {
    Rng rng(11);
    Mat sv = random_mat(3, 5, rng);
    Mat tv = random_mat(3, 5, rng);

    auto grads_with_alpha = [&](double alpha) {
        Var s = ag::param(sv);
        SlotSequence seq;
        seq.stage = SlotStage::fused;
        seq.frames.push_back(s);
        Var recon = reconstruction_loss({s}, {tv});
        Var contrast = slot_contrastive_loss(seq, 0.5);
        ag::backward(total_loss(recon, contrast, {alpha, 0.5}));
        return s->grad;
    };
    Mat g_recon_only = grads_with_alpha(0.0);
    Mat g_combined = grads_with_alpha(0.01);

    Var s = ag::param(sv);
    SlotSequence seq;
    seq.stage = SlotStage::fused;
    seq.frames.push_back(s);
    ag::backward(slot_contrastive_loss(seq, 0.5));
    Mat g_contrast_only = s->grad;

    CHECK((g_combined - (g_recon_only + 0.01 * g_contrast_only)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("contrastive loss gradient vs finite differences (K=3, d=5)") {
    Rng rng(13);
    Var s = ag::param(random_mat(3, 5, rng));
    auto build = [&]() {
        SlotSequence seq;
        seq.stage = SlotStage::fused;
        seq.frames.push_back(s);
        return slot_contrastive_loss(seq, 0.5);
    };
    auto res = gradcheck::check([&]() { return build()->val(0, 0); }, {s},
                                [&]() { ag::backward(build()); });
    CHECK(res.max_rel_error < 1e-3);
}

TEST_CASE("reconstruction gradient is exactly 2(x_recon - x)/(T*N*D)") {
    Rng rng(15);
    Mat target0 = random_mat(4, 3, rng), target1 = random_mat(4, 3, rng);
    Var a = ag::param(random_mat(4, 3, rng));
    Var b = ag::param(random_mat(4, 3, rng));
    ag::backward(reconstruction_loss({a, b}, {target0, target1}));
    double denom = 2.0 * 4 * 3;
    Mat expect_a = 2.0 * (a->val - target0) / denom;
    Mat expect_b = 2.0 * (b->val - target1) / denom;
    CHECK((a->grad - expect_a).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((b->grad - expect_b).cwiseAbs().maxCoeff() < 1e-15);
}
