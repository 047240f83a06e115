#include <doctest.h>

#include <cmath>
#include <random>

#include "literec/optim.hpp"
#include "literec/tensor.hpp"
#include "support/gradcheck.hpp"

using literec::AttnMask;
using literec::Shape;
using DTensor = literec::TensorT<double>;
using DTape = literec::TapeT<double>;

namespace {

DTensor param(DTape&, Shape shape, std::vector<double> data) {
    auto t = DTensor::from(std::move(shape), std::move(data), true);
    return t;
}

}  // namespace

TEST_CASE("matmul identity and projector cases") {
    DTape tape;
    auto i2 = DTensor::from({2, 2}, {1, 0, 0, 1});
    auto a = DTensor::from({2, 2}, {1, 2, 3, 4});
    auto out = tape.matmul(i2, a);
    CHECK(out.vec() == std::vector<double>{1, 2, 3, 4});

    auto proj = DTensor::from({2, 2}, {1, 0, 0, 0});
    auto b = DTensor::from({2, 2}, {5, 6, 7, 8});
    auto out2 = tape.matmul(proj, b);
    CHECK(out2.vec() == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul rejects mismatched inner dims with both shapes in the message") {
    DTape tape;
    auto a = DTensor::zeros({2, 3});
    auto b = DTensor::zeros({4, 2});
    try {
        tape.matmul(a, b);
        FAIL("expected dimension error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[4x2]") != std::string::npos);
    }
}

TEST_CASE("matmul gradient of sum(output) equals ones*b^T / a^T*ones") {
    std::mt19937 rng(7);
    DTape tape;
    auto a = param(tape, {3, 4}, gradcheck::random_vec(12, rng));
    auto b = param(tape, {4, 2}, gradcheck::random_vec(8, rng));
    auto c = tape.matmul(a, b);
    auto loss = tape.sum(c);
    tape.backward(loss);

    // closed form: dA = ones(3x2) * B^T
    for (int i = 0; i < 3; ++i)
        for (int p = 0; p < 4; ++p) {
            double expect = 0;
            for (int j = 0; j < 2; ++j) expect += b.vec()[static_cast<size_t>(p * 2 + j)];
            CHECK(a.grad_c()[static_cast<size_t>(i * 4 + p)] == doctest::Approx(expect).epsilon(1e-12));
        }

    // and against the finite-difference oracle
    std::vector<DTensor> params = {a, b};
    std::vector<std::vector<double>> analytic = {a.grad_c(), b.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t2;
        return t2.sum(t2.matmul(a, b)).item();
    });
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("softmax rows: symmetry, overflow safety, analytic case") {
    DTape tape;
    auto x = DTensor::from({1, 2}, {0, 0});
    CHECK(tape.softmax_rows(x).vec()[0] == doctest::Approx(0.5));

    auto big = DTensor::from({1, 2}, {1000, 1000});
    auto out = tape.softmax_rows(big);
    CHECK(out.vec()[0] == doctest::Approx(0.5));
    CHECK(out.all_finite());

    auto ln3 = DTensor::from({1, 2}, {0.0, std::log(3.0)});
    auto out3 = tape.softmax_rows(ln3);
    CHECK(out3.vec()[0] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(out3.vec()[1] == doctest::Approx(0.75).epsilon(1e-9));
}

TEST_CASE("softmax rows sum to one and lie in (0,1) on random input") {
    std::mt19937 rng(11);
    DTape tape;
    auto x = DTensor::from({8, 16}, gradcheck::random_vec(128, rng, 3.0));
    auto y = tape.softmax_rows(x);
    for (int r = 0; r < 8; ++r) {
        double s = 0;
        for (int j = 0; j < 16; ++j) {
            const double v = y.vec()[static_cast<size_t>(r * 16 + j)];
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("softmax gradient matches finite differences") {
    std::mt19937 rng(13);
    DTape tape;
    auto x = param(tape, {3, 5}, gradcheck::random_vec(15, rng));
    auto w = DTensor::from({3, 5}, gradcheck::random_vec(15, rng));  // fixed weights -> non-trivial grad
    auto loss = tape.sum(tape.mul(tape.softmax_rows(x), w));
    tape.backward(loss);
    std::vector<DTensor> params = {x};
    std::vector<std::vector<double>> analytic = {x.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t2;
        return t2.sum(t2.mul(t2.softmax_rows(x), w)).item();
    });
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("layer norm: constant row maps to beta, analytic two-point row") {
    DTape tape;
    auto gamma = DTensor::from({3}, {1, 1, 1});
    auto beta = DTensor::from({3}, {0, 0, 0});
    auto x = DTensor::from({1, 3}, {5, 5, 5});
    auto y = tape.layer_norm(x, gamma, beta);
    for (double v : y.vec()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

    auto g2 = DTensor::from({2}, {1, 1});
    auto b2 = DTensor::from({2}, {0, 0});
    auto x2 = DTensor::from({1, 2}, {1, 3});
    auto y2 = tape.layer_norm(x2, g2, b2, 1e-12);
    CHECK(y2.vec()[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y2.vec()[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer norm rows have mean 0 and variance 1 before affine") {
    std::mt19937 rng(17);
    DTape tape;
    auto gamma = DTensor::from({8}, std::vector<double>(8, 1.0));
    auto beta = DTensor::from({8}, std::vector<double>(8, 0.0));
    auto x = DTensor::from({4, 8}, gradcheck::random_vec(32, rng, 2.0));
    auto y = tape.layer_norm(x, gamma, beta, 1e-10);
    for (int r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (int j = 0; j < 8; ++j) mean += y.vec()[static_cast<size_t>(r * 8 + j)];
        mean /= 8;
        for (int j = 0; j < 8; ++j) {
            const double c = y.vec()[static_cast<size_t>(r * 8 + j)] - mean;
            var += c * c;
        }
        var /= 8;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-5));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("layer norm gradient check on random 2x8 input") {
    std::mt19937 rng(19);
    DTape tape;
    auto x = param(tape, {2, 8}, gradcheck::random_vec(16, rng));
    auto gamma = param(tape, {8}, gradcheck::random_vec(8, rng, 0.5));
    auto beta = param(tape, {8}, gradcheck::random_vec(8, rng, 0.5));
    auto w = DTensor::from({2, 8}, gradcheck::random_vec(16, rng));
    auto loss = tape.sum(tape.mul(tape.layer_norm(x, gamma, beta), w));
    tape.backward(loss);
    std::vector<DTensor> params = {x, gamma, beta};
    std::vector<std::vector<double>> analytic = {x.grad_c(), gamma.grad_c(), beta.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t2;
        return t2.sum(t2.mul(t2.layer_norm(x, gamma, beta), w)).item();
    });
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("mean pool masked: analytic, single-row, idempotent on identical rows") {
    DTape tape;
    auto x = DTensor::from({2, 2}, {1, 3, 3, 5});
    auto y = tape.mean_pool_masked(x, {1, 1});
    CHECK(y.vec() == std::vector<double>{2, 4});

    auto x2 = DTensor::from({2, 2}, {1, 3, 9, 9});
    auto y2 = tape.mean_pool_masked(x2, {1, 0});
    CHECK(y2.vec() == std::vector<double>{1, 3});

    auto same = DTensor::from({3, 2}, {4, 7, 4, 7, 4, 7});
    auto y3 = tape.mean_pool_masked(same, {1, 0, 1});
    CHECK(y3.vec()[0] == doctest::Approx(4.0));
    CHECK(y3.vec()[1] == doctest::Approx(7.0));

    CHECK_THROWS_AS(tape.mean_pool_masked(x, {0, 0}), std::invalid_argument);
}

TEST_CASE("masked mean gradient check") {
    std::mt19937 rng(23);
    DTape tape;
    auto x = param(tape, {2, 3, 4}, gradcheck::random_vec(24, rng));
    std::vector<uint8_t> mask = {1, 0, 1, 1, 1, 0};
    auto w = DTensor::from({2, 4}, gradcheck::random_vec(8, rng));
    auto loss = tape.sum(tape.mul(tape.masked_mean_rows(x, mask), w));
    tape.backward(loss);
    std::vector<DTensor> params = {x};
    std::vector<std::vector<double>> analytic = {x.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t2;
        return t2.sum(t2.mul(t2.masked_mean_rows(x, mask), w)).item();
    });
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("cross entropy: uniform logits, saturation, target validation") {
    DTape tape;
    auto uniform = DTensor::from({1, 4}, {0.3, 0.3, 0.3, 0.3});
    CHECK(tape.cross_entropy_logits(uniform, {2}).item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));

    auto sat = DTensor::from({1, 2}, {20, -20});
    CHECK(tape.cross_entropy_logits(sat, {0}).item() == doctest::Approx(0.0).epsilon(1e-8));

    CHECK_THROWS_AS(tape.cross_entropy_logits(uniform, {4}), std::out_of_range);
    CHECK_THROWS_AS(tape.cross_entropy_logits(uniform, {-2}), std::out_of_range);
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
    std::mt19937 rng(29);
    DTape tape;
    auto logits = param(tape, {1, 6}, gradcheck::random_vec(6, rng));
    auto loss = tape.cross_entropy_logits(logits, {3});
    tape.backward(loss);

    DTape t2;
    auto probs = t2.softmax_rows(logits);
    for (int j = 0; j < 6; ++j) {
        const double expect = probs.vec()[static_cast<size_t>(j)] - (j == 3 ? 1.0 : 0.0);
        CHECK(logits.grad_c()[static_cast<size_t>(j)] == doctest::Approx(expect).epsilon(1e-9));
    }

    std::vector<DTensor> params = {logits};
    std::vector<std::vector<double>> analytic = {logits.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t3;
        return t3.cross_entropy_logits(logits, {3}).item();
    });
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("dropout: eval identity, rate 0 identity, survivor mean") {
    DTape tape;
    std::mt19937 rng(31);
    auto x = DTensor::from({10, 10}, gradcheck::random_vec(100, rng));
    auto eval_out = tape.dropout(x, 0.7, 42, false);
    CHECK(eval_out.vec() == x.vec());

    auto rate0 = tape.dropout(x, 0.0, 42, true);
    CHECK(rate0.vec() == x.vec());

    const int64_t n = 100000;
    auto ones = DTensor::from({n}, std::vector<double>(static_cast<size_t>(n), 1.0));
    auto dropped = tape.dropout(ones, 0.5, 1234, true);
    double mean = 0;
    for (double v : dropped.vec()) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::fabs(mean - 1.0) < 0.02);

    // deterministic under a fixed seed
    auto again = tape.dropout(ones, 0.5, 1234, true);
    CHECK(again.vec() == dropped.vec());
}

TEST_CASE("backward: sum and elementwise square analytic gradients") {
    DTape tape;
    auto p = DTensor::from({4}, {1, -2, 3, 0.5}, true);
    auto loss = tape.sum(p);
    tape.backward(loss);
    for (double g : p.grad_c()) CHECK(g == doctest::Approx(1.0));

    DTape tape2;
    auto q = DTensor::from({4}, {1, -2, 3, 0.5}, true);
    auto loss2 = tape2.sum(tape2.mul(q, q));
    tape2.backward(loss2);
    for (int i = 0; i < 4; ++i)
        CHECK(q.grad_c()[static_cast<size_t>(i)] == doctest::Approx(2.0 * q.vec()[static_cast<size_t>(i)]));
}

TEST_CASE("backward: gradients accumulate additively across fan-out") {
    DTape tape;
    auto p = DTensor::from({3}, {1, 2, 3}, true);
    auto a = tape.scale(p, 2.0);
    auto b = tape.scale(p, 3.0);
    auto loss = tape.sum(tape.add(a, b));
    tape.backward(loss);
    for (double g : p.grad_c()) CHECK(g == doctest::Approx(5.0));
}

TEST_CASE("backward rejects non-scalar loss and foreign tensors") {
    DTape tape;
    auto p = DTensor::from({2}, {1, 2}, true);
    auto y = tape.scale(p, 2.0);
    CHECK_THROWS_AS(tape.backward(y), std::logic_error);
    CHECK_THROWS_AS(tape.backward(DTensor::scalar(1.0)), std::logic_error);
}

TEST_CASE("tape nodes are topologically ordered") {
    DTape tape;
    std::mt19937 rng(37);
    auto a = param(tape, {4, 4}, gradcheck::random_vec(16, rng));
    auto b = param(tape, {4, 4}, gradcheck::random_vec(16, rng));
    auto c = tape.matmul(a, b);
    auto d = tape.add(c, a);
    auto e = tape.sum(tape.mul(d, c));
    (void)e;
    for (size_t i = 0; i < tape.node_count(); ++i)
        for (int in : tape.node_inputs(i)) CHECK(in < static_cast<int>(i));
}

TEST_CASE("masked softmax assigns zero weight to masked keys and rows sum to one") {
    std::mt19937 rng(41);
    DTape tape;
    auto scores = DTensor::from({2, 3, 4}, gradcheck::random_vec(24, rng));
    std::vector<uint8_t> key_mask = {1, 1, 0, 1, 1, 0, 0, 0};  // [B=2, Tk=4]
    auto mask = AttnMask::from_key_mask(key_mask, 2, 3, 4);
    auto probs = tape.masked_softmax(scores, mask);
    for (int b = 0; b < 2; ++b)
        for (int q = 0; q < 3; ++q) {
            double s = 0;
            for (int k = 0; k < 4; ++k) {
                const double v = probs.vec()[static_cast<size_t>((b * 3 + q) * 4 + k)];
                if (!key_mask[static_cast<size_t>(b * 4 + k)]) CHECK(v == 0.0);
                s += v;
            }
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
}

TEST_CASE("masked softmax gradient check") {
    std::mt19937 rng(43);
    DTape tape;
    auto scores = param(tape, {2, 2, 3}, gradcheck::random_vec(12, rng));
    std::vector<uint8_t> key_mask = {1, 0, 1, 1, 1, 1};
    auto mask = AttnMask::from_key_mask(key_mask, 2, 2, 3);
    auto w = DTensor::from({2, 2, 3}, gradcheck::random_vec(12, rng));
    auto loss = tape.sum(tape.mul(tape.masked_softmax(scores, mask), w));
    tape.backward(loss);
    std::vector<DTensor> params = {scores};
    std::vector<std::vector<double>> analytic = {scores.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t2;
        return t2.sum(t2.mul(t2.masked_softmax(scores, mask), w)).item();
    });
    CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gelu, linear, bmm, gather and heads round-trip pass finite differences") {
    std::mt19937 rng(47);
    DTape tape;
    auto x = param(tape, {2, 3, 6}, gradcheck::random_vec(36, rng, 0.7));
    auto w = param(tape, {6, 6}, gradcheck::random_vec(36, rng, 0.4));
    auto bias = param(tape, {6}, gradcheck::random_vec(6, rng, 0.2));
    auto table = param(tape, {5, 6}, gradcheck::random_vec(30, rng, 0.5));
    std::vector<int64_t> ids = {0, 3, 3, 1};

    auto forward = [&](DTape& t) {
        auto h = t.linear(x, w, &bias);
        auto q = t.split_heads(h, 2);
        auto att = t.bmm_nt(q, q);
        auto probs = t.softmax_rows(att);
        auto ctx = t.bmm(probs, q);
        auto merged = t.merge_heads(ctx, 2);
        auto act = t.gelu(merged);
        auto rows = t.gather_rows(table, ids);
        auto pooled = t.masked_mean_rows(act, {1, 1, 0, 1, 1, 1});
        return t.add(t.sum(pooled), t.sum(rows));
    };
    auto loss = forward(tape);
    tape.backward(loss);
    std::vector<DTensor> params = {x, w, bias, table};
    std::vector<std::vector<double>> analytic = {x.grad_c(), w.grad_c(), bias.grad_c(), table.grad_c()};
    auto rep = gradcheck::compare_fd(params, analytic, [&]() {
        DTape t2;
        return forward(t2).item();
    });
    CHECK(rep.max_rel_err <= 1e-3);
}

TEST_CASE("tape determinism: identical seeds give bit-identical outputs and gradients") {
    auto run = [](unsigned seed) {
        std::mt19937 rng(seed);
        DTape tape;
        auto x = DTensor::from({4, 8}, gradcheck::random_vec(32, rng), true);
        auto w = DTensor::from({8, 8}, gradcheck::random_vec(64, rng), true);
        auto h = tape.dropout(tape.gelu(tape.linear(x, w)), 0.3, 99, true);
        auto loss = tape.sum(h);
        tape.backward(loss);
        return std::make_pair(h.vec(), w.grad_c());
    };
    auto [v1, g1] = run(5);
    auto [v2, g2] = run(5);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("adamw: decay-only shrink is exact") {
    literec::AdamWConfig cfg;
    cfg.lr = 0.001;
    cfg.weight_decay = 0.1;
    cfg.warmup_fraction = 0.0;
    literec::AdamWT<double> opt(cfg);
    std::vector<literec::NamedParamT<double>> params = {{"p", DTensor::from({3}, {1.0, -2.0, 0.5}, true)}};
    params[0].tensor.ensure_grad();  // zero gradient
    opt.step(params, 10, 100);
    CHECK(params[0].tensor.vec()[0] == doctest::Approx(1.0 * 0.9999).epsilon(1e-12));
    CHECK(params[0].tensor.vec()[1] == doctest::Approx(-2.0 * 0.9999).epsilon(1e-12));
    CHECK(params[0].tensor.vec()[2] == doctest::Approx(0.5 * 0.9999).epsilon(1e-12));
}

TEST_CASE("adamw: warmup ramps linearly from lr/warmup_steps") {
    literec::AdamWConfig cfg;
    cfg.lr = 0.1;
    cfg.warmup_fraction = 0.1;
    literec::AdamWT<double> opt(cfg);
    // 100 total steps -> 10 warmup steps
    CHECK(opt.effective_lr(0, 100) == doctest::Approx(0.01));
    CHECK(opt.effective_lr(4, 100) == doctest::Approx(0.05));
    CHECK(opt.effective_lr(9, 100) == doctest::Approx(0.1));
    CHECK(opt.effective_lr(50, 100) == doctest::Approx(0.1));
}

TEST_CASE("adamw: constant gradient drives updates toward -lr*sign(g)") {
    literec::AdamWConfig cfg;
    cfg.lr = 0.01;
    cfg.weight_decay = 0.0;
    cfg.warmup_fraction = 0.0;
    literec::AdamWT<double> opt(cfg);
    std::vector<literec::NamedParamT<double>> params = {{"p", DTensor::from({2}, {0.0, 0.0}, true)}};
    auto& p = params[0].tensor;
    double prev0 = 0, prev1 = 0;
    for (int step = 0; step < 400; ++step) {
        p.zero_grad();
        p.grad()[0] += 0.37;   // constant positive gradient
        p.grad()[1] += -1.21;  // constant negative gradient
        prev0 = p.vec()[0];
        prev1 = p.vec()[1];
        opt.step(params, step, 400);
    }
    CHECK(p.vec()[0] - prev0 == doctest::Approx(-0.01).epsilon(1e-3));
    CHECK(p.vec()[1] - prev1 == doctest::Approx(0.01).epsilon(1e-3));
}

TEST_CASE("adamw rejects missing gradients") {
    literec::AdamWT<double> opt;
    std::vector<literec::NamedParamT<double>> params = {{"p", DTensor::from({2}, {1.0, 2.0}, true)}};
    CHECK_THROWS_AS(opt.step(params, 0, 10), std::logic_error);
}
