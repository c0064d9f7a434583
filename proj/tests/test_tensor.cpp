#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "ssmrl/nn.hpp"
#include "ssmrl/tensor.hpp"

using namespace ssmrl;
using testutil::check_gradients;

TEST_CASE("softmax of a constant row is uniform") {
    auto x = TensorD::zeros({3});
    auto y = softmax_last(x);
    for (int i = 0; i < 3; ++i) REQUIRE(y.data()[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("rms norm of an all-equal vector with unit gain is near one") {
    auto x = TensorD::full({4}, 3.0);
    auto g = TensorD::ones({4});
    auto y = rms_norm(x, g);
    for (int i = 0; i < 4; ++i) REQUIRE(y.data()[i] == Catch::Approx(1.0).margin(1e-5));
}

TEST_CASE("matmul with identity returns the operand") {
    Rng rng(7);
    auto a = TensorD::randn({3, 3}, rng);
    std::vector<double> id(9, 0.0);
    id[0] = id[4] = id[8] = 1.0;
    auto eye = TensorD::from_data({3, 3}, id);
    auto y = matmul(eye, a);
    REQUIRE(testutil::max_abs_diff(y, a) == 0.0);
}

TEST_CASE("backward of sum gives ones") {
    auto x = TensorD::from_data({3}, {0.5, -2.0, 7.0});
    x.set_requires_grad();
    backward(sum(x));
    for (int i = 0; i < 3; ++i) REQUIRE(x.grad()[i] == 1.0);
}

TEST_CASE("backward of sum of squares") {
    auto x = TensorD::from_data({2}, {1.0, 2.0});
    x.set_requires_grad();
    backward(sum(mul(x, x)));
    REQUIRE(x.grad()[0] == Catch::Approx(2.0));
    REQUIRE(x.grad()[1] == Catch::Approx(4.0));
}

TEST_CASE("a tensor used on two paths accumulates both gradients") {
    auto x = TensorD::from_data({2}, {1.5, -0.5});
    x.set_requires_grad();
    backward(sum(add(mul(x, x), scale(x, 3.0))));
    REQUIRE(x.grad()[0] == Catch::Approx(2.0 * 1.5 + 3.0));
    REQUIRE(x.grad()[1] == Catch::Approx(2.0 * -0.5 + 3.0));
}

TEST_CASE("repeated backward without reset accumulates") {
    auto x = TensorD::from_data({2}, {1.0, 2.0});
    x.set_requires_grad();
    auto loss = sum(mul(x, x));
    auto tape = GradTape<double>::build(loss);
    tape.backward();
    tape.backward();
    REQUIRE(x.grad()[0] == Catch::Approx(4.0));
    REQUIRE(x.grad()[1] == Catch::Approx(8.0));
}

TEST_CASE("backward rejects non-scalar loss") {
    auto x = TensorD::ones({3});
    x.set_requires_grad();
    REQUIRE_THROWS_AS(backward(scale(x, 2.0)), std::invalid_argument);
}

TEST_CASE("shape mismatches name the op and shapes") {
    auto a = TensorD::ones({2, 3});
    auto b = TensorD::ones({4, 5});
    try {
        (void)matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        REQUIRE(msg.find("matmul") != std::string::npos);
        REQUIRE(msg.find("(2,3)") != std::string::npos);
        REQUIRE(msg.find("(4,5)") != std::string::npos);
    }
    REQUIRE_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("tape visits each node exactly once, parents first") {
    auto x = TensorD::from_data({2}, {1.0, 2.0});
    x.set_requires_grad();
    auto a = mul(x, x);
    auto b = add(a, x);   // diamond: x feeds both a and b
    auto loss = sum(mul(b, a));
    auto tape = GradTape<double>::build(loss);
    std::unordered_set<const void*> seen;
    for (auto& n : tape.nodes()) {
        REQUIRE(!seen.count(n.get()));
        seen.insert(n.get());
        for (auto& p : n->parents)
            if (p && p->requires_grad) REQUIRE(seen.count(p.get()));
    }
}

TEST_CASE("max reduction routes gradient to the first maximal element") {
    auto x = TensorD::from_data({4}, {2.0, 5.0, 5.0, 1.0});
    x.set_requires_grad();
    backward(max_all(x));
    REQUIRE(x.grad()[0] == 0.0);
    REQUIRE(x.grad()[1] == 1.0);
    REQUIRE(x.grad()[2] == 0.0);
    REQUIRE(x.grad()[3] == 0.0);
}

TEST_CASE("decay matrix matches the worked three-step example") {
    // decays 1/2 applied at steps 1 and 2
    auto loga = TensorD::from_data({3}, {0.0, std::log(0.5), std::log(0.5)});
    auto L = decay_matrix(loga);
    std::vector<double> want = {1, 0, 0, 0.5, 1, 0, 0.25, 0.5, 1};
    for (int i = 0; i < 9; ++i) REQUIRE(L.data()[i] == Catch::Approx(want[size_t(i)]).epsilon(1e-12));
}

TEST_CASE("one hot builds valid rows and rejects bad indices") {
    IntArray ids({3}, {0, 2, 1});
    auto z = one_hot<double>(ids, 3);
    REQUIRE(z.shape() == Shape{3, 3});
    for (int r = 0; r < 3; ++r) {
        double s = 0;
        for (int c = 0; c < 3; ++c) s += z.data()[r * 3 + c];
        REQUIRE(s == 1.0);
    }
    REQUIRE(z.data()[0 * 3 + 0] == 1.0);
    REQUIRE(z.data()[1 * 3 + 2] == 1.0);
    REQUIRE_THROWS(one_hot<double>(IntArray({1}, {5}), 3));
}

TEST_CASE("dropout is identity when off and preserves scale on average") {
    Rng rng(3);
    auto x = TensorD::ones({2000});
    auto same = dropout(x, 0.3, rng, false);
    REQUIRE(same.node().get() == x.node().get());
    auto y = dropout(x, 0.3, rng, true);
    REQUIRE(mean(y).item() == Catch::Approx(1.0).margin(0.06));
}

TEST_CASE("memory counters track tensor lifetimes") {
    int64_t before = MemStats::current_bytes();
    {
        auto t = TensorD::zeros({1000});
        REQUIRE(MemStats::current_bytes() >= before + 8000);
    }
    REQUIRE(MemStats::current_bytes() == before);
}

TEST_CASE("determinism: same seed and op sequence give identical bits") {
    auto run = [] {
        Rng rng(123);
        auto x = TensorD::randn({4, 4}, rng);
        auto w = TensorD::randn({4, 4}, rng);
        w.set_requires_grad();
        auto loss = sum(mul(silu(matmul(x, w)), silu(matmul(x, w))));
        backward(loss);
        std::vector<double> out(w.grad().begin(), w.grad().end());
        out.push_back(loss.item());
        return out;
    };
    auto a = run(), b = run();
    REQUIRE(a == b);
}

// ---------------------------------------------------------------------------
// finite-difference oracle over the whole op set
// ---------------------------------------------------------------------------

namespace {

void require_fd(const std::function<TensorD()>& loss, std::vector<TensorD> params,
                double tol = 1e-4) {
    auto res = check_gradients(loss, std::move(params));
    INFO("max relative error " << res.max_rel_err << " over " << res.checked << " entries");
    REQUIRE(res.max_rel_err <= tol);
}

}  // namespace

TEST_CASE("gradients match finite differences per op") {
    Rng rng(42);

    SECTION("elementwise binary and unary chain") {
        auto a = TensorD::randn({3, 4}, rng);
        auto b = TensorD::uniform({3, 4}, rng, 0.3, 1.7);
        a.set_requires_grad();
        b.set_requires_grad();
        require_fd([&] { return sum(mul(add(a, b), sub(a, b))); }, {a, b});
        require_fd([&] { return sum(mul(vexp(scale(a, 0.5)), vlog(b))); }, {a, b});
        require_fd([&] { return sum(add_scalar(sigmoid(a), 0.1)); }, {a});
        require_fd([&] { return sum(silu(a)); }, {a});
        require_fd([&] { return sum(vtanh(a)); }, {a});
        require_fd([&] { return sum(clamp_min(a, 0.2)); }, {a});
    }

    SECTION("matmul in all transpose combinations") {
        auto A = TensorD::randn({3, 4}, rng);
        auto B = TensorD::randn({4, 5}, rng);
        auto Bt = TensorD::randn({5, 4}, rng);
        auto At = TensorD::randn({4, 3}, rng);
        for (auto* t : {&A, &B, &Bt, &At}) t->set_requires_grad();
        require_fd([&] { return sum(mul(matmul(A, B), matmul(A, B))); }, {A, B});
        require_fd([&] { return sum(matmul(A, Bt, false, true)); }, {A, Bt});
        require_fd([&] { return sum(matmul(At, B, true, false)); }, {At, B});
        require_fd([&] { return sum(matmul(At, Bt, true, true)); }, {At, Bt});
    }

    SECTION("batched and broadcast matmul") {
        auto A = TensorD::randn({2, 3, 4}, rng);
        auto B = TensorD::randn({2, 4, 2}, rng);
        auto W = TensorD::randn({4, 2}, rng);
        for (auto* t : {&A, &B, &W}) t->set_requires_grad();
        require_fd([&] { return sum(mul(matmul(A, B), matmul(A, B))); }, {A, B});
        require_fd([&] { return sum(mul(matmul(A, W), matmul(A, W))); }, {A, W});
    }

    SECTION("structural ops") {
        auto x = TensorD::randn({2, 6}, rng);
        x.set_requires_grad();
        require_fd([&] { return sum(mul(reshape(x, {3, 4}), reshape(x, {3, 4}))); }, {x});
        require_fd([&] { return sum(mul(slice(x, 1, 2, 5), slice(x, 1, 2, 5))); }, {x});
        auto y = TensorD::randn({2, 3}, rng);
        y.set_requires_grad();
        require_fd(
            [&] {
                auto c = concat<double>({slice(x, 1, 0, 3), y}, 1);
                return sum(mul(c, c));
            },
            {x, y});
        auto v = TensorD::randn({3}, rng);
        v.set_requires_grad();
        require_fd([&] { return sum(mul(broadcast_leading(v, {4}), broadcast_leading(v, {4}))); },
                   {v});
        require_fd([&] { return sum(mul(expand_trailing(v, {2}), expand_trailing(v, {2}))); }, {v});
    }

    SECTION("reductions") {
        auto x = TensorD::randn({3, 4}, rng);
        x.set_requires_grad();
        require_fd([&] { return mul(sum(x), mean(x)); }, {x});
        require_fd([&] { return sum(mul(sum_axis(x, 0), sum_axis(x, 0))); }, {x});
        require_fd([&] { return sum(mul(sum_axis(x, 1), sum_axis(x, 1))); }, {x});
        require_fd([&] { return max_all(mul(x, x)); }, {x});
    }

    SECTION("softmax family") {
        auto x = TensorD::randn({4, 5}, rng);
        x.set_requires_grad();
        auto t = softmax_last(TensorD::randn({4, 5}, rng));
        require_fd([&] { return sum(mul(softmax_last(x), softmax_last(x))); }, {x});
        require_fd([&] { return sum(vexp(log_softmax_last(x))); }, {x});
        require_fd([&] { return sum(cross_entropy_last(x, t)); }, {x});
        auto tt = TensorD::uniform({4, 5}, rng, 0.1, 1.0);
        tt.set_requires_grad();
        require_fd([&] { return sum(cross_entropy_last(detach(x), tt)); }, {tt});
    }

    SECTION("rms norm") {
        auto x = TensorD::randn({3, 6}, rng);
        auto g = TensorD::uniform({6}, rng, 0.5, 1.5);
        x.set_requires_grad();
        g.set_requires_grad();
        require_fd([&] { return sum(mul(rms_norm(x, g), rms_norm(x, g))); }, {x, g});
    }

    SECTION("embedding") {
        auto table = TensorD::randn({7, 3}, rng);
        table.set_requires_grad();
        IntArray ids({4}, {1, 5, 1, 0});
        require_fd([&] { return sum(mul(embedding(table, ids), embedding(table, ids))); }, {table});
    }

    SECTION("cumulative ops and decay matrix") {
        auto x = TensorD::uniform({2, 5}, rng, 0.2, 1.5);
        x.set_requires_grad();
        require_fd([&] { return sum(mul(cumprod(x, 1), cumprod(x, 1))); }, {x});
        require_fd([&] { return sum(mul(cumsum(x, 1), cumsum(x, 1))); }, {x});
        auto loga = TensorD::uniform({2, 5}, rng, -1.5, 0.0);
        loga.set_requires_grad();
        require_fd([&] { return sum(mul(decay_matrix(loga), decay_matrix(loga))); }, {loga});
        auto w = TensorD::randn({2, 5, 3}, rng);
        require_fd([&] { return sum(matmul(decay_matrix(loga), w)); }, {loga});
    }

    SECTION("composed network") {
        auto x = TensorD::randn({4, 6}, rng);
        auto w1 = TensorD::randn({6, 8}, rng, 0.4);
        auto w2 = TensorD::randn({8, 3}, rng, 0.4);
        auto gn = TensorD::ones({8});
        for (auto* t : {&w1, &w2, &gn}) t->set_requires_grad();
        auto t = softmax_last(TensorD::randn({4, 3}, rng));
        require_fd(
            [&] {
                auto h = silu(rms_norm(matmul(x, w1), gn));
                return mean(cross_entropy_last(matmul(h, w2), t));
            },
            {w1, w2, gn});
    }
}

TEST_CASE("detach blocks gradient flow") {
    auto x = TensorD::from_data({2}, {1.0, 2.0});
    x.set_requires_grad();
    backward(sum(mul(detach(x), x)));
    REQUIRE(x.grad()[0] == Catch::Approx(1.0));  // only the live path
    REQUIRE(x.grad()[1] == Catch::Approx(2.0));
}

TEST_CASE("adamw with zero learning rate leaves parameters bit-identical") {
    Rng rng(5);
    auto w = TensorD::randn({4, 4}, rng);
    w.set_requires_grad();
    std::vector<double> before(w.data(), w.data() + w.size());
    AdamW<double> opt({w}, 0.0, 1e-4, 100.0);
    backward(sum(mul(w, w)));
    opt.step();
    for (int64_t i = 0; i < w.size(); ++i) REQUIRE(w.data()[i] == before[size_t(i)]);
}

TEST_CASE("gradient clipping caps the applied global norm") {
    auto w = TensorD::zeros({100});
    w.set_requires_grad();
    AdamW<double> opt({w}, 1e-3, 0.0, 100.0);
    // inject a gradient of norm 1000
    backward(scale(sum(w), 1.0));
    for (int64_t i = 0; i < w.size(); ++i) w.node()->grad_data()[i] = 100.0;  // norm = 1000
    double norm = opt.step();
    REQUIRE(norm == Catch::Approx(1000.0));
}

TEST_CASE("no-grad mode builds no graph") {
    auto x = TensorD::ones({3});
    x.set_requires_grad();
    NoGrad ng;
    auto y = mul(x, x);
    REQUIRE(!y.requires_grad());
    REQUIRE(y.node()->parents.empty());
}
