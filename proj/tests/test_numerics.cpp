#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "toc/optim.hpp"

using namespace toc;

TEST_CASE("finite differences agree with every kernel's backward pass") {
    double worst = toc::testing::kernel_battery_max_err(5);
    CHECK(worst <= 1e-3);
}

TEST_CASE("backward accumulates through a shared subexpression") {
    Tensor x = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f}, true);
    Tensor y = add(mul(x, x), x);  // x^2 + x, x used twice
    backward(sum_all(y));
    for (int i = 0; i < 3; ++i)
        CHECK(x.grad()[(size_t)i] == doctest::Approx(2.0f * x.data()[(size_t)i] + 1.0f));
}

TEST_CASE("NoGrad suppresses taping") {
    Tensor x = Tensor::from_data({2}, {1.0f, 2.0f}, true);
    Tensor y;
    {
        NoGrad ng;
        y = mul(x, x);
    }
    CHECK(y.impl()->parents.empty());
}

TEST_CASE("adam drives a quadratic to its minimum") {
    ParamStore ps;
    Tensor x = ps.add("x", Tensor::from_data({2}, {5.0f, -3.0f}));
    Tensor target = Tensor::from_data({2}, {1.0f, 2.0f});
    AdamState st;
    st.lr = 0.1f;
    for (int i = 0; i < 400; ++i) {
        ps.zero_grad();
        backward(mse(x, target));
        adam_step(ps, st);
    }
    CHECK(std::fabs(x.data()[0] - 1.0f) < 1e-3);
    CHECK(std::fabs(x.data()[1] - 2.0f) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients and names the parameter") {
    ParamStore ps;
    Tensor x = ps.add("weights.w0", Tensor::from_data({1}, {1.0f}));
    x.grad()[0] = std::numeric_limits<float>::quiet_NaN();
    AdamState st;
    try {
        adam_step(ps, st);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("weights.w0") != std::string::npos);
    }
}

TEST_CASE("rng streams: determinism, split independence, moments") {
    Rng a(42), b(42);
    for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

    // split does not consume parent state
    Rng p(7);
    uint64_t before = Rng(7).next_u64();
    (void)p.split("anything");
    CHECK(p.next_u64() == before);

    // distinct tags give distinct streams
    CHECK(Rng(7).split("a").next_u64() != Rng(7).split("b").next_u64());

    Rng n(3);
    double sum = 0.0, sq = 0.0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) {
        double v = n.normal();
        sum += v;
        sq += v * v;
    }
    CHECK(std::fabs(sum / N) < 0.03);
    CHECK(std::fabs(sq / N - 1.0) < 0.05);
}

TEST_CASE("stack_batch and batch_slice round-trip item values") {
    Rng rng(5);
    std::vector<Tensor> items = {Tensor::randn({2, 3, 3}, rng), Tensor::randn({2, 3, 3}, rng),
                                 Tensor::randn({2, 3, 3}, rng)};
    Tensor batch = stack_batch(items, {2, 0});
    CHECK(batch.shape() == std::vector<int>{2, 2, 3, 3});
    Tensor first = batch_slice(batch, 0);
    for (int64_t i = 0; i < first.numel(); ++i)
        CHECK(first.data()[(size_t)i] == items[2].data()[(size_t)i]);
}
