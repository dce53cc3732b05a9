#include <doctest.h>

#include <cmath>
#include <vector>

#include "nht/nn.hpp"

using namespace nht;

namespace {

// straightforward reference forward: explicit matrix multiply per layer
std::vector<double> reference_forward(const MlpParams& p, const std::vector<double>& x) {
    std::vector<double> cur = x;
    for (int l = 0; l < p.layer_count(); ++l) {
        int ni = p.dims[l], no = p.dims[l + 1];
        std::vector<double> next(no);
        for (int o = 0; o < no; ++o) {
            double acc = p.theta[p.bias_offset(l) + o];
            for (int i = 0; i < ni; ++i)
                acc += p.theta[p.weight_offset(l) + size_t(o) * ni + i] * cur[i];
            next[o] = (l + 1 < p.layer_count() && acc < 0.0) ? 0.0 : acc;
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

TEST_CASE("zero parameters produce zero output") {
    MlpParams p;
    p.dims = {4, 8, 3};
    p.theta.assign(MlpParams::param_count(p.dims), 0.0);
    MlpScratch s;
    std::vector<double> x{1.0, -2.0, 3.0, 0.5}, y(3);
    mlp_forward(p, x.data(), s, y.data());
    for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("identity-constructed single layer passes input through") {
    MlpParams p;
    p.dims = {3, 3};
    p.theta.assign(MlpParams::param_count(p.dims), 0.0);
    for (int i = 0; i < 3; ++i) p.theta[p.weight_offset(0) + i * 3 + i] = 1.0;
    MlpScratch s;
    std::vector<double> x{0.5, -1.5, 2.0}, y(3);
    mlp_forward(p, x.data(), s, y.data());
    for (int i = 0; i < 3; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("forward matches the reference implementation") {
    Rng rng(31);
    MlpParams p = make_mlp({5, 16, 16, 2}, rng);
    MlpScratch s;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(5), y(2);
        for (auto& v : x) v = rng.normal();
        mlp_forward(p, x.data(), s, y.data());
        auto ref = reference_forward(p, x);
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(y[i] - ref[i]) < 1e-12);
    }
    CHECK_THROWS_AS(mlp_forward_batch(p, std::vector<double>(7), 1), NhtError);
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    Rng rng(32);
    MlpParams p = make_mlp({3, 6, 2}, rng);
    MlpScratch s;
    std::vector<double> x{0.1, 0.2, -0.3}, y(2), dy{0.0, 0.0};
    std::vector<double> dtheta(p.theta.size(), 0.0), dx(3);
    mlp_forward(p, x.data(), s, y.data());
    mlp_backward(p, s, dy.data(), dtheta.data(), dx.data());
    for (double v : dtheta) CHECK(v == 0.0);
    for (double v : dx) CHECK(v == 0.0);
}

TEST_CASE("scalar net matches the symbolic derivative") {
    // y = w2 * relu(w1 * x + b1) + b2
    MlpParams p;
    p.dims = {1, 1, 1};
    p.theta = {1.7, 0.3, -2.1, 0.05};  // w1, b1, w2, b2
    MlpScratch s;
    double x = 0.8, y;
    mlp_forward(p, &x, s, &y);
    double pre = 1.7 * x + 0.3;
    CHECK(y == doctest::Approx(-2.1 * pre + 0.05).epsilon(1e-14));
    double dy = 1.0;
    std::vector<double> dtheta(4, 0.0);
    double dx;
    mlp_backward(p, s, &dy, dtheta.data(), &dx);
    CHECK(dtheta[0] == doctest::Approx(-2.1 * x).epsilon(1e-12));   // dw1
    CHECK(dtheta[1] == doctest::Approx(-2.1).epsilon(1e-12));       // db1
    CHECK(dtheta[2] == doctest::Approx(pre).epsilon(1e-12));        // dw2
    CHECK(dtheta[3] == doctest::Approx(1.0).epsilon(1e-12));        // db2
    CHECK(dx == doctest::Approx(1.7 * -2.1).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences") {
    Rng rng(33);
    MlpParams p = make_mlp({4, 7, 5, 2}, rng);
    std::vector<double> x(4);
    for (auto& v : x) v = rng.normal();
    std::vector<double> dy{0.37, -1.2};
    MlpScratch s;
    std::vector<double> y(2);
    mlp_forward(p, x.data(), s, y.data());
    std::vector<double> dtheta(p.theta.size(), 0.0), dx(4);
    mlp_backward(p, s, dy.data(), dtheta.data(), dx.data());
    auto objective = [&](const MlpParams& q, const std::vector<double>& in) {
        MlpScratch sc;
        std::vector<double> out(2);
        mlp_forward(q, in.data(), sc, out.data());
        return dy[0] * out[0] + dy[1] * out[1];
    };
    double h = 1e-6;
    for (size_t i = 0; i < p.theta.size(); i += 7) {
        MlpParams pp = p, pm = p;
        pp.theta[i] += h;
        pm.theta[i] -= h;
        double fd = (objective(pp, x) - objective(pm, x)) / (2 * h);
        CHECK(std::abs(dtheta[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    for (size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        double fd = (objective(p, xp) - objective(p, xm)) / (2 * h);
        CHECK(std::abs(dx[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    AdamState st;
    st.init(3);
    std::vector<double> params{1.0, -2.0, 0.5}, grads{0.0, 0.0, 0.0};
    auto before = params;
    adam_step(st, params, grads, 0.1);
    CHECK(params == before);
    CHECK(st.t == 1);
}

TEST_CASE("adam: hand-computed first step on a scalar") {
    AdamState st;
    st.init(1);
    std::vector<double> params{2.0}, grads{1.0};
    adam_step(st, params, grads, 0.1);
    // mhat = vhat = 1 after bias correction; step = lr / (1 + eps)
    CHECK(params[0] == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam: first step direction is invariant to gradient scale") {
    for (double scale : {10.0, 1000.0}) {
        AdamState s1, s2;
        s1.init(4);
        s2.init(4);
        std::vector<double> p1{1, 2, 3, 4}, p2{1, 2, 3, 4};
        std::vector<double> g1{0.5, -0.01, 3.0, -7.0}, g2 = g1;
        for (auto& g : g2) g *= scale;
        adam_step(s1, p1, g1, 0.05);
        adam_step(s2, p2, g2, 0.05);
        for (int i = 0; i < 4; ++i)
            CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-5));
    }
}

TEST_CASE("adam descends a quadratic bowl monotonically after warmup") {
    AdamState st;
    st.init(2);
    std::vector<double> theta{1.5, -2.5};
    auto loss = [&] { return theta[0] * theta[0] + theta[1] * theta[1]; };
    std::vector<double> history{loss()};
    for (int t = 0; t < 100; ++t) {
        std::vector<double> g{2 * theta[0], 2 * theta[1]};
        adam_step(st, theta, g, 0.05);
        history.push_back(loss());
    }
    for (size_t t = 10; t < history.size() && history[t - 1] > 1e-3; ++t)
        CHECK(history[t] < history[t - 1]);
    CHECK(history.back() < 1e-3);
}

TEST_CASE("learning-rate schedules hit their anchor points") {
    CHECK(lr_at(LrSchedule::Exp2d, 0, 1.0, 25000) == doctest::Approx(1.0));
    CHECK(lr_at(LrSchedule::Exp2d, 20000, 1.0, 25000) == doctest::Approx(1.0));
    CHECK(lr_at(LrSchedule::Exp2d, 30000, 1.0, 25000) == doctest::Approx(0.33));
    CHECK(lr_at(LrSchedule::Exp2d, 25000, 1.0, 25000) ==
          doctest::Approx(std::pow(0.33, 0.5)).epsilon(1e-12));
    CHECK(lr_at(LrSchedule::Cosine, 0, 2.0, 1000) == doctest::Approx(2.0));
    CHECK(lr_at(LrSchedule::Cosine, 1000, 2.0, 1000) == doctest::Approx(0.2));
    CHECK(lr_at(LrSchedule::Exp3d, 0, 2.0, 1000) == doctest::Approx(2.0));
    CHECK(lr_at(LrSchedule::Exp3d, 1000, 2.0, 1000) == doctest::Approx(0.02));
    CHECK_THROWS_AS(lr_at(LrSchedule::Exp2d, -1, 1.0, 10), NhtError);
    CHECK_THROWS_AS(lr_schedule_from_name("bogus"), NhtError);
    CHECK(lr_schedule_from_name("exp2d") == LrSchedule::Exp2d);
}

TEST_CASE("ema: gamma 0 copies, constant input converges geometrically") {
    std::vector<double> shadow{0.0, 0.0}, theta{1.0, -3.0};
    ema_update(shadow, theta, 0.0);
    CHECK(shadow == theta);

    shadow = {0.0};
    std::vector<double> target{1.0};
    double gamma = 0.9;
    for (int t = 1; t <= 20; ++t) {
        ema_update(shadow, target, gamma);
        CHECK(std::abs(shadow[0] - 1.0) ==
              doctest::Approx(std::pow(gamma, t)).epsilon(1e-10));
    }
}

TEST_CASE("ema matches the scalar recurrence on random sequences") {
    Rng rng(34);
    std::vector<double> shadow{0.5};
    double oracle = 0.5;
    double gamma = 0.95;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> theta{rng.normal()};
        ema_update(shadow, theta, gamma);
        oracle = gamma * oracle + (1 - gamma) * theta[0];
        CHECK(shadow[0] == doctest::Approx(oracle).epsilon(1e-12));
    }
}
