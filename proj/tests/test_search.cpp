#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "doctest.h"
#include "toc/search.hpp"

using namespace toc;

namespace {

// Deterministic synthetic objective on a reduced 2^7 space: f_param falls
// with each variant step, f_acc rises, with mild cross-stage interaction.
std::pair<int64_t, double> synth_eval(const ArchVector& a) {
    static const int64_t w[7] = {900, 700, 1100, 1600, 1000, 800, 600};
    int64_t fp = 20000;
    double fa = 0.0;
    for (int i = 0; i < 7; ++i) {
        fp -= w[i] * a.a[(size_t)i];
        fa += 0.0011 * (i + 1) * a.a[(size_t)i];
    }
    fa += 0.0007 * a.a[0] * a.a[3] + 0.0005 * a.a[2] * a.a[4];
    return {fp, fa};
}

struct Oracle {
    int64_t best_fp;
    ArchVector best;
};

Oracle exhaustive_best(double eps) {
    Oracle o{std::numeric_limits<int64_t>::max(), {}};
    double best_fa = 0.0;
    for (int mask = 0; mask < 128; ++mask) {
        ArchVector a;
        for (int i = 0; i < 7; ++i) a.a.push_back((mask >> i) & 1);
        auto [fp, fa] = synth_eval(a);
        if (fa <= eps && (fp < o.best_fp || (fp == o.best_fp && fa < best_fa))) {
            o.best_fp = fp;
            o.best = a;
            best_fa = fa;
        }
    }
    return o;
}

}  // namespace

TEST_CASE("gp interpolates noiseless training points") {
    std::vector<std::vector<double>> X = {{0.1, 0.2}, {0.8, 0.3}, {0.4, 0.9}, {0.6, 0.6}};
    std::vector<double> y = {3.0, -1.5, 0.7, 2.2};
    auto gp = GpModel::fit(X, y);
    for (size_t i = 0; i < X.size(); ++i) {
        auto [mu, var] = gp.predict(X[i]);
        CHECK(std::fabs(mu - y[i]) <= 1e-6);
        CHECK(var >= 0.0);
        CHECK(var < 1e-4);
    }
}

TEST_CASE("gp recovers a smooth 1-d function from 8 samples") {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    for (int i = 0; i < 8; ++i) {
        double x = (i + 0.5) / 8.0;
        X.push_back({x});
        y.push_back(std::sin(6.283185307179586 * x));
    }
    auto gp = GpModel::fit(X, y);
    double se = 0.0;
    int n = 0;
    for (double x = 0.05; x <= 0.95; x += 0.018, ++n) {
        auto [mu, var] = gp.predict({x});
        double diff = mu - std::sin(6.283185307179586 * x);
        se += diff * diff;
    }
    CHECK(std::sqrt(se / n) < 0.1);
}

TEST_CASE("gp handles constant targets without blowing up") {
    std::vector<std::vector<double>> X = {{0.1}, {0.5}, {0.9}};
    std::vector<double> y = {2.0, 2.0, 2.0};
    auto gp = GpModel::fit(X, y);
    auto [mu, var] = gp.predict({0.3});
    CHECK(mu == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(var >= 0.0);
}

TEST_CASE("candidate scoring: all-base is exactly zero, swaps are not") {
    UNetConfig cfg;
    cfg.latent_channels = 4;
    cfg.width = 8;
    cfg.emb_dim = 8;
    cfg.seed = 41;
    auto teacher = UNet::build(cfg);
    NoiseSchedule sched(200);
    Rng rng(42);
    std::vector<Tensor> lat;
    for (int i = 0; i < 6; ++i) lat.push_back(Tensor::randn({4, 8, 8}, rng, 0.8f));
    auto tuples = make_acc_tuples(*teacher, sched, lat, 8, 43);

    std::map<std::pair<int, int>, std::shared_ptr<Block>> store;
    auto specs = UNet::stage_specs(cfg.width);
    for (const auto& s : specs)
        store[{s.index, 1}] =
            std::make_shared<Block>(s.library[1], s.c_in, s.c_out, cfg.emb_dim, Rng(77));

    auto base = UNet::assemble(teacher, store, ArchVector{{0, 0, 0, 0, 0, 0, 0}});
    CHECK(f_acc(*base, tuples) == 0.0);

    auto swapped = UNet::assemble(teacher, store, ArchVector{{0, 0, 1, 0, 0, 0, 0}});
    CHECK(f_acc(*swapped, tuples) > 0.0);
}

TEST_CASE("bo matches the exhaustive oracle on a reduced space") {
    std::vector<int> dims(7, 2);
    EvalFn eval = synth_eval;
    int hits = 0;
    const int kSeeds = 4;
    for (double eps : {0.004, 0.009}) {
        Oracle o = exhaustive_best(eps);
        REQUIRE(o.best_fp != std::numeric_limits<int64_t>::max());
        for (int s = 0; s < kSeeds; ++s) {
            SearchConfig cfg;
            cfg.iterations = 40;
            cfg.init_design = 10;
            cfg.pool = 128;
            auto res = run_bo(eps, cfg, dims, eval, 500 + (uint64_t)s);
            REQUIRE(res.any_feasible);
            if (res.best.f_param == o.best_fp) ++hits;
        }
    }
    CHECK(hits >= 2 * kSeeds - 1);  // at most one miss across both levels
}

TEST_CASE("extreme constraint levels pin the endpoints") {
    std::vector<int> dims(7, 2);
    EvalFn eval = synth_eval;
    SearchConfig cfg;
    cfg.iterations = 40;
    cfg.init_design = 10;
    cfg.pool = 128;

    // loose constraint: everything is feasible, minimum is the all-max vector
    auto loose = run_bo(1e9, cfg, dims, eval, 7);
    CHECK(loose.best.a == ArchVector{{1, 1, 1, 1, 1, 1, 1}});

    // tight constraint: only the all-base vector has f_acc <= 0
    auto tight = run_bo(0.0, cfg, dims, eval, 8);
    REQUIRE(tight.any_feasible);
    CHECK(tight.best.a == ArchVector{{0, 0, 0, 0, 0, 0, 0}});
}

TEST_CASE("bo history bookkeeping and determinism") {
    std::vector<int> dims(7, 2);
    EvalFn eval = synth_eval;
    SearchConfig cfg;
    cfg.iterations = 18;
    cfg.init_design = 8;
    cfg.pool = 64;
    auto a = run_bo(0.01, cfg, dims, eval, 99);
    auto b = run_bo(0.01, cfg, dims, eval, 99);
    CHECK(a.history.size() == 18);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].a == b.history[i].a);
    // no duplicate evaluations
    std::set<ArchVector> seen;
    for (const auto& r : a.history) CHECK(seen.insert(r.a).second);
}

TEST_CASE("budget selection: nearest parameter count, ties to accuracy") {
    auto rec = [](int64_t fp, double fa) {
        EvalRecord r;
        r.a = {{0}};
        r.f_param = fp;
        r.f_acc = fa;
        r.feasible = true;
        return r;
    };
    std::vector<EvalRecord> recs = {rec(173, 0.004), rec(161, 0.003), rec(146, 0.002),
                                    rec(130, 0.001)};
    CHECK(select_by_budget(recs, 130).f_param == 130);
    CHECK(select_by_budget(recs, 150).f_param == 146);

    // equal distance to the budget: prefer the smaller constraint value
    std::vector<EvalRecord> tie = {rec(140, 0.009), rec(160, 0.002)};
    CHECK(select_by_budget(tie, 150).f_param == 160);

    // zero budget degenerates to the smallest parameter count
    CHECK(select_by_budget(recs, 0).f_param == 130);
}

TEST_CASE("sweep writes well-formed history and trade-off tables") {
    std::vector<int> dims(7, 2);
    EvalFn eval = synth_eval;
    SearchConfig cfg;
    cfg.iterations = 14;
    cfg.init_design = 8;
    cfg.pool = 64;
    cfg.seed = 5;
    auto sweep = sweep_grid(cfg, dims, eval);
    REQUIRE(sweep.eps_grid.size() == 4);
    CHECK(sweep.scale > 0.0);
    for (size_t i = 1; i < sweep.eps_grid.size(); ++i)
        CHECK(sweep.eps_grid[i] > sweep.eps_grid[i - 1]);

    // larger eps never needs more parameters (feasible sets are nested)
    int64_t prev = std::numeric_limits<int64_t>::max();
    for (const auto& run : sweep.runs) {
        REQUIRE(run.any_feasible);
        CHECK(run.best.f_param <= prev);
        prev = run.best.f_param;
    }

    write_search_history("/tmp/toc_hist.csv", sweep);
    write_tradeoff("/tmp/toc_trade.csv", sweep);
    std::ifstream h("/tmp/toc_hist.csv"), t("/tmp/toc_trade.csv");
    std::string line;
    std::getline(h, line);
    CHECK(line == "run_eps,iter,arch_vector,f_param,f_acc,feasible,best_so_far");
    int rows = 0;
    while (std::getline(h, line)) ++rows;
    CHECK(rows == 4 * 14);
    std::getline(t, line);
    CHECK(line == "eps,arch_vector,f_param,f_acc,feasible");
    rows = 0;
    while (std::getline(t, line)) ++rows;
    CHECK(rows == 4);
}
