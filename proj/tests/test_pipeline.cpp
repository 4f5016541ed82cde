#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "toc/checkpoint.hpp"
#include "toc/config.hpp"
#include "toc/dataset.hpp"
#include "toc/image.hpp"

using namespace toc;

namespace {

std::string tmp_path(const char* name) { return std::string("/tmp/toc_test_") + name; }

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), (std::streamsize)bytes.size());
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly") {
    Rng rng(31);
    std::vector<std::pair<std::string, Tensor>> tensors = {
        {"a.w", Tensor::randn({3, 4}, rng)},
        {"a.b", Tensor::randn({4}, rng)},
        {"deep.nested.k", Tensor::randn({2, 2, 3, 3}, rng)},
    };
    auto path = tmp_path("ckpt.tocf");
    save_checkpoint(path, tensors);
    auto back = load_checkpoint(path);
    REQUIRE(back.size() == tensors.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].first == tensors[i].first);
        CHECK(back[i].second.shape() == tensors[i].second.shape());
        CHECK(back[i].second.data() == tensors[i].second.data());
    }

    // writing the same tensors again produces identical bytes
    auto path2 = tmp_path("ckpt2.tocf");
    save_checkpoint(path2, tensors);
    CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("checkpoint loader rejects corruption") {
    Rng rng(32);
    auto path = tmp_path("bad.tocf");
    save_checkpoint(path, {{"x", Tensor::randn({4}, rng)}});

    auto bytes = slurp(path);
    auto corrupt = bytes;
    corrupt[0] = 'X';  // magic
    spit(path, corrupt);
    CHECK_THROWS_AS(load_checkpoint(path), Error);

    corrupt = bytes;
    corrupt[4] = 9;  // version
    spit(path, corrupt);
    CHECK_THROWS_AS(load_checkpoint(path), Error);

    // overlapping/non-contiguous offsets in the manifest
    save_checkpoint(path, {{"x", Tensor::randn({2}, rng)}, {"y", Tensor::randn({2}, rng)}});
    bytes = slurp(path);
    for (size_t i = 0; i + 2 < bytes.size(); ++i)
        if (bytes[i] == '@' && bytes[i + 1] == '8' && bytes[i + 2] == '\n') bytes[i + 1] = '4';
    spit(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path), Error);
}

TEST_CASE("load_into demands exact name and shape agreement") {
    Rng rng(33);
    ParamStore ps;
    ps.add("w", Tensor::randn({3, 3}, rng));
    auto path = tmp_path("into.tocf");
    save_checkpoint(path, {{"w", Tensor::randn({3, 3}, rng)}});
    CHECK_NOTHROW(load_into(path, ps));

    save_checkpoint(path, {{"wrong", Tensor::randn({3, 3}, rng)}});
    CHECK_THROWS_AS(load_into(path, ps), Error);
    save_checkpoint(path, {{"w", Tensor::randn({3, 4}, rng)}});
    CHECK_THROWS_AS(load_into(path, ps), Error);
}

TEST_CASE("file hash is stable and content-sensitive") {
    auto p1 = tmp_path("h1"), p2 = tmp_path("h2");
    spit(p1, {'a', 'b', 'c'});
    spit(p2, {'a', 'b', 'd'});
    CHECK(file_hash(p1).size() == 16);
    CHECK(file_hash(p1) == file_hash(p1));
    CHECK(file_hash(p1) != file_hash(p2));
}

TEST_CASE("config: defaults, file load, overrides, unknown keys") {
    RunConfig c;
    CHECK(c.geti("data.n") == 512);
    CHECK(c.geti("teacher.T") == 200);
    CHECK(c.gets("run.dir") == "runs/default");
    CHECK(c.touched().empty());

    auto path = tmp_path("cfg.ini");
    {
        std::ofstream f(path);
        f << "# comment\n[data]\nn = 64\n; other comment\n[vae]\nsteps=9\n";
    }
    c.load_file(path);
    CHECK(c.geti("data.n") == 64);
    CHECK(c.geti("vae.steps") == 9);
    c.set("search.iterations", "21");
    CHECK(c.geti("search.iterations") == 21);
    CHECK(c.touched() == std::set<std::string>{"data.n", "vae.steps", "search.iterations"});

    CHECK_THROWS_AS(c.set("no.such_key", "1"), Error);
    {
        std::ofstream f(path);
        f << "orphan = 1\n";
    }
    CHECK_THROWS_AS(c.load_file(path), Error);

    // resolved() text reloads to the same values
    {
        std::ofstream f(tmp_path("cfg2.ini"));
        f << c.resolved();
    }
    RunConfig d;
    d.load_file(tmp_path("cfg2.ini"));
    CHECK(d.geti("data.n") == 64);
    CHECK(d.geti("search.iterations") == 21);
}

TEST_CASE("toy dataset: determinism, range, split") {
    auto a = gen_data(16, 5, 32);
    auto b = gen_data(16, 5, 32);
    REQUIRE(a.size() == 16);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].shape() == std::vector<int>{3, 32, 32});
        CHECK(a[i].data() == b[i].data());
        for (float v : a[i].data()) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
    }
    CHECK(gen_data(4, 6, 32)[0].data() != a[0].data());

    auto sp = split_dataset(512);
    CHECK(sp.train.size() == 384);
    CHECK(sp.calib.size() == 128);
    std::set<int> all(sp.train.begin(), sp.train.end());
    all.insert(sp.calib.begin(), sp.calib.end());
    CHECK(all.size() == 512);
}

TEST_CASE("ppm round trip within quantization error") {
    auto imgs = gen_data(1, 8, 16);
    auto path = tmp_path("img.ppm");
    write_ppm(path, imgs[0]);
    Tensor back = read_ppm(path);
    CHECK(back.shape() == std::vector<int>{3, 16, 16});
    for (int64_t i = 0; i < back.numel(); ++i)
        CHECK(std::fabs(back.data()[(size_t)i] - imgs[0].data()[(size_t)i]) <= 0.5f / 255.0f + 1e-6f);
    CHECK_THROWS_AS(read_ppm(tmp_path("missing.ppm")), Error);
}
