#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <string>

#include "doctest.h"
#include "tocsr.h"

namespace {

struct Session {
    tocsr_session* s = nullptr;
    Session(const char* dir) {
        REQUIRE(tocsr_open(nullptr, &s) == TOCSR_OK);
        REQUIRE(tocsr_set(s, "run.dir", dir) == TOCSR_OK);
    }
    ~Session() { tocsr_close(s); }
};

}  // namespace

TEST_CASE("version string is present") {
    const char* v = tocsr_version();
    REQUIRE(v != nullptr);
    CHECK(std::strlen(v) > 0);
}

TEST_CASE("open rejects bad arguments") {
    CHECK(tocsr_open(nullptr, nullptr) == TOCSR_E_INVALID_ARG);
    tocsr_session* s = nullptr;
    CHECK(tocsr_open("/no/such/config.ini", &s) == TOCSR_E_IO);
    CHECK(s == nullptr);
    const char* msg = tocsr_last_error(nullptr);
    REQUIRE(msg != nullptr);
    CHECK(std::strlen(msg) > 0);
}

TEST_CASE("set validates keys and records errors on the session") {
    Session ses("/tmp/toc_capi_a");
    CHECK(tocsr_set(ses.s, "data.n", "32") == TOCSR_OK);
    CHECK(tocsr_set(ses.s, "bogus.key", "1") == TOCSR_E_INVALID_ARG);
    CHECK(std::string(tocsr_last_error(ses.s)).find("bogus.key") != std::string::npos);
    CHECK(tocsr_set(ses.s, nullptr, "1") == TOCSR_E_INVALID_ARG);
}

TEST_CASE("unknown commands and missing dependencies map to distinct codes") {
    Session ses("/tmp/toc_capi_b");
    CHECK(tocsr_run(ses.s, "no-such-command", nullptr) == TOCSR_E_INVALID_ARG);
    // capture needs a trained teacher; the run dir is empty
    CHECK(tocsr_run(ses.s, "capture", nullptr) == TOCSR_E_MISSING_DEPENDENCY);
    CHECK(tocsr_run(ses.s, nullptr, nullptr) == TOCSR_E_INVALID_ARG);
}

TEST_CASE("selftest and report run through the C surface") {
    Session ses("/tmp/toc_capi_c");
    CHECK(tocsr_run(ses.s, "selftest", nullptr) == TOCSR_OK);

    CHECK(tocsr_set(ses.s, "data.n", "16") == TOCSR_OK);
    CHECK(tocsr_run(ses.s, "gen-data", nullptr) == TOCSR_OK);

    char* text = nullptr;
    CHECK(tocsr_report(ses.s, &text) == TOCSR_OK);
    REQUIRE(text != nullptr);
    CHECK(std::strlen(text) > 0);
    tocsr_free_text(text);
}

TEST_CASE("infer fails cleanly without a distilled generator") {
    Session ses("/tmp/toc_capi_d");
    tocsr_status st = tocsr_infer(ses.s, "/tmp/nothing.ppm", "/tmp/out.ppm");
    CHECK(st != TOCSR_OK);
    CHECK(tocsr_last_error(ses.s) != nullptr);
}
