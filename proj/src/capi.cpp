#include "tocsr.h"

#include <cstring>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "toc/pipeline.hpp"

struct tocsr_session {
    toc::RunConfig cfg;
    std::string last_error;
};

namespace {

thread_local std::string g_last_error;

tocsr_status status_of(const toc::Error& e) {
    using K = toc::Error::Kind;
    switch (e.kind()) {
        case K::InvalidArg: return TOCSR_E_INVALID_ARG;
        case K::Shape: return TOCSR_E_SHAPE;
        case K::Numeric: return TOCSR_E_NUMERIC;
        case K::Io: return TOCSR_E_IO;
        case K::MissingDependency: return TOCSR_E_MISSING_DEPENDENCY;
        case K::State: return TOCSR_E_STATE;
    }
    return TOCSR_E_UNKNOWN;
}

tocsr_status guard(tocsr_session* s, const std::function<void()>& body) {
    std::string* sink = s ? &s->last_error : &g_last_error;
    try {
        body();
        sink->clear();
        return TOCSR_OK;
    } catch (const toc::Error& e) {
        *sink = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        *sink = e.what();
        return TOCSR_E_UNKNOWN;
    }
}

}  // namespace

extern "C" {

const char* tocsr_version(void) { return "0.1.0"; }

tocsr_status tocsr_open(const char* config_path, tocsr_session** out) {
    if (!out) return TOCSR_E_INVALID_ARG;
    *out = nullptr;
    auto s = std::make_unique<tocsr_session>();
    tocsr_status st = guard(s.get(), [&] {
        if (config_path) s->cfg.load_file(config_path);
    });
    if (st != TOCSR_OK) {
        g_last_error = s->last_error;
        return st;
    }
    *out = s.release();
    return TOCSR_OK;
}

void tocsr_close(tocsr_session* s) { delete s; }

tocsr_status tocsr_set(tocsr_session* s, const char* key, const char* value) {
    if (!s || !key || !value) return TOCSR_E_INVALID_ARG;
    return guard(s, [&] { s->cfg.set(key, value); });
}

tocsr_status tocsr_run(tocsr_session* s, const char* command, const char* arg) {
    if (!s || !command) return TOCSR_E_INVALID_ARG;
    std::string cmd = command;
    std::string a = arg ? arg : "";
    return guard(s, [&] {
        toc::Pipeline p(s->cfg);
        if (cmd == "gen-data") {
            p.gen_data();
        } else if (cmd == "train-vae") {
            p.train_vae(a.empty() ? s->cfg.geti("vae.channels") : std::stoi(a));
        } else if (cmd == "distill-vae") {
            p.distill_vae();
        } else if (cmd == "train-teacher") {
            p.train_teacher();
        } else if (cmd == "capture") {
            p.capture();
        } else if (cmd == "calibrate") {
            p.calibrate();
        } else if (cmd == "search") {
            std::vector<double> grid;
            std::istringstream gs(a);
            std::string tok;
            while (std::getline(gs, tok, ','))
                if (!tok.empty()) grid.push_back(std::stod(tok));
            p.search(grid);
        } else if (cmd == "finetune") {
            p.finetune();
        } else if (cmd == "train-sr") {
            p.train_sr();
        } else if (cmd == "distill-sr") {
            p.distill_sr();
        } else if (cmd == "report") {
            p.report();
        } else if (cmd == "selftest") {
            p.selftest();
        } else {
            toc::fail(toc::Error::Kind::InvalidArg, "unknown command: " + cmd);
        }
    });
}

tocsr_status tocsr_infer(tocsr_session* s, const char* in_ppm, const char* out_ppm) {
    if (!s || !in_ppm || !out_ppm) return TOCSR_E_INVALID_ARG;
    return guard(s, [&] {
        toc::Pipeline p(s->cfg);
        p.infer(in_ppm, out_ppm);
    });
}

tocsr_status tocsr_report(tocsr_session* s, char** out_text) {
    if (!s || !out_text) return TOCSR_E_INVALID_ARG;
    *out_text = nullptr;
    return guard(s, [&] {
        toc::Pipeline p(s->cfg);
        std::string text = p.report();
        char* buf = new char[text.size() + 1];
        std::memcpy(buf, text.c_str(), text.size() + 1);
        *out_text = buf;
    });
}

void tocsr_free_text(char* text) { delete[] text; }

const char* tocsr_last_error(tocsr_session* s) {
    return s ? s->last_error.c_str() : g_last_error.c_str();
}

}  // extern "C"
