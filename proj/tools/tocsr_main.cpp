// CLI front end; talks to the library exclusively through the C API.
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "tocsr.h"

namespace {

void usage() {
    std::fprintf(stderr,
                 "usage: tocsr [--config FILE] [--set section.key=value]... COMMAND [args]\n"
                 "\n"
                 "commands:\n"
                 "  gen-data                      generate the synthetic dataset\n"
                 "  train-vae [--channels 4|16]   train the wide reference autoencoder\n"
                 "  distill-vae                   distill the deployed autoencoder\n"
                 "  train-teacher                 train the denoiser (incl. channel expansion)\n"
                 "  capture                       record per-stage teacher features\n"
                 "  calibrate                     fit every surrogate block variant\n"
                 "  search [--eps-grid a,b,...]   constrained architecture search\n"
                 "  finetune                      fine-tune the selected architecture\n"
                 "  train-sr                      conditional super-resolution training\n"
                 "  distill-sr                    one-step generator distillation\n"
                 "  infer --in x.ppm --out y.ppm  single-image super-resolution\n"
                 "  report                        print the run summary\n"
                 "  selftest                      quick invariant checks\n");
}

int fail_with(tocsr_session* s, tocsr_status st) {
    std::fprintf(stderr, "error (%d): %s\n", (int)st, tocsr_last_error(s));
    tocsr_close(s);
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> sets;
    std::string command, cmd_arg, in_path, out_path;

    for (size_t i = 0; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto next = [&](const char* flag) -> std::string {
            if (i + 1 >= args.size()) {
                std::fprintf(stderr, "%s requires a value\n", flag);
                std::exit(1);
            }
            return args[++i];
        };
        if (a == "--help" || a == "-h") {
            usage();
            return 0;
        } else if (a == "--config") {
            config_path = next("--config");
        } else if (a == "--set") {
            std::string kv = next("--set");
            size_t eq = kv.find('=');
            if (eq == std::string::npos) {
                std::fprintf(stderr, "--set expects section.key=value\n");
                return 1;
            }
            sets.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else if (a == "--channels" || a == "--eps-grid") {
            cmd_arg = next(a.c_str());
        } else if (a == "--in") {
            in_path = next("--in");
        } else if (a == "--out") {
            out_path = next("--out");
        } else if (command.empty()) {
            command = a;
        } else {
            std::fprintf(stderr, "unexpected argument: %s\n", a.c_str());
            return 1;
        }
    }
    if (command.empty()) {
        usage();
        return 1;
    }

    tocsr_session* s = nullptr;
    tocsr_status st = tocsr_open(config_path.empty() ? nullptr : config_path.c_str(), &s);
    if (st != TOCSR_OK) {
        std::fprintf(stderr, "error (%d): %s\n", (int)st, tocsr_last_error(nullptr));
        return 1;
    }
    for (const auto& [k, v] : sets)
        if ((st = tocsr_set(s, k.c_str(), v.c_str())) != TOCSR_OK) return fail_with(s, st);

    if (command == "infer") {
        if (in_path.empty() || out_path.empty()) {
            std::fprintf(stderr, "infer requires --in and --out\n");
            tocsr_close(s);
            return 1;
        }
        if ((st = tocsr_infer(s, in_path.c_str(), out_path.c_str())) != TOCSR_OK)
            return fail_with(s, st);
    } else if (command == "report") {
        char* text = nullptr;
        if ((st = tocsr_report(s, &text)) != TOCSR_OK) return fail_with(s, st);
        std::fputs(text, stdout);
        tocsr_free_text(text);
    } else {
        if ((st = tocsr_run(s, command.c_str(), cmd_arg.empty() ? nullptr : cmd_arg.c_str())) !=
            TOCSR_OK)
            return fail_with(s, st);
        std::printf("%s: ok\n", command.c_str());
    }
    tocsr_close(s);
    return 0;
}
