#include "toc/config.hpp"

#include <fstream>
#include <sstream>

namespace toc {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() {
    values_ = {
        {"run.dir", "runs/default"},
        {"run.master_seed", "1234"},

        {"data.n", "512"},
        {"data.size", "32"},
        {"data.seed", "101"},

        {"vae.channels", "16"},
        {"vae.width", "24"},
        {"vae.spatial_factor", "4"},
        {"vae.steps", "1200"},
        {"vae.batch", "16"},
        {"vae.lr", "2e-3"},
        {"vae.seed", "7"},
        {"vae.kl_weight", "1e-6"},
        {"vae.lambda_lat", "1.0"},
        {"vae.lambda_rec", "1.0"},
        {"vae.distill_steps", "800"},

        {"teacher.width", "24"},
        {"teacher.emb_dim", "32"},
        {"teacher.T", "200"},
        {"teacher.steps", "800"},
        {"teacher.batch", "16"},
        {"teacher.lr", "1e-3"},
        {"teacher.seed", "13"},
        {"teacher.adapter_steps", "120"},

        {"calib.steps", "400"},
        {"calib.batch", "16"},
        {"calib.lr", "2e-3"},
        {"calib.seed", "11"},

        {"search.iterations", "40"},
        {"search.init", "12"},
        {"search.pool", "512"},
        {"search.n_acc", "64"},
        {"search.budget", "0"},
        {"search.seed", "21"},

        {"finetune.steps", "200"},
        {"finetune.batch", "16"},
        {"finetune.lr", "5e-4"},
        {"finetune.seed", "17"},

        {"sr.scale", "2"},
        {"sr.steps", "600"},
        {"sr.batch", "8"},
        {"sr.lr", "1e-3"},
        {"sr.seed", "31"},
        {"sr.k_teacher", "8"},

        {"distill.steps", "400"},
        {"distill.batch", "8"},
        {"distill.lr", "1e-3"},
        {"distill.seed", "37"},
    };
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    check((bool)f, Error::Kind::Io, "cannot open config " + path);
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        size_t eq = s.find('=');
        check(eq != std::string::npos, Error::Kind::InvalidArg,
              path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        check(!section.empty(), Error::Kind::InvalidArg,
              path + ":" + std::to_string(lineno) + ": key outside any [section]");
        set(section + "." + key, val);
    }
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
    auto it = values_.find(dotted_key);
    check(it != values_.end(), Error::Kind::InvalidArg, "unknown config key: " + dotted_key);
    it->second = value;
    touched_.insert(dotted_key);
}

const std::string& RunConfig::raw(const std::string& key) const {
    auto it = values_.find(key);
    check(it != values_.end(), Error::Kind::InvalidArg, "unknown config key: " + key);
    return it->second;
}

int RunConfig::geti(const std::string& key) const { return std::stoi(raw(key)); }
int64_t RunConfig::geti64(const std::string& key) const { return std::stoll(raw(key)); }
double RunConfig::getf(const std::string& key) const { return std::stod(raw(key)); }
uint64_t RunConfig::getu64(const std::string& key) const { return std::stoull(raw(key)); }
std::string RunConfig::gets(const std::string& key) const { return raw(key); }

std::string RunConfig::resolved() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [k, v] : values_) {
        size_t dot = k.find('.');
        std::string sec = k.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) os << '\n';
            os << '[' << sec << "]\n";
            section = sec;
        }
        os << k.substr(dot + 1) << " = " << v << '\n';
    }
    return os.str();
}

}  // namespace toc
