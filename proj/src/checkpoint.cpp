#include "toc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace toc {

namespace {

constexpr char kMagic[4] = {'T', 'O', 'C', 'F'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& f, uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                          (unsigned char)((v >> 16) & 0xff), (unsigned char)((v >> 24) & 0xff)};
    f.write((const char*)b, 4);
}

void put_u64(std::ostream& f, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((v >> (8 * i)) & 0xff);
    f.write((const char*)b, 8);
}

uint32_t get_u32(std::istream& f) {
    unsigned char b[4];
    f.read((char*)b, 4);
    return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

uint64_t get_u64(std::istream& f) {
    unsigned char b[8];
    f.read((char*)b, 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t)b[i] << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ostringstream manifest;
    uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        check(name.find(' ') == std::string::npos && name.find('\n') == std::string::npos,
              Error::Kind::InvalidArg, "checkpoint: tensor name must not contain spaces: " + name);
        manifest << name;
        for (int d : t.shape()) manifest << ' ' << d;
        manifest << " @" << offset << '\n';
        offset += (uint64_t)t.numel() * 4;
    }
    std::string m = manifest.str();

    std::ofstream f(path, std::ios::binary);
    check((bool)f, Error::Kind::Io, "cannot write " + path);
    f.write(kMagic, 4);
    put_u32(f, kVersion);
    put_u64(f, m.size());
    f.write(m.data(), (std::streamsize)m.size());
    for (const auto& [name, t] : tensors)
        f.write((const char*)t.data().data(), (std::streamsize)(t.numel() * 4));
    check((bool)f, Error::Kind::Io, "short write to " + path);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check((bool)f, Error::Kind::Io, "cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    check((bool)f && std::memcmp(magic, kMagic, 4) == 0, Error::Kind::Io,
          path + ": bad checkpoint magic");
    uint32_t version = get_u32(f);
    check(version == kVersion, Error::Kind::Io,
          path + ": unsupported checkpoint version " + std::to_string(version));
    uint64_t mlen = get_u64(f);
    std::string m(mlen, '\0');
    f.read(m.data(), (std::streamsize)mlen);
    check((bool)f, Error::Kind::Io, path + ": truncated manifest");

    std::vector<std::pair<std::string, Tensor>> out;
    std::istringstream ms(m);
    std::string line;
    uint64_t expect_offset = 0;
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, tok;
        ls >> name;
        std::vector<int> shape;
        uint64_t offset = UINT64_MAX;
        while (ls >> tok) {
            if (tok[0] == '@')
                offset = std::stoull(tok.substr(1));
            else
                shape.push_back(std::stoi(tok));
        }
        check(offset != UINT64_MAX && !shape.empty(), Error::Kind::Io,
              path + ": malformed manifest line: " + line);
        check(offset == expect_offset, Error::Kind::Io,
              path + ": manifest offsets overlap or are out of order at " + name);
        Tensor t = Tensor::zeros(shape);
        f.read((char*)t.data().data(), (std::streamsize)(t.numel() * 4));
        check((bool)f, Error::Kind::Io, path + ": truncated payload at " + name);
        expect_offset = offset + (uint64_t)t.numel() * 4;
        out.emplace_back(name, std::move(t));
    }
    return out;
}

void load_into(const std::string& path, ParamStore& store) {
    auto loaded = load_checkpoint(path);
    check(loaded.size() == store.params.size(), Error::Kind::InvalidArg,
          path + ": tensor count mismatch with target store");
    for (size_t i = 0; i < loaded.size(); ++i) {
        auto& [lname, lt] = loaded[i];
        auto& [sname, st] = store.params[i];
        check(lname == sname, Error::Kind::InvalidArg,
              path + ": name mismatch: " + lname + " vs " + sname);
        check(same_shape(lt, st), Error::Kind::Shape,
              path + ": shape mismatch at " + lname);
        std::memcpy(st.data().data(), lt.data().data(), (size_t)lt.numel() * 4);
    }
}

std::string file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check((bool)f, Error::Kind::Io, "cannot open " + path);
    uint64_t h = 1469598103934665603ull;
    char buf[65536];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= (unsigned char)buf[i];
            h *= 1099511628211ull;
        }
        if (!f) break;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", (unsigned long long)h);
    return out;
}

}  // namespace toc
