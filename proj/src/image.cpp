#include "toc/image.hpp"

#include <cmath>
#include <fstream>

namespace toc {

namespace {

int next_int(std::istream& in) {
    // skips whitespace and '#' comments per the PPM grammar
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string junk;
            std::getline(in, junk);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    in >> v;
    check((bool)in, Error::Kind::Io, "ppm: malformed header");
    return v;
}

}  // namespace

Tensor read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check((bool)f, Error::Kind::Io, "cannot open " + path);
    std::string magic;
    f >> magic;
    check(magic == "P6", Error::Kind::Io, path + ": not a P6 ppm");
    int w = next_int(f), h = next_int(f), maxval = next_int(f);
    check(maxval == 255, Error::Kind::Io, path + ": only 8-bit ppm supported");
    f.get();  // single whitespace after maxval
    std::vector<unsigned char> raw((size_t)w * h * 3);
    f.read((char*)raw.data(), (std::streamsize)raw.size());
    check((bool)f, Error::Kind::Io, path + ": truncated pixel data");
    Tensor img = Tensor::zeros({3, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c)
                img.data()[((size_t)c * h + i) * w + j] =
                    raw[((size_t)i * w + j) * 3 + c] / 255.0f;
    return img;
}

void write_ppm(const std::string& path, const Tensor& img) {
    const auto& sh = img.shape();
    check(sh.size() == 3 && sh[0] == 3, Error::Kind::Shape, "write_ppm: expected [3,H,W]");
    int h = sh[1], w = sh[2];
    std::ofstream f(path, std::ios::binary);
    check((bool)f, Error::Kind::Io, "cannot write " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> raw((size_t)w * h * 3);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int c = 0; c < 3; ++c) {
                float v = img.data()[((size_t)c * h + i) * w + j];
                v = std::min(1.0f, std::max(0.0f, v));
                raw[((size_t)i * w + j) * 3 + c] = (unsigned char)std::lround(v * 255.0f);
            }
    f.write((const char*)raw.data(), (std::streamsize)raw.size());
}

}  // namespace toc
