#include "toc/dataset.hpp"

#include <cmath>

#include "toc/rng.hpp"

namespace toc {

namespace {

struct Rgb {
    float r, g, b;
};

Rgb random_color(Rng& rng) {
    return {(float)rng.uniform(), (float)rng.uniform(), (float)rng.uniform()};
}

// Signed distance to a convex polygon given as CCW vertices; positive inside.
float convex_inside(const std::vector<std::pair<float, float>>& v, float x, float y) {
    float d = 1e9f;
    for (size_t i = 0; i < v.size(); ++i) {
        auto [x0, y0] = v[i];
        auto [x1, y1] = v[(i + 1) % v.size()];
        float ex = x1 - x0, ey = y1 - y0;
        float len = std::sqrt(ex * ex + ey * ey) + 1e-9f;
        // inward normal distance
        float dist = (-(y1 - y0) * (x - x0) + (x1 - x0) * (y - y0)) / len;
        d = std::min(d, dist);
    }
    return d;
}

}  // namespace

std::vector<Tensor> gen_data(int n, uint64_t seed, int size) {
    std::vector<Tensor> out;
    out.reserve(n);
    Rng base(seed);
    for (int img = 0; img < n; ++img) {
        Rng rng = base.split("img" + std::to_string(img));
        Tensor t = Tensor::zeros({3, size, size});

        // smooth background gradient between two colors
        Rgb ca = random_color(rng), cb = random_color(rng);
        float ang = (float)(rng.uniform() * 2.0 * M_PI);
        float gx = std::cos(ang), gy = std::sin(ang);
        auto px = [&](int c, int i, int j) -> float& {
            return t.data()[((size_t)c * size + i) * size + j];
        };
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                float u = 0.5f + 0.5f * (gx * (j / (float)size - 0.5f) * 2.0f +
                                         gy * (i / (float)size - 0.5f) * 2.0f) / 1.4142f;
                px(0, i, j) = ca.r + (cb.r - ca.r) * u;
                px(1, i, j) = ca.g + (cb.g - ca.g) * u;
                px(2, i, j) = ca.b + (cb.b - ca.b) * u;
            }

        if (rng.uniform_int(2) == 0) {
            // one or two filled convex polygons with hard edges
            int shapes = 1 + rng.uniform_int(2);
            for (int s = 0; s < shapes; ++s) {
                int verts = 3 + rng.uniform_int(3);
                float cx = size * (0.25f + 0.5f * (float)rng.uniform());
                float cy = size * (0.25f + 0.5f * (float)rng.uniform());
                float rad = size * (0.12f + 0.18f * (float)rng.uniform());
                float rot = (float)(rng.uniform() * 2.0 * M_PI);
                std::vector<std::pair<float, float>> v;
                for (int k = 0; k < verts; ++k) {
                    float a = rot + 2.0f * (float)M_PI * k / verts;
                    v.push_back({cx + rad * std::cos(a), cy + rad * std::sin(a)});
                }
                Rgb col = random_color(rng);
                for (int i = 0; i < size; ++i)
                    for (int j = 0; j < size; ++j)
                        if (convex_inside(v, (float)j, (float)i) > 0.0f) {
                            px(0, i, j) = col.r;
                            px(1, i, j) = col.g;
                            px(2, i, j) = col.b;
                        }
            }
        }

        // every image carries a near-Nyquist grating: its x2 alias lands in
        // (0.08, 0.22) cycles/pixel, an injective fold, so the true frequency
        // is recoverable from the LR image by a learned prior but not by
        // bicubic interpolation
        {
            float theta = (float)(rng.uniform() * M_PI);
            float freq = 0.28f + 0.14f * (float)rng.uniform();  // cycles per pixel
            float phase = (float)(rng.uniform() * 2.0 * M_PI);
            float amp = 0.25f + 0.2f * (float)rng.uniform();
            float kx = std::cos(theta) * freq * 2.0f * (float)M_PI;
            float ky = std::sin(theta) * freq * 2.0f * (float)M_PI;
            for (int i = 0; i < size; ++i)
                for (int j = 0; j < size; ++j) {
                    float v = amp * std::sin(kx * j + ky * i + phase);
                    for (int c = 0; c < 3; ++c) px(c, i, j) += v;
                }
        }

        for (int64_t i = 0; i < t.numel(); ++i)
            t.data()[i] = std::min(1.0f, std::max(0.0f, t.data()[i]));
        out.push_back(std::move(t));
    }
    return out;
}

Split split_dataset(int n) {
    Split s;
    for (int i = 0; i < n; ++i)
        (i % 4 == 3 ? s.calib : s.train).push_back(i);
    return s;
}

}  // namespace toc
