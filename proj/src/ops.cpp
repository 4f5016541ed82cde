#include "toc/ops.hpp"

#include <cmath>
#include <cstring>

namespace toc {

namespace {

using Impl = std::shared_ptr<TensorImpl>;

bool tracks_grad(const Tensor& t) {
    return t.impl()->requires_grad || static_cast<bool>(t.impl()->backfn);
}

Tensor make_result(std::vector<int> shape, std::vector<float> data,
                   std::vector<Tensor> parents, std::function<void(TensorImpl&)> backfn) {
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), false);
    bool tape = false;
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (tracks_grad(p)) tape = true;
    }
    if (tape) {
        auto& impl = *out.impl();
        impl.parents.reserve(parents.size());
        for (auto& p : parents) impl.parents.push_back(p.impl());
        impl.backfn = std::move(backfn);
    }
    return out;
}

void require_same_shape(const char* kernel, const Tensor& a, const Tensor& b) {
    check(same_shape(a, b), Error::Kind::Shape,
          std::string(kernel) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
}

void require_rank(const char* kernel, const Tensor& t, size_t rank) {
    check(t.shape().size() == rank, Error::Kind::Shape,
          std::string(kernel) + ": expected rank " + std::to_string(rank) + ", got " +
              shape_str(t.shape()));
}

void accum(const Impl& p, size_t i, float v) {
    if (p->requires_grad || p->backfn) {
        p->ensure_grad();
        p->grad[i] += v;
    }
}

bool wants_grad(const Impl& p) { return p->requires_grad || static_cast<bool>(p->backfn); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
    Impl ia = a.impl(), ib = b.impl();
    return make_result(a.shape(), std::move(y), {a, b}, [ia, ib](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) {
            accum(ia, i, out.grad[i]);
            accum(ib, i, out.grad[i]);
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
    Impl ia = a.impl(), ib = b.impl();
    return make_result(a.shape(), std::move(y), {a, b}, [ia, ib](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) {
            accum(ia, i, out.grad[i]);
            accum(ib, i, -out.grad[i]);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
    Impl ia = a.impl(), ib = b.impl();
    return make_result(a.shape(), std::move(y), {a, b}, [ia, ib](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) {
            accum(ia, i, out.grad[i] * ib->data[i]);
            accum(ib, i, out.grad[i] * ia->data[i]);
        }
    });
}

Tensor scale(const Tensor& a, float c) {
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * c;
    Impl ia = a.impl();
    return make_result(a.shape(), std::move(y), {a}, [ia, c](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) accum(ia, i, out.grad[i] * c);
    });
}

Tensor add_scalar(const Tensor& a, float c) {
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + c;
    Impl ia = a.impl();
    return make_result(a.shape(), std::move(y), {a}, [ia](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) accum(ia, i, out.grad[i]);
    });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = std::min(hi, std::max(lo, a.data()[i]));
    Impl ia = a.impl();
    return make_result(a.shape(), std::move(y), {a}, [ia, lo, hi](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) {
            float x = ia->data[i];
            if (x >= lo && x <= hi) accum(ia, i, out.grad[i]);
        }
    });
}

Tensor silu(const Tensor& a) {
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) {
        float x = a.data()[i];
        float s = 1.0f / (1.0f + std::exp(-x));
        y[i] = x * s;
    }
    Impl ia = a.impl();
    return make_result(a.shape(), std::move(y), {a}, [ia](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) {
            float x = ia->data[i];
            float s = 1.0f / (1.0f + std::exp(-x));
            accum(ia, i, out.grad[i] * s * (1.0f + x * (1.0f - s)));
        }
    });
}

Tensor expop(const Tensor& a) {
    std::vector<float> y(a.data().size());
    for (size_t i = 0; i < y.size(); ++i) y[i] = std::exp(a.data()[i]);
    Impl ia = a.impl();
    return make_result(a.shape(), std::move(y), {a}, [ia](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) accum(ia, i, out.grad[i] * out.data[i]);
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    require_rank("add_channel_bias", x, 4);
    require_rank("add_channel_bias", b, 1);
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(b.dim(0) == C, Error::Kind::Shape,
          "add_channel_bias: bias " + shape_str(b.shape()) + " vs x " + shape_str(x.shape()));
    std::vector<float> y(x.data().size());
    size_t hw = static_cast<size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            size_t base = (static_cast<size_t>(n) * C + c) * hw;
            float bv = b.data()[static_cast<size_t>(c)];
            for (size_t i = 0; i < hw; ++i) y[base + i] = x.data()[base + i] + bv;
        }
    Impl ix = x.impl(), ib = b.impl();
    return make_result(x.shape(), std::move(y), {x, b}, [ix, ib, N, C, hw](TensorImpl& out) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                size_t base = (static_cast<size_t>(n) * C + c) * hw;
                float s = 0.0f;
                for (size_t i = 0; i < hw; ++i) {
                    float g = out.grad[base + i];
                    accum(ix, base + i, g);
                    s += g;
                }
                accum(ib, static_cast<size_t>(c), s);
            }
    });
}

Tensor add_batch_channel_bias(const Tensor& x, const Tensor& b) {
    require_rank("add_batch_channel_bias", x, 4);
    require_rank("add_batch_channel_bias", b, 2);
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(b.dim(0) == N && b.dim(1) == C, Error::Kind::Shape,
          "add_batch_channel_bias: bias " + shape_str(b.shape()) + " vs x " +
              shape_str(x.shape()));
    std::vector<float> y(x.data().size());
    size_t hw = static_cast<size_t>(H) * W;
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            size_t base = (static_cast<size_t>(n) * C + c) * hw;
            float bv = b.data()[static_cast<size_t>(n) * C + c];
            for (size_t i = 0; i < hw; ++i) y[base + i] = x.data()[base + i] + bv;
        }
    Impl ix = x.impl(), ib = b.impl();
    return make_result(x.shape(), std::move(y), {x, b}, [ix, ib, N, C, hw](TensorImpl& out) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c) {
                size_t base = (static_cast<size_t>(n) * C + c) * hw;
                float s = 0.0f;
                for (size_t i = 0; i < hw; ++i) {
                    float g = out.grad[base + i];
                    accum(ix, base + i, g);
                    s += g;
                }
                accum(ib, static_cast<size_t>(n) * C + c, s);
            }
    });
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    require_rank("add_row_bias", x, 2);
    require_rank("add_row_bias", b, 1);
    int N = x.dim(0), M = x.dim(1);
    check(b.dim(0) == M, Error::Kind::Shape,
          "add_row_bias: bias " + shape_str(b.shape()) + " vs x " + shape_str(x.shape()));
    std::vector<float> y(x.data().size());
    for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m)
            y[static_cast<size_t>(n) * M + m] =
                x.data()[static_cast<size_t>(n) * M + m] + b.data()[static_cast<size_t>(m)];
    Impl ix = x.impl(), ib = b.impl();
    return make_result(x.shape(), std::move(y), {x, b}, [ix, ib, N, M](TensorImpl& out) {
        for (int n = 0; n < N; ++n)
            for (int m = 0; m < M; ++m) {
                float g = out.grad[static_cast<size_t>(n) * M + m];
                accum(ix, static_cast<size_t>(n) * M + m, g);
                accum(ib, static_cast<size_t>(m), g);
            }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    check(k == k2, Error::Kind::Shape,
          "matmul: inner dims differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<float> y(static_cast<size_t>(m) * n, 0.0f);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            float av = a.data()[static_cast<size_t>(i) * k + p];
            const float* brow = b.data().data() + static_cast<size_t>(p) * n;
            float* yrow = y.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
        }
    Impl ia = a.impl(), ib = b.impl();
    return make_result({m, n}, std::move(y), {a, b}, [ia, ib, m, k, n](TensorImpl& out) {
        if (wants_grad(ia)) {
            ia->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    float s = 0.0f;
                    const float* grow = out.grad.data() + static_cast<size_t>(i) * n;
                    const float* brow = ib->data.data() + static_cast<size_t>(p) * n;
                    for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                    ia->grad[static_cast<size_t>(i) * k + p] += s;
                }
        }
        if (wants_grad(ib)) {
            ib->ensure_grad();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    float av = ia->data[static_cast<size_t>(i) * k + p];
                    const float* grow = out.grad.data() + static_cast<size_t>(i) * n;
                    float* brow = ib->grad.data() + static_cast<size_t>(p) * n;
                    for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                }
        }
    });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
    require_rank("bmm", a, 3);
    require_rank("bmm", b, 3);
    int B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    check(b.dim(0) == B && b.dim(1) == k, Error::Kind::Shape,
          "bmm: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<float> y(static_cast<size_t>(B) * m * n, 0.0f);
    for (int bb = 0; bb < B; ++bb) {
        const float* A = a.data().data() + static_cast<size_t>(bb) * m * k;
        const float* Bm = b.data().data() + static_cast<size_t>(bb) * k * n;
        float* Y = y.data() + static_cast<size_t>(bb) * m * n;
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                float av = A[static_cast<size_t>(i) * k + p];
                for (int j = 0; j < n; ++j)
                    Y[static_cast<size_t>(i) * n + j] += av * Bm[static_cast<size_t>(p) * n + j];
            }
    }
    Impl ia = a.impl(), ib = b.impl();
    return make_result({B, m, n}, std::move(y), {a, b}, [ia, ib, B, m, k, n](TensorImpl& out) {
        for (int bb = 0; bb < B; ++bb) {
            const float* G = out.grad.data() + static_cast<size_t>(bb) * m * n;
            const float* A = ia->data.data() + static_cast<size_t>(bb) * m * k;
            const float* Bm = ib->data.data() + static_cast<size_t>(bb) * k * n;
            if (wants_grad(ia)) {
                ia->ensure_grad();
                float* dA = ia->grad.data() + static_cast<size_t>(bb) * m * k;
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        float s = 0.0f;
                        for (int j = 0; j < n; ++j)
                            s += G[static_cast<size_t>(i) * n + j] *
                                 Bm[static_cast<size_t>(p) * n + j];
                        dA[static_cast<size_t>(i) * k + p] += s;
                    }
            }
            if (wants_grad(ib)) {
                ib->ensure_grad();
                float* dB = ib->grad.data() + static_cast<size_t>(bb) * k * n;
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        float av = A[static_cast<size_t>(i) * k + p];
                        for (int j = 0; j < n; ++j)
                            dB[static_cast<size_t>(p) * n + j] +=
                                av * G[static_cast<size_t>(i) * n + j];
                    }
            }
        }
    });
}

Tensor transpose_last2(const Tensor& a) {
    require_rank("transpose_last2", a, 3);
    int B = a.dim(0), m = a.dim(1), n = a.dim(2);
    std::vector<float> y(a.data().size());
    for (int bb = 0; bb < B; ++bb)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                y[(static_cast<size_t>(bb) * n + j) * m + i] =
                    a.data()[(static_cast<size_t>(bb) * m + i) * n + j];
    Impl ia = a.impl();
    return make_result({B, n, m}, std::move(y), {a}, [ia, B, m, n](TensorImpl& out) {
        for (int bb = 0; bb < B; ++bb)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    accum(ia, (static_cast<size_t>(bb) * m + i) * n + j,
                          out.grad[(static_cast<size_t>(bb) * n + j) * m + i]);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_row_bias(matmul(x, w), b);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
    check(shape_numel(shape) == a.numel(), Error::Kind::Shape,
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Impl ia = a.impl();
    return make_result(std::move(shape), a.data(), {a}, [ia](TensorImpl& out) {
        for (size_t i = 0; i < out.grad.size(); ++i) accum(ia, i, out.grad[i]);
    });
}

Tensor nchw_to_nlc(const Tensor& a) {
    require_rank("nchw_to_nlc", a, 4);
    int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    int L = H * W;
    std::vector<float> y(a.data().size());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int l = 0; l < L; ++l)
                y[(static_cast<size_t>(n) * L + l) * C + c] =
                    a.data()[(static_cast<size_t>(n) * C + c) * L + l];
    Impl ia = a.impl();
    return make_result({N, L, C}, std::move(y), {a}, [ia, N, C, L](TensorImpl& out) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int l = 0; l < L; ++l)
                    accum(ia, (static_cast<size_t>(n) * C + c) * L + l,
                          out.grad[(static_cast<size_t>(n) * L + l) * C + c]);
    });
}

Tensor nlc_to_nchw(const Tensor& a, int h, int w) {
    require_rank("nlc_to_nchw", a, 3);
    int N = a.dim(0), L = a.dim(1), C = a.dim(2);
    check(L == h * w, Error::Kind::Shape, "nlc_to_nchw: L != h*w");
    std::vector<float> y(a.data().size());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int l = 0; l < L; ++l)
                y[(static_cast<size_t>(n) * C + c) * L + l] =
                    a.data()[(static_cast<size_t>(n) * L + l) * C + c];
    Impl ia = a.impl();
    return make_result({N, C, h, w}, std::move(y), {a}, [ia, N, C, L](TensorImpl& out) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int l = 0; l < L; ++l)
                    accum(ia, (static_cast<size_t>(n) * L + l) * C + c,
                          out.grad[(static_cast<size_t>(n) * C + c) * L + l]);
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank("concat_channels", a, 4);
    require_rank("concat_channels", b, 4);
    int N = a.dim(0), Ca = a.dim(1), H = a.dim(2), W = a.dim(3), Cb = b.dim(1);
    check(b.dim(0) == N && b.dim(2) == H && b.dim(3) == W, Error::Kind::Shape,
          "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    size_t hw = static_cast<size_t>(H) * W;
    std::vector<float> y(static_cast<size_t>(N) * (Ca + Cb) * hw);
    for (int n = 0; n < N; ++n) {
        std::memcpy(y.data() + static_cast<size_t>(n) * (Ca + Cb) * hw,
                    a.data().data() + static_cast<size_t>(n) * Ca * hw,
                    sizeof(float) * Ca * hw);
        std::memcpy(y.data() + (static_cast<size_t>(n) * (Ca + Cb) + Ca) * hw,
                    b.data().data() + static_cast<size_t>(n) * Cb * hw,
                    sizeof(float) * Cb * hw);
    }
    Impl ia = a.impl(), ib = b.impl();
    return make_result({N, Ca + Cb, H, W}, std::move(y), {a, b},
                       [ia, ib, N, Ca, Cb, hw](TensorImpl& out) {
                           for (int n = 0; n < N; ++n) {
                               size_t abase = static_cast<size_t>(n) * Ca * hw;
                               size_t bbase = static_cast<size_t>(n) * Cb * hw;
                               size_t obase = static_cast<size_t>(n) * (Ca + Cb) * hw;
                               for (size_t i = 0; i < static_cast<size_t>(Ca) * hw; ++i)
                                   accum(ia, abase + i, out.grad[obase + i]);
                               for (size_t i = 0; i < static_cast<size_t>(Cb) * hw; ++i)
                                   accum(ib, bbase + i,
                                         out.grad[obase + static_cast<size_t>(Ca) * hw + i]);
                           }
                       });
}

Tensor slice_channels(const Tensor& a, int c0, int c1) {
    require_rank("slice_channels", a, 4);
    int N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
    check(0 <= c0 && c0 < c1 && c1 <= C, Error::Kind::Shape, "slice_channels: bad range");
    int Cs = c1 - c0;
    size_t hw = static_cast<size_t>(H) * W;
    std::vector<float> y(static_cast<size_t>(N) * Cs * hw);
    for (int n = 0; n < N; ++n)
        std::memcpy(y.data() + static_cast<size_t>(n) * Cs * hw,
                    a.data().data() + (static_cast<size_t>(n) * C + c0) * hw,
                    sizeof(float) * Cs * hw);
    Impl ia = a.impl();
    return make_result({N, Cs, H, W}, std::move(y), {a}, [ia, N, C, c0, Cs, hw](TensorImpl& out) {
        for (int n = 0; n < N; ++n) {
            size_t abase = (static_cast<size_t>(n) * C + c0) * hw;
            size_t obase = static_cast<size_t>(n) * Cs * hw;
            for (size_t i = 0; i < static_cast<size_t>(Cs) * hw; ++i)
                accum(ia, abase + i, out.grad[obase + i]);
        }
    });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
    require_rank("conv2d", x, 4);
    require_rank("conv2d", w, 4);
    require_rank("conv2d", b, 1);
    check(stride == 1 || stride == 2, Error::Kind::InvalidArg, "conv2d: stride must be 1 or 2");
    int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    int Co = w.dim(0), K = w.dim(2);
    check(w.dim(1) == Ci, Error::Kind::Shape,
          "conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
              shape_str(x.shape()));
    check(w.dim(3) == K && K % 2 == 1, Error::Kind::Shape, "conv2d: kernel must be square, odd");
    check(b.dim(0) == Co, Error::Kind::Shape, "conv2d: bias length != out channels");
    int pad = K / 2;
    int Ho = (H + 2 * pad - K) / stride + 1;
    int Wo = (W + 2 * pad - K) / stride + 1;
    std::vector<float> y(static_cast<size_t>(N) * Co * Ho * Wo);
    auto xidx = [=](int n, int c, int i, int j) {
        return ((static_cast<size_t>(n) * Ci + c) * H + i) * W + j;
    };
    auto widx = [=](int co, int ci, int kh, int kw) {
        return ((static_cast<size_t>(co) * Ci + ci) * K + kh) * K + kw;
    };
    auto yidx = [=](int n, int co, int i, int j) {
        return ((static_cast<size_t>(n) * Co + co) * Ho + i) * Wo + j;
    };
    // Row-wise loops: for fixed (ci, kh, kw) the output row is an axpy over a
    // contiguous (stride 1) or strided (stride 2) slice of the input row,
    // which the compiler vectorizes. Valid ranges hoist the padding checks.
    auto orange = [](int k, int pad_, int s, int in_dim, int out_dim) {
        int lo = 0;
        while (lo < out_dim && lo * s + k - pad_ < 0) ++lo;
        int hi = out_dim;
        while (hi > lo && (hi - 1) * s + k - pad_ >= in_dim) --hi;
        return std::pair<int, int>{lo, hi};
    };
    const float* xp = x.data().data();
    const float* wp = w.data().data();
    for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
            float* yrow0 = y.data() + yidx(n, co, 0, 0);
            float bv = b.data()[static_cast<size_t>(co)];
            for (int i = 0; i < Ho * Wo; ++i) yrow0[i] = bv;
            for (int ci = 0; ci < Ci; ++ci)
                for (int kh = 0; kh < K; ++kh) {
                    auto [oh_lo, oh_hi] = orange(kh, pad, stride, H, Ho);
                    for (int kw = 0; kw < K; ++kw) {
                        float wv = wp[widx(co, ci, kh, kw)];
                        auto [ow_lo, ow_hi] = orange(kw, pad, stride, W, Wo);
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const float* __restrict xr = xp + xidx(n, ci, oh * stride + kh - pad, 0);
                            float* __restrict yr = y.data() + yidx(n, co, oh, 0);
                            if (stride == 1)
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    yr[ow] += wv * xr[ow + kw - pad];
                            else
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    yr[ow] += wv * xr[2 * ow + kw - pad];
                        }
                    }
                }
        }
    Impl ix = x.impl(), iw = w.impl(), ib = b.impl();
    return make_result(
        {N, Co, Ho, Wo}, std::move(y), {x, w, b},
        [ix, iw, ib, N, Ci, H, W, Co, K, pad, stride, Ho, Wo, xidx, widx, yidx,
         orange](TensorImpl& out) {
            bool gx = wants_grad(ix), gw = wants_grad(iw), gb = wants_grad(ib);
            if (gx) ix->ensure_grad();
            if (gw) iw->ensure_grad();
            if (gb) ib->ensure_grad();
            const float* gp = out.grad.data();
            if (gb)
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const float* __restrict gr = gp + yidx(n, co, 0, 0);
                        float s = 0.0f;
                        for (int i = 0; i < Ho * Wo; ++i) s += gr[i];
                        ib->grad[static_cast<size_t>(co)] += s;
                    }
            if (!gx && !gw) return;
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co)
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int kh = 0; kh < K; ++kh) {
                            auto [oh_lo, oh_hi] = orange(kh, pad, stride, H, Ho);
                            for (int kw = 0; kw < K; ++kw) {
                                auto [ow_lo, ow_hi] = orange(kw, pad, stride, W, Wo);
                                float wv = iw->data[widx(co, ci, kh, kw)];
                                float dw = 0.0f;
                                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                                    const float* __restrict gr = gp + yidx(n, co, oh, 0);
                                    const float* __restrict xr = ix->data.data() +
                                                      xidx(n, ci, oh * stride + kh - pad, 0);
                                    float* __restrict dxr =
                                        gx ? ix->grad.data() +
                                                 xidx(n, ci, oh * stride + kh - pad, 0)
                                           : nullptr;
                                    if (stride == 1) {
                                        if (gx)
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                dxr[ow + kw - pad] += wv * gr[ow];
                                        if (gw)
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                dw += gr[ow] * xr[ow + kw - pad];
                                    } else {
                                        if (gx)
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                dxr[2 * ow + kw - pad] += wv * gr[ow];
                                        if (gw)
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                dw += gr[ow] * xr[2 * ow + kw - pad];
                                    }
                                }
                                if (gw) iw->grad[widx(co, ci, kh, kw)] += dw;
                            }
                        }
        });
}

// Stride-2 transposed conv, kernel 4, pad 1: exact 2x spatial upsample.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank("conv_transpose2d", x, 4);
    require_rank("conv_transpose2d", w, 4);
    require_rank("conv_transpose2d", b, 1);
    int N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(w.dim(0) == Ci, Error::Kind::Shape,
          "conv_transpose2d: weight " + shape_str(w.shape()) + " incompatible with input " +
              shape_str(x.shape()));
    int Co = w.dim(1), K = w.dim(2);
    check(K == 4 && w.dim(3) == 4, Error::Kind::Shape, "conv_transpose2d: kernel must be 4x4");
    check(b.dim(0) == Co, Error::Kind::Shape, "conv_transpose2d: bias length != out channels");
    int Ho = H * 2, Wo = W * 2;
    std::vector<float> y(static_cast<size_t>(N) * Co * Ho * Wo);
    auto xidx = [=](int n, int c, int i, int j) {
        return ((static_cast<size_t>(n) * Ci + c) * H + i) * W + j;
    };
    auto widx = [=](int ci, int co, int kh, int kw) {
        return ((static_cast<size_t>(ci) * Co + co) * K + kh) * K + kw;
    };
    auto yidx = [=](int n, int co, int i, int j) {
        return ((static_cast<size_t>(n) * Co + co) * Ho + i) * Wo + j;
    };
    // Output rows split by column parity: even columns see kw in {1, 3} and
    // odd columns kw in {0, 2}, each as a contiguous axpy over the input
    // row. Each output row receives at most two kernel rows (kh with
    // oh = 2*ih + kh - 1). Interleave the two halves once per row.
    const float* xp = x.data().data();
    const float* wp = w.data().data();
    {
        std::vector<float> E(static_cast<size_t>(W)), O(static_cast<size_t>(W));
        for (int n = 0; n < N; ++n)
            for (int co = 0; co < Co; ++co)
                for (int oh = 0; oh < Ho; ++oh) {
                    float bv = b.data()[static_cast<size_t>(co)];
                    for (int j = 0; j < W; ++j) E[(size_t)j] = bv;
                    for (int j = 0; j < W; ++j) O[(size_t)j] = bv;
                    int kh0 = (oh + 1) & 1;
                    for (int kh = kh0; kh < K; kh += 2) {
                        int ih = (oh + 1 - kh) / 2;
                        if (ih < 0 || ih >= H) continue;
                        for (int ci = 0; ci < Ci; ++ci) {
                            const float* __restrict xr = xp + xidx(n, ci, ih, 0);
                            float w0 = wp[widx(ci, co, kh, 0)], w1 = wp[widx(ci, co, kh, 1)];
                            float w2 = wp[widx(ci, co, kh, 2)], w3 = wp[widx(ci, co, kh, 3)];
                            float* __restrict e = E.data();
                            float* __restrict o = O.data();
                            for (int j = 0; j < W; ++j) e[j] += w1 * xr[j];
                            for (int j = 1; j < W; ++j) e[j] += w3 * xr[j - 1];
                            for (int j = 0; j < W; ++j) o[j] += w2 * xr[j];
                            for (int j = 0; j < W - 1; ++j) o[j] += w0 * xr[j + 1];
                        }
                    }
                    float* __restrict yr = y.data() + yidx(n, co, oh, 0);
                    for (int j = 0; j < W; ++j) {
                        yr[2 * j] = E[(size_t)j];
                        yr[2 * j + 1] = O[(size_t)j];
                    }
                }
    }
    Impl ix = x.impl(), iw = w.impl(), ib = b.impl();
    return make_result(
        {N, Co, Ho, Wo}, std::move(y), {x, w, b},
        [ix, iw, ib, N, Ci, H, W, Co, K, Ho, Wo, xidx, widx, yidx](TensorImpl& out) {
            bool gx = wants_grad(ix), gw = wants_grad(iw), gb = wants_grad(ib);
            if (gx) ix->ensure_grad();
            if (gw) iw->ensure_grad();
            if (gb) ib->ensure_grad();
            const float* gp = out.grad.data();
            if (gb)
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        float s = 0.0f;
                        const float* __restrict gr = gp + yidx(n, co, 0, 0);
                        for (int i = 0; i < Ho * Wo; ++i) s += gr[i];
                        ib->grad[static_cast<size_t>(co)] += s;
                    }
            if (!gx && !gw) return;
            std::vector<float> Ge(static_cast<size_t>(W)), Go(static_cast<size_t>(W));
            for (int n = 0; n < N; ++n)
                for (int co = 0; co < Co; ++co)
                    for (int oh = 0; oh < Ho; ++oh) {
                        const float* __restrict gr = gp + yidx(n, co, oh, 0);
                        float* __restrict ge = Ge.data();
                        float* __restrict go = Go.data();
                        for (int j = 0; j < W; ++j) {
                            ge[j] = gr[2 * j];
                            go[j] = gr[2 * j + 1];
                        }
                        int kh0 = (oh + 1) & 1;
                        for (int kh = kh0; kh < K; kh += 2) {
                            int ih = (oh + 1 - kh) / 2;
                            if (ih < 0 || ih >= H) continue;
                            for (int ci = 0; ci < Ci; ++ci) {
                                const float* __restrict xr = ix->data.data() + xidx(n, ci, ih, 0);
                                if (gx) {
                                    float w0 = iw->data[widx(ci, co, kh, 0)];
                                    float w1 = iw->data[widx(ci, co, kh, 1)];
                                    float w2 = iw->data[widx(ci, co, kh, 2)];
                                    float w3 = iw->data[widx(ci, co, kh, 3)];
                                    float* __restrict dxr = ix->grad.data() + xidx(n, ci, ih, 0);
                                    for (int j = 0; j < W; ++j) dxr[j] += w1 * ge[j];
                                    for (int j = 0; j < W - 1; ++j) dxr[j] += w3 * ge[j + 1];
                                    for (int j = 0; j < W; ++j) dxr[j] += w2 * go[j];
                                    for (int j = 1; j < W; ++j) dxr[j] += w0 * go[j - 1];
                                }
                                if (gw) {
                                    float d0 = 0.0f, d1 = 0.0f, d2 = 0.0f, d3 = 0.0f;
                                    for (int j = 0; j < W; ++j) d1 += ge[j] * xr[j];
                                    for (int j = 1; j < W; ++j) d3 += ge[j] * xr[j - 1];
                                    for (int j = 0; j < W; ++j) d2 += go[j] * xr[j];
                                    for (int j = 0; j < W - 1; ++j) d0 += go[j] * xr[j + 1];
                                    iw->grad[widx(ci, co, kh, 0)] += d0;
                                    iw->grad[widx(ci, co, kh, 1)] += d1;
                                    iw->grad[widx(ci, co, kh, 2)] += d2;
                                    iw->grad[widx(ci, co, kh, 3)] += d3;
                                }
                            }
                        }
                    }
        });
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps) {
    require_rank("group_norm", x, 4);
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    check(C % groups == 0, Error::Kind::Shape,
          "group_norm: channels " + std::to_string(C) + " not divisible by " +
              std::to_string(groups));
    check(gamma.dim(0) == C && beta.dim(0) == C, Error::Kind::Shape,
          "group_norm: affine params must have length C");
    int Cg = C / groups;
    size_t hw = static_cast<size_t>(H) * W;
    size_t gsize = static_cast<size_t>(Cg) * hw;
    std::vector<float> y(x.data().size());
    std::vector<float> means(static_cast<size_t>(N) * groups);
    std::vector<float> istds(static_cast<size_t>(N) * groups);
    for (int n = 0; n < N; ++n)
        for (int g = 0; g < groups; ++g) {
            size_t base = (static_cast<size_t>(n) * C + static_cast<size_t>(g) * Cg) * hw;
            double s = 0.0, s2 = 0.0;
            for (size_t i = 0; i < gsize; ++i) {
                double v = x.data()[base + i];
                s += v;
                s2 += v * v;
            }
            double mean = s / static_cast<double>(gsize);
            double var = s2 / static_cast<double>(gsize) - mean * mean;
            float istd = static_cast<float>(1.0 / std::sqrt(var + eps));
            means[static_cast<size_t>(n) * groups + g] = static_cast<float>(mean);
            istds[static_cast<size_t>(n) * groups + g] = istd;
            for (int c = 0; c < Cg; ++c) {
                int ch = g * Cg + c;
                float gm = gamma.data()[static_cast<size_t>(ch)];
                float bt = beta.data()[static_cast<size_t>(ch)];
                size_t cb = base + static_cast<size_t>(c) * hw;
                for (size_t i = 0; i < hw; ++i)
                    y[cb + i] = (x.data()[cb + i] - static_cast<float>(mean)) * istd * gm + bt;
            }
        }
    Impl ix = x.impl(), ig = gamma.impl(), ib = beta.impl();
    return make_result(
        x.shape(), std::move(y), {x, gamma, beta},
        [ix, ig, ib, N, C, groups, Cg, hw, gsize, means, istds](TensorImpl& out) {
            bool gx = wants_grad(ix), gg = wants_grad(ig), gb = wants_grad(ib);
            if (gx) ix->ensure_grad();
            if (gg) ig->ensure_grad();
            if (gb) ib->ensure_grad();
            for (int n = 0; n < N; ++n)
                for (int g = 0; g < groups; ++g) {
                    size_t base = (static_cast<size_t>(n) * C + static_cast<size_t>(g) * Cg) * hw;
                    float mean = means[static_cast<size_t>(n) * groups + g];
                    float istd = istds[static_cast<size_t>(n) * groups + g];
                    // dxhat and the two reduction terms for the group.
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int c = 0; c < Cg; ++c) {
                        int ch = g * Cg + c;
                        float gm = ig->data[static_cast<size_t>(ch)];
                        size_t cb = base + static_cast<size_t>(c) * hw;
                        for (size_t i = 0; i < hw; ++i) {
                            float xhat = (ix->data[cb + i] - mean) * istd;
                            float dy = out.grad[cb + i];
                            float dxhat = dy * gm;
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += static_cast<double>(dxhat) * xhat;
                            if (gg) ig->grad[static_cast<size_t>(ch)] += dy * xhat;
                            if (gb) ib->grad[static_cast<size_t>(ch)] += dy;
                        }
                    }
                    if (!gx) continue;
                    float m_dxhat = static_cast<float>(sum_dxhat / static_cast<double>(gsize));
                    float m_dxhat_xhat =
                        static_cast<float>(sum_dxhat_xhat / static_cast<double>(gsize));
                    for (int c = 0; c < Cg; ++c) {
                        int ch = g * Cg + c;
                        float gm = ig->data[static_cast<size_t>(ch)];
                        size_t cb = base + static_cast<size_t>(c) * hw;
                        for (size_t i = 0; i < hw; ++i) {
                            float xhat = (ix->data[cb + i] - mean) * istd;
                            float dxhat = out.grad[cb + i] * gm;
                            ix->grad[cb + i] +=
                                istd * (dxhat - m_dxhat - xhat * m_dxhat_xhat);
                        }
                    }
                }
        });
}

Tensor softmax_last(const Tensor& a) {
    check(!a.shape().empty(), Error::Kind::Shape, "softmax_last: rank 0");
    int L = a.shape().back();
    size_t rows = static_cast<size_t>(a.numel()) / L;
    std::vector<float> y(a.data().size());
    for (size_t r = 0; r < rows; ++r) {
        const float* xr = a.data().data() + r * L;
        float* yr = y.data() + r * L;
        float mx = xr[0];
        for (int j = 1; j < L; ++j) mx = std::max(mx, xr[j]);
        float s = 0.0f;
        for (int j = 0; j < L; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        float inv = 1.0f / s;
        for (int j = 0; j < L; ++j) yr[j] *= inv;
    }
    Impl ia = a.impl();
    return make_result(a.shape(), std::move(y), {a}, [ia, rows, L](TensorImpl& out) {
        for (size_t r = 0; r < rows; ++r) {
            const float* yr = out.data.data() + r * L;
            const float* gr = out.grad.data() + r * L;
            float dot = 0.0f;
            for (int j = 0; j < L; ++j) dot += yr[j] * gr[j];
            for (int j = 0; j < L; ++j) accum(ia, r * L + j, yr[j] * (gr[j] - dot));
        }
    });
}

Tensor upsample_nearest2(const Tensor& x) {
    require_rank("upsample_nearest2", x, 4);
    int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    std::vector<float> y(static_cast<size_t>(N) * C * 4 * H * W);
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    float v = x.data()[((static_cast<size_t>(n) * C + c) * H + i) * W + j];
                    size_t base = ((static_cast<size_t>(n) * C + c) * 2 * H + 2 * i) * 2 * W;
                    y[base + 2 * j] = v;
                    y[base + 2 * j + 1] = v;
                    y[base + 2 * W + 2 * j] = v;
                    y[base + 2 * W + 2 * j + 1] = v;
                }
    Impl ix = x.impl();
    return make_result({N, C, 2 * H, 2 * W}, std::move(y), {x}, [ix, N, C, H, W](TensorImpl& out) {
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < H; ++i)
                    for (int j = 0; j < W; ++j) {
                        size_t base = ((static_cast<size_t>(n) * C + c) * 2 * H + 2 * i) * 2 * W;
                        float g = out.grad[base + 2 * j] + out.grad[base + 2 * j + 1] +
                                  out.grad[base + 2 * W + 2 * j] +
                                  out.grad[base + 2 * W + 2 * j + 1];
                        accum(ix, ((static_cast<size_t>(n) * C + c) * H + i) * W + j, g);
                    }
    });
}

Tensor stack_batch(const std::vector<Tensor>& items, const std::vector<int>& idx) {
    check(!idx.empty(), Error::Kind::InvalidArg, "stack_batch: empty index list");
    const Tensor& first = items[static_cast<size_t>(idx[0])];
    std::vector<int> shape{static_cast<int>(idx.size())};
    for (int e : first.shape()) shape.push_back(e);
    Tensor out = Tensor::zeros(shape);
    size_t per = first.data().size();
    for (size_t k = 0; k < idx.size(); ++k) {
        const Tensor& it = items[static_cast<size_t>(idx[k])];
        check(it.shape() == first.shape(), Error::Kind::Shape, "stack_batch: ragged items");
        std::memcpy(out.data().data() + k * per, it.data().data(), per * sizeof(float));
    }
    return out;
}

Tensor batch_slice(const Tensor& x, int i) {
    check(!x.shape().empty() && i >= 0 && i < x.dim(0), Error::Kind::Shape,
          "batch_slice: index out of range");
    std::vector<int> shape = x.shape();
    shape[0] = 1;
    size_t per = x.data().size() / static_cast<size_t>(x.dim(0));
    std::vector<float> d(per);
    std::memcpy(d.data(), x.data().data() + static_cast<size_t>(i) * per, per * sizeof(float));
    return Tensor::from_data(shape, std::move(d));
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (float v : a.data()) s += v;
    float inv = 1.0f / static_cast<float>(a.numel());
    Impl ia = a.impl();
    return make_result({1}, {static_cast<float>(s) * inv}, {a}, [ia, inv](TensorImpl& out) {
        float g = out.grad[0] * inv;
        for (size_t i = 0; i < ia->data.size(); ++i) accum(ia, i, g);
    });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (float v : a.data()) s += v;
    Impl ia = a.impl();
    return make_result({1}, {static_cast<float>(s)}, {a}, [ia](TensorImpl& out) {
        float g = out.grad[0];
        for (size_t i = 0; i < ia->data.size(); ++i) accum(ia, i, g);
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require_same_shape("mse", a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i) {
        double d = static_cast<double>(a.data()[i]) - b.data()[i];
        s += d * d;
    }
    float inv = 1.0f / static_cast<float>(a.numel());
    Impl ia = a.impl(), ib = b.impl();
    return make_result({1}, {static_cast<float>(s) * inv}, {a, b}, [ia, ib, inv](TensorImpl& out) {
        float g = out.grad[0] * inv * 2.0f;
        for (size_t i = 0; i < ia->data.size(); ++i) {
            float d = ia->data[i] - ib->data[i];
            accum(ia, i, g * d);
            accum(ib, i, -g * d);
        }
    });
}

Tensor l1(const Tensor& a, const Tensor& b) {
    require_same_shape("l1", a, b);
    double s = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i)
        s += std::abs(static_cast<double>(a.data()[i]) - b.data()[i]);
    float inv = 1.0f / static_cast<float>(a.numel());
    Impl ia = a.impl(), ib = b.impl();
    return make_result({1}, {static_cast<float>(s) * inv}, {a, b}, [ia, ib, inv](TensorImpl& out) {
        float g = out.grad[0] * inv;
        for (size_t i = 0; i < ia->data.size(); ++i) {
            float d = ia->data[i] - ib->data[i];
            float sg = (d > 0.0f) ? 1.0f : (d < 0.0f ? -1.0f : 0.0f);
            accum(ia, i, g * sg);
            accum(ib, i, -g * sg);
        }
    });
}

}  // namespace toc
