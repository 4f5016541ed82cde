#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "toc/error.hpp"
#include "toc/rng.hpp"

namespace toc {

// Dense float32 tensor with an optional gradient buffer. Tensors are handles
// (shared ownership of the underlying buffer); ops record the backward
// closure on the result so reverse-mode AD falls out of the construction
// order.
struct TensorImpl {
    std::vector<int> shape;
    std::vector<float> data;
    std::vector<float> grad;  // same length as data once touched
    bool requires_grad = false;

    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backfn;  // accumulates into parents' grads
    uint64_t seq = 0;                         // execution order, for reverse traversal

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0f);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor randn(std::vector<int> shape, Rng& rng, float stddev = 1.0f,
                        bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::vector<float>& data() const { return impl_->data; }
    std::vector<float>& grad() const {
        impl_->ensure_grad();
        return impl_->grad;
    }
    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }
    void zero_grad() const { impl_->grad.assign(impl_->data.size(), 0.0f); }

    float scalar() const {
        check(numel() == 1, Error::Kind::Shape, "scalar() on tensor with numel != 1");
        return impl_->data[0];
    }

    // Copy values into a fresh leaf tensor (no graph history).
    Tensor detach() const { return from_data(impl_->shape, impl_->data, false); }
    Tensor clone_as_param() const { return from_data(impl_->shape, impl_->data, true); }

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Populates grad for every requires_grad tensor reachable from `loss`.
// Gradients accumulate additively; call zero_grad between steps.
void backward(const Tensor& loss);

// Global construction counter for reverse-order traversal.
uint64_t next_seq();

// Recording toggle: inference paths wrap work in NoGrad to skip taping.
bool grad_enabled();

class NoGrad {
public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

private:
    bool prev_;
};

}  // namespace toc
