#include "toc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace toc {

namespace {
std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;
}  // namespace

uint64_t next_seq() { return g_seq.fetch_add(1, std::memory_order_relaxed); }

bool grad_enabled() { return g_grad_enabled; }

NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGrad::~NoGrad() { g_grad_enabled = prev_; }

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        check(e >= 1, Error::Kind::Shape, "shape extent < 1");
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    auto impl = std::make_shared<TensorImpl>();
    impl->data.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
    impl->shape = std::move(shape);
    impl->requires_grad = requires_grad;
    impl->seq = next_seq();
    return Tensor(impl);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data().begin(), t.data().end(), value);
    return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    check(shape_numel(shape) == static_cast<int64_t>(data.size()), Error::Kind::Shape,
          "from_data: shape " + shape_str(shape) + " does not match data length");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    impl->seq = next_seq();
    return Tensor(impl);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, float stddev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = static_cast<float>(rng.normal() * stddev);
    return t;
}

void backward(const Tensor& loss) {
    check(loss.defined(), Error::Kind::InvalidArg, "backward: undefined tensor");
    check(loss.numel() == 1, Error::Kind::Shape,
          "backward: loss must be scalar, got " + shape_str(loss.shape()));

    // Collect reachable nodes, then replay in reverse execution order.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> seen;
    std::vector<std::shared_ptr<TensorImpl>> stack{loss.impl()};
    while (!stack.empty()) {
        auto node = stack.back();
        stack.pop_back();
        if (!seen.insert(node.get()).second) continue;
        order.push_back(node.get());
        for (auto& p : node->parents) stack.push_back(p);
    }
    std::sort(order.begin(), order.end(),
              [](const TensorImpl* a, const TensorImpl* b) { return a->seq > b->seq; });

    loss.impl()->ensure_grad();
    loss.impl()->grad[0] += 1.0f;
    for (TensorImpl* node : order) {
        if (node->backfn) {
            node->ensure_grad();
            node->backfn(*node);
        }
    }
}

}  // namespace toc
