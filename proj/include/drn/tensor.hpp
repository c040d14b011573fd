#pragma once
// Dense NCHW float tensors with a dynamic reverse-mode tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is how
// parameters are shared between a model and its optimizer. Every op that
// consumes a tensor with requires_grad() records a node; backward() walks the
// recorded nodes in reverse topological order exactly once.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace drn {

struct Shape {
    std::int64_t n = 0;
    std::int64_t c = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    [[nodiscard]] constexpr std::int64_t numel() const noexcept { return n * c * h * w; }
    [[nodiscard]] constexpr std::int64_t plane() const noexcept { return h * w; }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << '(' << s.n << ',' << s.c << ',' << s.h << ',' << s.w << ')';
    return os.str();
}

/// Raised by training code when a loss or gradient stops being finite.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct Node {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    float* grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
        return grad.data();
    }
};

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, float fill = 0.0f) : node_(std::make_shared<detail::Node>()) {
        if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
            throw std::invalid_argument("tensor shape has a negative dimension: " + to_string(shape));
        node_->shape = shape;
        node_->data.assign(static_cast<std::size_t>(shape.numel()), fill);
    }

    Tensor(Shape shape, std::vector<float> values) : node_(std::make_shared<detail::Node>()) {
        if (static_cast<std::int64_t>(values.size()) != shape.numel())
            throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                        " does not match shape " + to_string(shape));
        node_->shape = shape;
        node_->data = std::move(values);
    }

    [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
    [[nodiscard]] const Shape& shape() const { return node().shape; }
    [[nodiscard]] std::int64_t numel() const { return node().shape.numel(); }

    [[nodiscard]] std::span<const float> data() const { return node().data; }
    /// Direct write access; reserved for initialization and optimizer updates.
    [[nodiscard]] std::span<float> mutable_data() { return node().data; }

    [[nodiscard]] float operator[](std::size_t i) const { return node().data[i]; }
    [[nodiscard]] float at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        const Shape& s = shape();
        return node().data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
    }
    [[nodiscard]] float item() const {
        if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + to_string(shape()));
        return node().data[0];
    }

    [[nodiscard]] bool requires_grad() const { return defined() && node_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        node().requires_grad = on;
        return *this;
    }

    [[nodiscard]] bool has_grad() const { return defined() && !node_->grad.empty(); }
    /// Gradient buffer; empty span until a backward pass reached this tensor.
    [[nodiscard]] std::span<const float> grad() const { return node().grad; }
    void zero_grad() {
        auto& g = node().grad;
        std::fill(g.begin(), g.end(), 0.0f);
    }

    /// Copy of the values with no history.
    [[nodiscard]] Tensor detach() const { return Tensor(shape(), node().data); }

    [[nodiscard]] Tensor reshaped(Shape s) const {
        if (s.numel() != numel()) throw std::invalid_argument("reshape to " + to_string(s) + " changes element count");
        return Tensor(s, node().data);
    }

    [[nodiscard]] const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
    [[nodiscard]] static Tensor from_node(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    [[nodiscard]] detail::Node& node() const {
        if (!node_) throw std::logic_error("use of undefined tensor");
        return *node_;
    }

    std::shared_ptr<detail::Node> node_;
};

namespace detail {

/// Creates an op result and, when recording is on and any input tracks
/// gradients, attaches the backward closure.
inline Tensor make_result(Shape shape, std::vector<float> values, std::initializer_list<const Tensor*> inputs,
                          std::function<void(Node&)> backward) {
    Tensor out(shape, std::move(values));
    if (!grad_enabled()) return out;
    bool track = false;
    for (const Tensor* t : inputs) track = track || (t && t->requires_grad());
    if (!track) return out;
    auto& node = *out.node_ptr();
    node.requires_grad = true;
    for (const Tensor* t : inputs)
        if (t && t->defined()) node.inputs.push_back(t->node_ptr());
    node.backward = std::move(backward);
    return out;
}

}  // namespace detail

/// Runs reverse-mode differentiation from `root`, seeding its gradient with
/// `seed` (same element count). Leaves accumulate into their grad buffers;
/// interior nodes release their history afterwards.
inline void backward(const Tensor& output, std::span<const float> seed) {
    if (!output.requires_grad()) throw std::invalid_argument("backward() on a tensor with no recorded history");
    if (static_cast<std::int64_t>(seed.size()) != output.numel())
        throw std::invalid_argument("backward(): seed gradient size does not match " + to_string(output.shape()));
    auto root = output.node_ptr();
    if (root->consumed) throw std::logic_error("backward() called twice on the same tape");

    // order owns its nodes so releasing history below cannot free one that
    // is still waiting for its turn
    std::vector<std::shared_ptr<detail::Node>> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            std::shared_ptr<detail::Node> child = node->inputs[next++];
            if (child->requires_grad && !seen.count(child.get())) {
                seen.insert(child.get());
                stack.emplace_back(std::move(child), 0);
            }
        } else {
            order.push_back(std::move(node));
            stack.pop_back();
        }
    }

    float* root_grad = root->grad_buffer();
    for (std::size_t i = 0; i < seed.size(); ++i) root_grad[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = it->get();
        if (node->backward) {
            node->grad_buffer();
            node->backward(*node);
            node->backward = nullptr;
            node->inputs.clear();
            node->consumed = true;
        }
    }
}

/// Reverse-mode differentiation of a scalar loss.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw std::invalid_argument("backward() needs a scalar, got " + to_string(loss.shape()));
    const float one = 1.0f;
    backward(loss, std::span<const float>(&one, 1));
}

}  // namespace drn
