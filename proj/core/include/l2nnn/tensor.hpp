// Copyright 2026 The l2nnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2nnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Raised by any op whose operand shapes do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array. Copies are shallow handles onto the same
/// storage; use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<double> data() { return impl_->data; }
    std::span<const double> data() const { return impl_->data; }
    double item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on);

    /// Gradient buffer; empty until a backward pass touched this tensor.
    std::span<const double> grad() const { return impl_->grad; }
    /// Handles are shallow, so a const handle may still write the shared
    /// gradient buffer.
    std::span<double> grad_mut() const;
    void zero_grad() const;

    Tensor clone() const;
    /// Deep copy cut off from any tape.
    Tensor detach() const { return clone().set_requires_grad(false); }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of primitive operations. Operands always precede results
/// because records are appended as ops execute.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

    /// Overwrites (never accumulates) the grad of every tensor on the tape
    /// with d(loss)/d(tensor). Loss must be a scalar.
    void backward(const Tensor& loss);

    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

private:
    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
};

/// The tape ops record onto in the current thread, or nullptr.
Tape* active_tape();

class TapeGuard {
public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* previous_;
};

/// Suspends recording for the current scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape* previous_;
};

/// Builds the result of a primitive. When a tape is active and any input
/// requires grad, the result is marked as requiring grad and `backward` is
/// recorded. `backward` receives the result so it can read result.grad().
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(const Tensor& result)> backward);

}  // namespace l2nnn
