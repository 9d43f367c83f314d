#pragma once

// Reverse-mode differentiation over the closed set of kernels the model uses.
// A Tape records each executed kernel with its inputs; backward() replays the
// record in reverse, visiting every kernel exactly once. Tapes are not
// thread-safe: one tape per worker.

#include "dfdgcn/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dfdgcn {

struct Var {
	static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
	std::size_t id = npos;
	bool valid() const noexcept { return id != npos; }
};

class Tape {
public:
	using BackwardFn = std::function<void(Tape &, const Tensor &out_grad)>;

	Tape() = default;
	Tape(const Tape &) = delete;
	Tape &operator=(const Tape &) = delete;

	/// Value that never receives a gradient.
	Var constant(Tensor value);
	/// Constant referencing external storage, which must outlive the tape.
	Var reference(const Tensor &value);
	/// Leaf that receives a gradient (owned copy).
	Var input(Tensor value);
	/// Leaf referencing external parameter storage, which must outlive the
	/// tape. Its gradient is reported under `slot`.
	Var parameter(const Tensor &value, std::size_t slot);

	Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char *kernel);

	const Tensor &value(Var v) const;
	/// Gradient after backward(); a zero tensor when nothing flowed into `v`.
	Tensor grad(Var v) const;
	bool requires_grad(Var v) const;
	const char *kernel_name(Var v) const;

	/// Adds `g` into the gradient accumulator of `v` (no-op for constants).
	void accumulate(Var v, const Tensor &g);
	/// Mutable accumulator, allocated as zeros on first use. Only valid for
	/// values that require a gradient.
	Tensor &grad_buffer(Var v);

	/// Reverse sweep from a scalar loss. Throws when `loss` is not on this
	/// tape or is not a scalar.
	void backward(Var loss);

	/// Calls fn(slot, grad) for every parameter leaf that received a gradient.
	void for_each_parameter_grad(const std::function<void(std::size_t, const Tensor &)> &fn) const;

	/// Node ids in the order the last backward() visited them.
	const std::vector<std::size_t> &backward_order() const noexcept { return visit_order_; }

	std::size_t size() const noexcept { return nodes_.size(); }
	void clear();

	// Piecewise-linear kernels (relu, absolute loss) report their inputs here
	// so finite-difference checks can detect a perturbation crossing a kink.
	void set_track_kinks(bool on) noexcept { track_kinks_ = on; }
	bool tracking_kinks() const noexcept { return track_kinks_; }
	void observe_kinks(std::span<const double> pre_activation);
	std::uint64_t kink_signature() const noexcept { return kink_hash_; }
	double min_kink_distance() const noexcept { return min_kink_distance_; }

private:
	struct Node {
		Tensor value;
		const Tensor *ref = nullptr;
		Tensor grad;
		std::vector<Var> inputs;
		BackwardFn backward;
		const char *kernel = "leaf";
		std::size_t param_slot = Var::npos;
		bool requires_grad = false;
		bool has_grad = false;
	};

	const Node &node(Var v) const;
	Node &node(Var v);

	std::vector<Node> nodes_;
	std::vector<std::size_t> visit_order_;
	bool track_kinks_ = false;
	std::uint64_t kink_hash_ = 1469598103934665603ULL;
	double min_kink_distance_ = std::numeric_limits<double>::infinity();
};

/// Differentiable wrappers of the kernels in kernels.hpp plus the few
/// composite kernels the model needs (DFT features, masked loss).
namespace ad {

Var matmul(Tape &t, Var a, Var b);
Var transpose(Tape &t, Var m);
Var add(Tape &t, Var a, Var b);
Var mul(Tape &t, Var a, Var b);
Var scale(Tape &t, Var a, double s);
/// x * s + shift elementwise with constant scalars.
Var affine(Tape &t, Var x, double s, double shift);
Var relu(Tape &t, Var x);
Var sigmoid(Tape &t, Var x);
Var tanh(Tape &t, Var x);
Var softmax_rows(Tape &t, Var m);
Var concat(Tape &t, const std::vector<Var> &parts, std::size_t axis);
Var conv1x1(Tape &t, Var x, Var w, Var b);
Var dilated_causal_conv(Tape &t, Var x, Var w, Var b, std::size_t dilation);
Var node_mix(Tape &t, Var a, Var x);
Var pad_left(Tape &t, Var x, std::size_t length);
Var crop_last(Tape &t, Var x, std::size_t length);
Var gather_rows(Tape &t, Var table, std::vector<std::size_t> rows);
Var repeat_rows(Tape &t, Var row, std::size_t n);
Var reshape(Tape &t, Var x, Shape shape);
Var sum(Tape &t, Var x);

/// x [N, T] -> [N, 2(T/2+1)]: real parts of the one-sided DFT followed by
/// imaginary parts, per row.
Var dft_realimag(Tape &t, Var x);
/// x [N, T] -> [N, T/2+1]: shift-invariant DFT magnitudes per row.
Var dft_magnitude(Tape &t, Var x);

/// weight * sum over entries with target != 0 of |pred - target|.
Var masked_abs_sum(Tape &t, Var pred, const Tensor &target, double weight);

} // namespace ad

} // namespace dfdgcn
