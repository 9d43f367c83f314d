#include "dfdgcn/autodiff.hpp"

#include "dfdgcn/dft.hpp"
#include "dfdgcn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfdgcn {

// ---------------------------------------------------------------------------
// Tape

const Tape::Node &Tape::node(Var v) const {
	if (v.id >= nodes_.size())
		throw std::out_of_range("variable is not on this tape");
	return nodes_[v.id];
}

Tape::Node &Tape::node(Var v) {
	if (v.id >= nodes_.size())
		throw std::out_of_range("variable is not on this tape");
	return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
	Node n;
	n.value = std::move(value);
	n.kernel = "constant";
	nodes_.push_back(std::move(n));
	return Var{nodes_.size() - 1};
}

Var Tape::reference(const Tensor &value) {
	Node n;
	n.ref = &value;
	n.kernel = "constant";
	nodes_.push_back(std::move(n));
	return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
	Node n;
	n.value = std::move(value);
	n.kernel = "input";
	n.requires_grad = true;
	nodes_.push_back(std::move(n));
	return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Tensor &value, std::size_t slot) {
	Node n;
	n.ref = &value;
	n.kernel = "parameter";
	n.param_slot = slot;
	n.requires_grad = true;
	nodes_.push_back(std::move(n));
	return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char *kernel) {
	Node n;
	n.value = std::move(value);
	n.kernel = kernel;
	n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return node(v).requires_grad; });
	if (n.requires_grad) {
		n.inputs = std::move(inputs);
		n.backward = std::move(backward);
	}
	nodes_.push_back(std::move(n));
	return Var{nodes_.size() - 1};
}

const Tensor &Tape::value(Var v) const {
	const Node &n = node(v);
	return n.ref ? *n.ref : n.value;
}

Tensor Tape::grad(Var v) const {
	const Node &n = node(v);
	if (n.has_grad)
		return n.grad;
	return Tensor(value(v).shape());
}

bool Tape::requires_grad(Var v) const {
	return node(v).requires_grad;
}

const char *Tape::kernel_name(Var v) const {
	return node(v).kernel;
}

Tensor &Tape::grad_buffer(Var v) {
	Node &n = node(v);
	if (!n.has_grad) {
		n.grad = Tensor(value(v).shape());
		n.has_grad = true;
	}
	return n.grad;
}

void Tape::accumulate(Var v, const Tensor &g) {
	if (!node(v).requires_grad)
		return;
	Tensor &buf = grad_buffer(v);
	if (buf.shape() != g.shape())
		throw std::logic_error(std::string("gradient shape ") + shape_string(g.shape()) + " does not match value " +
		                       shape_string(buf.shape()));
	for (std::size_t i = 0; i < buf.size(); ++i)
		buf[i] += g[i];
}

void Tape::backward(Var loss) {
	if (loss.id >= nodes_.size())
		throw std::invalid_argument("backward: loss is not on this tape");
	if (value(loss).size() != 1)
		throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(value(loss).shape()));
	for (auto &n : nodes_) {
		n.has_grad = false;
		n.grad = Tensor();
	}
	visit_order_.clear();
	if (!nodes_[loss.id].requires_grad)
		return;
	grad_buffer(loss)[0] = 1.0;
	for (std::size_t i = loss.id + 1; i-- > 0;) {
		Node &n = nodes_[i];
		if (!n.has_grad || !n.backward)
			continue;
		visit_order_.push_back(i);
		// Copy out: the backward function may grow other accumulators.
		const Tensor g = n.grad;
		n.backward(*this, g);
	}
}

void Tape::for_each_parameter_grad(const std::function<void(std::size_t, const Tensor &)> &fn) const {
	for (const auto &n : nodes_)
		if (n.param_slot != Var::npos && n.has_grad)
			fn(n.param_slot, n.grad);
}

void Tape::clear() {
	nodes_.clear();
	visit_order_.clear();
	kink_hash_ = 1469598103934665603ULL;
	min_kink_distance_ = std::numeric_limits<double>::infinity();
}

void Tape::observe_kinks(std::span<const double> pre_activation) {
	if (!track_kinks_)
		return;
	for (double v : pre_activation) {
		kink_hash_ ^= (v > 0.0 ? 0x9e3779b97f4a7c15ULL : 0x7f4a7c159e3779b9ULL);
		kink_hash_ *= 1099511628211ULL;
		min_kink_distance_ = std::min(min_kink_distance_, std::abs(v));
	}
}

// ---------------------------------------------------------------------------
// Differentiable kernels

namespace ad {

Var matmul(Tape &t, Var a, Var b) {
	Tensor out = kernels::matmul(t.value(a), t.value(b));
	return t.record(std::move(out), {a, b},
	                [a, b](Tape &tp, const Tensor &g) {
		                const Tensor &av = tp.value(a);
		                const Tensor &bv = tp.value(b);
		                const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
		                if (tp.requires_grad(a))
			                kernels::gemm(false, true, m, k, n, 1.0, g.data().data(), bv.data().data(),
			                              tp.grad_buffer(a).data().data());
		                if (tp.requires_grad(b))
			                kernels::gemm(true, false, k, n, m, 1.0, av.data().data(), g.data().data(),
			                              tp.grad_buffer(b).data().data());
	                },
	                "matmul");
}

Var transpose(Tape &t, Var m) {
	return t.record(kernels::transpose(t.value(m)), {m},
	                [m](Tape &tp, const Tensor &g) { tp.accumulate(m, kernels::transpose(g)); }, "transpose");
}

Var add(Tape &t, Var a, Var b) {
	return t.record(kernels::add(t.value(a), t.value(b)), {a, b},
	                [a, b](Tape &tp, const Tensor &g) {
		                tp.accumulate(a, g);
		                tp.accumulate(b, g);
	                },
	                "add");
}

Var mul(Tape &t, Var a, Var b) {
	return t.record(kernels::mul(t.value(a), t.value(b)), {a, b},
	                [a, b](Tape &tp, const Tensor &g) {
		                if (tp.requires_grad(a))
			                tp.accumulate(a, kernels::mul(g, tp.value(b)));
		                if (tp.requires_grad(b))
			                tp.accumulate(b, kernels::mul(g, tp.value(a)));
	                },
	                "mul");
}

Var scale(Tape &t, Var a, double s) {
	return t.record(kernels::scale(t.value(a), s), {a},
	                [a, s](Tape &tp, const Tensor &g) { tp.accumulate(a, kernels::scale(g, s)); }, "scale");
}

Var affine(Tape &t, Var x, double s, double shift) {
	Tensor out = t.value(x);
	for (auto &v : out.data())
		v = v * s + shift;
	out.require_finite("affine");
	return t.record(std::move(out), {x}, [x, s](Tape &tp, const Tensor &g) { tp.accumulate(x, kernels::scale(g, s)); },
	                "affine");
}

Var relu(Tape &t, Var x) {
	t.observe_kinks(t.value(x).data());
	return t.record(kernels::relu(t.value(x)), {x},
	                [x](Tape &tp, const Tensor &g) {
		                const Tensor &xv = tp.value(x);
		                Tensor &dx = tp.grad_buffer(x);
		                for (std::size_t i = 0; i < g.size(); ++i)
			                if (xv[i] > 0.0)
				                dx[i] += g[i];
	                },
	                "relu");
}

Var sigmoid(Tape &t, Var x) {
	Tensor y = kernels::sigmoid(t.value(x));
	const std::size_t self = t.size();
	return t.record(std::move(y), {x},
	                [x, self](Tape &tp, const Tensor &g) {
		                const Tensor &yv = tp.value(Var{self});
		                Tensor &dx = tp.grad_buffer(x);
		                for (std::size_t i = 0; i < g.size(); ++i)
			                dx[i] += g[i] * yv[i] * (1.0 - yv[i]);
	                },
	                "sigmoid");
}

Var tanh(Tape &t, Var x) {
	Tensor y = kernels::tanh(t.value(x));
	const std::size_t self = t.size();
	return t.record(std::move(y), {x},
	                [x, self](Tape &tp, const Tensor &g) {
		                const Tensor &yv = tp.value(Var{self});
		                Tensor &dx = tp.grad_buffer(x);
		                for (std::size_t i = 0; i < g.size(); ++i)
			                dx[i] += g[i] * (1.0 - yv[i] * yv[i]);
	                },
	                "tanh");
}

Var softmax_rows(Tape &t, Var m) {
	Tensor y = kernels::softmax_rows(t.value(m));
	const std::size_t self = t.size();
	return t.record(std::move(y), {m},
	                [m, self](Tape &tp, const Tensor &g) {
		                const Tensor &yv = tp.value(Var{self});
		                Tensor &dx = tp.grad_buffer(m);
		                const std::size_t rows = yv.dim(0), cols = yv.dim(1);
		                for (std::size_t i = 0; i < rows; ++i) {
			                double dot = 0.0;
			                for (std::size_t j = 0; j < cols; ++j)
				                dot += g.at(i, j) * yv.at(i, j);
			                for (std::size_t j = 0; j < cols; ++j)
				                dx.at(i, j) += yv.at(i, j) * (g.at(i, j) - dot);
		                }
	                },
	                "softmax_rows");
}

Var concat(Tape &t, const std::vector<Var> &parts, std::size_t axis) {
	std::vector<Tensor> values;
	values.reserve(parts.size());
	for (Var p : parts)
		values.push_back(t.value(p));
	Tensor out = kernels::concat(values, axis);
	return t.record(std::move(out), parts,
	                [parts, axis](Tape &tp, const Tensor &g) {
		                const Shape &shape = g.shape();
		                std::size_t outer = 1, inner = 1;
		                for (std::size_t d = 0; d < axis; ++d)
			                outer *= shape[d];
		                for (std::size_t d = axis + 1; d < shape.size(); ++d)
			                inner *= shape[d];
		                const std::size_t stride = shape[axis] * inner;
		                std::size_t offset = 0;
		                for (Var p : parts) {
			                const std::size_t block = tp.value(p).dim(axis) * inner;
			                if (tp.requires_grad(p)) {
				                Tensor &dp = tp.grad_buffer(p);
				                for (std::size_t o = 0; o < outer; ++o)
					                for (std::size_t i = 0; i < block; ++i)
						                dp[o * block + i] += g[o * stride + offset + i];
			                }
			                offset += block;
		                }
	                },
	                "concat");
}

Var conv1x1(Tape &t, Var x, Var w, Var b) {
	static const Tensor no_bias;
	const Tensor &bias = b.valid() ? t.value(b) : no_bias;
	Tensor out = kernels::conv1x1(t.value(x), t.value(w), bias);
	std::vector<Var> inputs{x, w};
	if (b.valid())
		inputs.push_back(b);
	return t.record(std::move(out), inputs,
	                [x, w, b](Tape &tp, const Tensor &g) {
		                const Tensor &xv = tp.value(x);
		                const Tensor &wv = tp.value(w);
		                const std::size_t cout = wv.dim(0), cin = wv.dim(1), cols = xv.size() / cin;
		                if (tp.requires_grad(w))
			                kernels::gemm(false, true, cout, cin, cols, 1.0, g.data().data(), xv.data().data(),
			                              tp.grad_buffer(w).data().data());
		                if (tp.requires_grad(x))
			                kernels::gemm(true, false, cin, cols, cout, 1.0, wv.data().data(), g.data().data(),
			                              tp.grad_buffer(x).data().data());
		                if (b.valid() && tp.requires_grad(b)) {
			                Tensor &db = tp.grad_buffer(b);
			                for (std::size_t o = 0; o < cout; ++o) {
				                double s = 0.0;
				                for (std::size_t i = 0; i < cols; ++i)
					                s += g[o * cols + i];
				                db[o] += s;
			                }
		                }
	                },
	                "conv1x1");
}

Var dilated_causal_conv(Tape &t, Var x, Var w, Var b, std::size_t dilation) {
	static const Tensor no_bias;
	const Tensor &bias = b.valid() ? t.value(b) : no_bias;
	Tensor out = kernels::dilated_causal_conv(t.value(x), t.value(w), bias, dilation);
	std::vector<Var> inputs{x, w};
	if (b.valid())
		inputs.push_back(b);
	return t.record(std::move(out), inputs,
	                [x, w, b, dilation](Tape &tp, const Tensor &g) {
		                const Tensor &xv = tp.value(x);
		                const Tensor &wv = tp.value(w);
		                const std::size_t cin = wv.dim(1), cout = wv.dim(0), k = wv.dim(2);
		                const std::size_t t_in = xv.shape().back(), t_out = g.shape().back();
		                const std::size_t series = xv.size() / (cin * t_in);
		                const bool need_x = tp.requires_grad(x), need_w = tp.requires_grad(w);
		                Tensor *dx = need_x ? &tp.grad_buffer(x) : nullptr;
		                Tensor *dw = need_w ? &tp.grad_buffer(w) : nullptr;
		                for (std::size_t o = 0; o < cout; ++o)
			                for (std::size_t m = 0; m < series; ++m) {
				                const double *grow = g.data().data() + (o * series + m) * t_out;
				                for (std::size_t c = 0; c < cin; ++c) {
					                const std::size_t xoff = (c * series + m) * t_in;
					                for (std::size_t j = 0; j < k; ++j) {
						                const std::size_t shift = j * dilation;
						                if (dw) {
							                const double *src = xv.data().data() + xoff + shift;
							                double s = 0.0;
							                for (std::size_t tt = 0; tt < t_out; ++tt)
								                s += grow[tt] * src[tt];
							                dw->at(o, c, j) += s;
						                }
						                if (dx) {
							                const double wvj = wv.at(o, c, j);
							                double *dst = dx->data().data() + xoff + shift;
							                for (std::size_t tt = 0; tt < t_out; ++tt)
								                dst[tt] += wvj * grow[tt];
						                }
					                }
				                }
			                }
		                if (b.valid() && tp.requires_grad(b)) {
			                Tensor &db = tp.grad_buffer(b);
			                const std::size_t block = series * t_out;
			                for (std::size_t o = 0; o < cout; ++o) {
				                double s = 0.0;
				                for (std::size_t i = 0; i < block; ++i)
					                s += g[o * block + i];
				                db[o] += s;
			                }
		                }
	                },
	                "dilated_causal_conv");
}

Var node_mix(Tape &t, Var a, Var x) {
	Tensor out = kernels::node_mix(t.value(a), t.value(x));
	return t.record(std::move(out), {a, x},
	                [a, x](Tape &tp, const Tensor &g) {
		                const Tensor &av = tp.value(a);
		                const Tensor &xv = tp.value(x);
		                const std::size_t c = xv.dim(0), n = xv.dim(1), len = xv.dim(2);
		                for (std::size_t ch = 0; ch < c; ++ch) {
			                const double *gch = g.data().data() + ch * n * len;
			                if (tp.requires_grad(a))
				                kernels::gemm(false, true, n, n, len, 1.0, gch, xv.data().data() + ch * n * len,
				                              tp.grad_buffer(a).data().data());
			                if (tp.requires_grad(x))
				                kernels::gemm(true, false, n, len, n, 1.0, av.data().data(), gch,
				                              tp.grad_buffer(x).data().data() + ch * n * len);
		                }
	                },
	                "node_mix");
}

Var pad_left(Tape &t, Var x, std::size_t length) {
	Tensor out = kernels::pad_left(t.value(x), length);
	return t.record(std::move(out), {x},
	                [x](Tape &tp, const Tensor &g) {
		                const std::size_t len = tp.value(x).shape().back();
		                tp.accumulate(x, kernels::crop_last(g, len));
	                },
	                "pad_left");
}

Var crop_last(Tape &t, Var x, std::size_t length) {
	Tensor out = kernels::crop_last(t.value(x), length);
	return t.record(std::move(out), {x},
	                [x](Tape &tp, const Tensor &g) {
		                const std::size_t len = tp.value(x).shape().back();
		                tp.accumulate(x, kernels::pad_left(g, len));
	                },
	                "crop_last");
}

Var gather_rows(Tape &t, Var table, std::vector<std::size_t> rows) {
	Tensor out = kernels::gather_rows(t.value(table), rows);
	return t.record(std::move(out), {table},
	                [table, rows = std::move(rows)](Tape &tp, const Tensor &g) {
		                Tensor &dt = tp.grad_buffer(table);
		                const std::size_t d = g.dim(1);
		                for (std::size_t i = 0; i < rows.size(); ++i)
			                for (std::size_t j = 0; j < d; ++j)
				                dt.at(rows[i], j) += g.at(i, j);
	                },
	                "gather_rows");
}

Var repeat_rows(Tape &t, Var row, std::size_t n) {
	Tensor out = kernels::repeat_rows(t.value(row), n);
	return t.record(std::move(out), {row},
	                [row](Tape &tp, const Tensor &g) {
		                Tensor &dr = tp.grad_buffer(row);
		                const std::size_t d = g.dim(1);
		                for (std::size_t i = 0; i < g.dim(0); ++i)
			                for (std::size_t j = 0; j < d; ++j)
				                dr[j] += g.at(i, j);
	                },
	                "repeat_rows");
}

Var reshape(Tape &t, Var x, Shape shape) {
	Tensor out = t.value(x).reshaped(std::move(shape));
	return t.record(std::move(out), {x},
	                [x](Tape &tp, const Tensor &g) {
		                Tensor &dx = tp.grad_buffer(x);
		                for (std::size_t i = 0; i < g.size(); ++i)
			                dx[i] += g[i];
	                },
	                "reshape");
}

Var sum(Tape &t, Var x) {
	return t.record(Tensor::scalar(kernels::sum(t.value(x))), {x},
	                [x](Tape &tp, const Tensor &g) {
		                Tensor &dx = tp.grad_buffer(x);
		                for (auto &v : dx.data())
			                v += g[0];
	                },
	                "sum");
}

Var dft_realimag(Tape &t, Var x) {
	const Tensor &xv = t.value(x);
	if (xv.rank() != 2)
		throw std::invalid_argument("dft_realimag: expected [N, T], got " + shape_string(xv.shape()));
	const std::size_t n = xv.dim(0), len = xv.dim(1), bins = len / 2 + 1;
	Tensor out({n, 2 * bins});
	for (std::size_t i = 0; i < n; ++i) {
		const ComplexSpectrum s = dft_real(xv.data().subspan(i * len, len));
		for (std::size_t k = 0; k < bins; ++k) {
			out.at(i, k) = s.re[k];
			out.at(i, bins + k) = s.im[k];
		}
	}
	out.require_finite("dft_realimag");
	return t.record(std::move(out), {x},
	                [x](Tape &tp, const Tensor &g) {
		                Tensor &dx = tp.grad_buffer(x);
		                const std::size_t n = dx.dim(0), len = dx.dim(1), bins = len / 2 + 1;
		                for (std::size_t i = 0; i < n; ++i)
			                for (std::size_t k = 0; k < bins; ++k) {
				                const double gre = g.at(i, k);
				                // Imaginary parts forced to zero carry no gradient.
				                const bool im_pinned = k == 0 || (len % 2 == 0 && k == bins - 1);
				                const double gim = im_pinned ? 0.0 : g.at(i, bins + k);
				                for (std::size_t tt = 0; tt < len; ++tt) {
					                const auto w = twiddle(k, tt, len);
					                dx.at(i, tt) += gre * w.real() + gim * w.imag();
				                }
			                }
	                },
	                "dft_realimag");
}

Var dft_magnitude(Tape &t, Var x) {
	const Tensor &xv = t.value(x);
	if (xv.rank() != 2)
		throw std::invalid_argument("dft_magnitude: expected [N, T], got " + shape_string(xv.shape()));
	const std::size_t n = xv.dim(0), len = xv.dim(1), bins = len / 2 + 1;
	Tensor out({n, bins});
	for (std::size_t i = 0; i < n; ++i) {
		const auto mag = shift_invariant_magnitude(xv.data().subspan(i * len, len));
		std::copy(mag.begin(), mag.end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * bins));
	}
	out.require_finite("dft_magnitude");
	return t.record(std::move(out), {x},
	                [x](Tape &tp, const Tensor &g) {
		                const Tensor &xv = tp.value(x);
		                Tensor &dx = tp.grad_buffer(x);
		                const std::size_t n = xv.dim(0), len = xv.dim(1);
		                for (std::size_t i = 0; i < n; ++i) {
			                const ComplexSpectrum s = dft_real(xv.data().subspan(i * len, len));
			                for (std::size_t k = 0; k < s.bins(); ++k) {
				                const double mag = std::hypot(s.re[k], s.im[k]);
				                if (mag < 1e-300)
					                continue;
				                const double gk = g.at(i, k) / mag;
				                for (std::size_t tt = 0; tt < len; ++tt) {
					                const auto w = twiddle(k, tt, len);
					                dx.at(i, tt) += gk * (s.re[k] * w.real() + s.im[k] * w.imag());
				                }
			                }
		                }
	                },
	                "dft_magnitude");
}

Var masked_abs_sum(Tape &t, Var pred, const Tensor &target, double weight) {
	const Tensor &pv = t.value(pred);
	if (pv.shape() != target.shape())
		throw std::invalid_argument("masked_abs_sum: incompatible shapes " + shape_string(pv.shape()) + " and " +
		                            shape_string(target.shape()));
	double s = 0.0;
	std::vector<double> residuals;
	residuals.reserve(pv.size());
	for (std::size_t i = 0; i < pv.size(); ++i) {
		if (target[i] == 0.0)
			continue;
		const double r = pv[i] - target[i];
		residuals.push_back(r);
		s += std::abs(r);
	}
	t.observe_kinks(residuals);
	Tensor out = Tensor::scalar(weight * s);
	out.require_finite("masked_abs_sum");
	return t.record(std::move(out), {pred},
	                [pred, target, weight](Tape &tp, const Tensor &g) {
		                const Tensor &pv = tp.value(pred);
		                Tensor &dp = tp.grad_buffer(pred);
		                for (std::size_t i = 0; i < pv.size(); ++i) {
			                if (target[i] == 0.0)
				                continue;
			                const double r = pv[i] - target[i];
			                if (r > 0.0)
				                dp[i] += weight * g[0];
			                else if (r < 0.0)
				                dp[i] -= weight * g[0];
		                }
	                },
	                "masked_abs_sum");
}

} // namespace ad

} // namespace dfdgcn
