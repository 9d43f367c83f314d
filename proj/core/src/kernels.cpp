#include "dfdgcn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dfdgcn::kernels {

namespace {

[[noreturn]] void shape_error(const char *op, const Shape &a, const Shape &b) {
	throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
	                            shape_string(b));
}

void require_rank(const char *op, const Tensor &t, std::size_t rank) {
	if (t.rank() != rank) {
		throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
		                            shape_string(t.shape()));
	}
}

Tensor checked(Tensor t, const char *op) {
	t.require_finite(op);
	return t;
}

} // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, double alpha, const double *a,
          const double *b, double *c) {
	if (!trans_a && !trans_b) {
		for (std::size_t i = 0; i < m; ++i) {
			double *crow = c + i * n;
			for (std::size_t p = 0; p < k; ++p) {
				const double av = alpha * a[i * k + p];
				const double *brow = b + p * n;
				for (std::size_t j = 0; j < n; ++j)
					crow[j] += av * brow[j];
			}
		}
	} else if (trans_a && !trans_b) {
		// A stored k x m
		for (std::size_t p = 0; p < k; ++p) {
			const double *arow = a + p * m;
			const double *brow = b + p * n;
			for (std::size_t i = 0; i < m; ++i) {
				const double av = alpha * arow[i];
				double *crow = c + i * n;
				for (std::size_t j = 0; j < n; ++j)
					crow[j] += av * brow[j];
			}
		}
	} else if (!trans_a && trans_b) {
		// B stored n x k
		for (std::size_t i = 0; i < m; ++i) {
			const double *arow = a + i * k;
			for (std::size_t j = 0; j < n; ++j) {
				const double *brow = b + j * k;
				double s = 0.0;
				for (std::size_t p = 0; p < k; ++p)
					s += arow[p] * brow[p];
				c[i * n + j] += alpha * s;
			}
		}
	} else {
		for (std::size_t i = 0; i < m; ++i)
			for (std::size_t j = 0; j < n; ++j) {
				double s = 0.0;
				for (std::size_t p = 0; p < k; ++p)
					s += a[p * m + i] * b[j * k + p];
				c[i * n + j] += alpha * s;
			}
	}
}

Tensor matmul(const Tensor &a, const Tensor &b) {
	if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
		shape_error("matmul", a.shape(), b.shape());
	Tensor out({a.dim(0), b.dim(1)});
	gemm(false, false, a.dim(0), b.dim(1), a.dim(1), 1.0, a.data().data(), b.data().data(), out.data().data());
	return checked(std::move(out), "matmul");
}

Tensor transpose(const Tensor &m) {
	require_rank("transpose", m, 2);
	const std::size_t r = m.dim(0), c = m.dim(1);
	Tensor out({c, r});
	for (std::size_t i = 0; i < r; ++i)
		for (std::size_t j = 0; j < c; ++j)
			out.at(j, i) = m.at(i, j);
	return out;
}

Tensor add(const Tensor &a, const Tensor &b) {
	if (a.shape() != b.shape())
		shape_error("add", a.shape(), b.shape());
	Tensor out = a;
	for (std::size_t i = 0; i < out.size(); ++i)
		out[i] += b[i];
	return checked(std::move(out), "add");
}

Tensor mul(const Tensor &a, const Tensor &b) {
	if (a.shape() != b.shape())
		shape_error("mul", a.shape(), b.shape());
	Tensor out = a;
	for (std::size_t i = 0; i < out.size(); ++i)
		out[i] *= b[i];
	return checked(std::move(out), "mul");
}

Tensor scale(const Tensor &a, double s) {
	Tensor out = a;
	for (auto &v : out.data())
		v *= s;
	return checked(std::move(out), "scale");
}

Tensor relu(const Tensor &t) {
	Tensor out = t;
	for (auto &v : out.data())
		v = v > 0.0 ? v : 0.0;
	return checked(std::move(out), "relu");
}

Tensor sigmoid(const Tensor &t) {
	Tensor out = t;
	for (auto &v : out.data())
		v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
	return checked(std::move(out), "sigmoid");
}

Tensor tanh(const Tensor &t) {
	Tensor out = t;
	for (auto &v : out.data())
		v = std::tanh(v);
	return checked(std::move(out), "tanh");
}

Tensor softmax_rows(const Tensor &m) {
	require_rank("softmax_rows", m, 2);
	m.require_finite("softmax_rows input");
	const std::size_t rows = m.dim(0), cols = m.dim(1);
	Tensor out({rows, cols});
	for (std::size_t i = 0; i < rows; ++i) {
		const double *in = m.data().data() + i * cols;
		double *o = out.data().data() + i * cols;
		const double mx = *std::max_element(in, in + cols);
		double z = 0.0;
		for (std::size_t j = 0; j < cols; ++j) {
			o[j] = std::exp(in[j] - mx);
			z += o[j];
		}
		for (std::size_t j = 0; j < cols; ++j)
			o[j] /= z;
	}
	return out;
}

Tensor concat(const std::vector<Tensor> &ts, std::size_t axis) {
	if (ts.empty())
		throw std::invalid_argument("concat: no inputs");
	const Shape &ref = ts.front().shape();
	if (axis >= ref.size())
		throw std::invalid_argument("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(ref));
	Shape out_shape = ref;
	out_shape[axis] = 0;
	for (const auto &t : ts) {
		if (t.rank() != ref.size())
			shape_error("concat", ref, t.shape());
		for (std::size_t d = 0; d < ref.size(); ++d)
			if (d != axis && t.dim(d) != ref[d])
				shape_error("concat", ref, t.shape());
		out_shape[axis] += t.dim(axis);
	}
	std::size_t outer = 1, inner = 1;
	for (std::size_t d = 0; d < axis; ++d)
		outer *= ref[d];
	for (std::size_t d = axis + 1; d < ref.size(); ++d)
		inner *= ref[d];
	Tensor out(out_shape);
	const std::size_t out_stride = out_shape[axis] * inner;
	std::size_t offset = 0;
	for (const auto &t : ts) {
		const std::size_t block = t.dim(axis) * inner;
		for (std::size_t o = 0; o < outer; ++o)
			std::copy_n(t.data().data() + o * block, block, out.data().data() + o * out_stride + offset);
		offset += block;
	}
	return out;
}

Tensor conv1x1(const Tensor &x, const Tensor &w, const Tensor &b) {
	if (x.rank() < 1 || w.rank() != 2 || w.dim(1) != x.dim(0))
		shape_error("conv1x1", x.shape(), w.shape());
	if (!b.empty() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
		shape_error("conv1x1", w.shape(), b.shape());
	const std::size_t cout = w.dim(0), cin = w.dim(1), cols = x.size() / cin;
	Shape shape = x.shape();
	shape[0] = cout;
	Tensor out(shape);
	if (!b.empty())
		for (std::size_t o = 0; o < cout; ++o)
			std::fill_n(out.data().data() + o * cols, cols, b[o]);
	gemm(false, false, cout, cols, cin, 1.0, w.data().data(), x.data().data(), out.data().data());
	return checked(std::move(out), "conv1x1");
}

Tensor dilated_causal_conv(const Tensor &x, const Tensor &w, const Tensor &b, std::size_t dilation) {
	if (dilation < 1)
		throw std::invalid_argument("dilated_causal_conv: dilation must be >= 1");
	if (x.rank() < 2 || w.rank() != 3 || w.dim(1) != x.dim(0))
		shape_error("dilated_causal_conv", x.shape(), w.shape());
	if (!b.empty() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
		shape_error("dilated_causal_conv", w.shape(), b.shape());
	const std::size_t cin = x.dim(0), cout = w.dim(0), k = w.dim(2);
	const std::size_t t_in = x.shape().back();
	const std::size_t span = dilation * (k - 1);
	if (t_in <= span)
		throw std::invalid_argument("dilated_causal_conv: sequence of length " + std::to_string(t_in) +
		                            " shorter than receptive field " + std::to_string(span + 1));
	const std::size_t t_out = t_in - span;
	const std::size_t series = x.size() / (cin * t_in);
	Shape shape = x.shape();
	shape[0] = cout;
	shape.back() = t_out;
	Tensor out(shape);
	const double *xd = x.data().data();
	double *od = out.data().data();
	for (std::size_t o = 0; o < cout; ++o) {
		const double bias = b.empty() ? 0.0 : b[o];
		for (std::size_t m = 0; m < series; ++m) {
			double *orow = od + (o * series + m) * t_out;
			std::fill_n(orow, t_out, bias);
			for (std::size_t c = 0; c < cin; ++c) {
				const double *xrow = xd + (c * series + m) * t_in;
				for (std::size_t j = 0; j < k; ++j) {
					const double wv = w.at(o, c, j);
					const double *src = xrow + j * dilation;
					for (std::size_t t = 0; t < t_out; ++t)
						orow[t] += wv * src[t];
				}
			}
		}
	}
	return checked(std::move(out), "dilated_causal_conv");
}

Tensor node_mix(const Tensor &a, const Tensor &x) {
	if (a.rank() != 2 || a.dim(0) != a.dim(1) || x.rank() != 3 || x.dim(1) != a.dim(0))
		shape_error("node_mix", a.shape(), x.shape());
	const std::size_t c = x.dim(0), n = x.dim(1), t = x.dim(2);
	Tensor out(x.shape());
	for (std::size_t ch = 0; ch < c; ++ch)
		gemm(false, false, n, t, n, 1.0, a.data().data(), x.data().data() + ch * n * t, out.data().data() + ch * n * t);
	return checked(std::move(out), "node_mix");
}

Tensor pad_left(const Tensor &x, std::size_t length) {
	if (x.rank() < 1)
		throw std::invalid_argument("pad_left: scalar input");
	const std::size_t t = x.shape().back();
	if (length < t)
		throw std::invalid_argument("pad_left: target length " + std::to_string(length) + " below current " +
		                            std::to_string(t));
	Shape shape = x.shape();
	shape.back() = length;
	Tensor out(shape);
	const std::size_t rows = x.size() / t;
	for (std::size_t r = 0; r < rows; ++r)
		std::copy_n(x.data().data() + r * t, t, out.data().data() + r * length + (length - t));
	return out;
}

Tensor crop_last(const Tensor &x, std::size_t length) {
	if (x.rank() < 1)
		throw std::invalid_argument("crop_last: scalar input");
	const std::size_t t = x.shape().back();
	if (length > t)
		throw std::invalid_argument("crop_last: length " + std::to_string(length) + " exceeds " + std::to_string(t));
	Shape shape = x.shape();
	shape.back() = length;
	Tensor out(shape);
	const std::size_t rows = x.size() / t;
	for (std::size_t r = 0; r < rows; ++r)
		std::copy_n(x.data().data() + r * t + (t - length), length, out.data().data() + r * length);
	return out;
}

Tensor gather_rows(const Tensor &table, std::span<const std::size_t> rows) {
	require_rank("gather_rows", table, 2);
	const std::size_t d = table.dim(1);
	Tensor out({rows.size(), d});
	for (std::size_t i = 0; i < rows.size(); ++i) {
		if (rows[i] >= table.dim(0))
			throw std::out_of_range("gather_rows: row " + std::to_string(rows[i]) + " outside table of " +
			                        std::to_string(table.dim(0)));
		std::copy_n(table.data().data() + rows[i] * d, d, out.data().data() + i * d);
	}
	return out;
}

Tensor repeat_rows(const Tensor &row, std::size_t n) {
	if (row.rank() != 2 || row.dim(0) != 1)
		throw std::invalid_argument("repeat_rows: expected [1, D], got " + shape_string(row.shape()));
	const std::size_t d = row.dim(1);
	Tensor out({n, d});
	for (std::size_t i = 0; i < n; ++i)
		std::copy_n(row.data().data(), d, out.data().data() + i * d);
	return out;
}

double sum(const Tensor &t) {
	double s = 0.0;
	for (double v : t.data())
		s += v;
	return s;
}

std::vector<double> circular_shift(std::span<const double> x, long s) {
	const long n = static_cast<long>(x.size());
	std::vector<double> out(x.size());
	if (n == 0)
		return out;
	for (long t = 0; t < n; ++t) {
		long src = (t - s) % n;
		if (src < 0)
			src += n;
		out[static_cast<std::size_t>(t)] = x[static_cast<std::size_t>(src)];
	}
	return out;
}

} // namespace dfdgcn::kernels
