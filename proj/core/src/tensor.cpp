#include "dfdgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

std::string shape_string(const Shape &shape) {
	std::ostringstream os;
	os << '[';
	for (std::size_t i = 0; i < shape.size(); ++i) {
		if (i)
			os << ", ";
		os << shape[i];
	}
	os << ']';
	return os.str();
}

std::size_t shape_size(const Shape &shape) {
	return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
	if (shape_size(shape_) != data_.size()) {
		throw std::invalid_argument("tensor shape " + shape_string(shape_) + " does not match " +
		                            std::to_string(data_.size()) + " values");
	}
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
	return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
	return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
	if (axis >= shape_.size()) {
		throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
	}
	return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
	if (shape_size(shape) != data_.size()) {
		throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
	}
	return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) {
	std::fill(data_.begin(), data_.end(), v);
}

double Tensor::item() const {
	if (data_.size() != 1) {
		throw std::invalid_argument("item() on tensor of shape " + shape_string(shape_));
	}
	return data_[0];
}

bool Tensor::all_finite() const noexcept {
	return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::require_finite(const char *context) const {
	if (!all_finite()) {
		throw std::runtime_error(std::string("non-finite value produced by ") + context);
	}
}

double max_abs_diff(const Tensor &a, const Tensor &b) {
	if (a.shape() != b.shape()) {
		throw std::invalid_argument("max_abs_diff: shapes " + shape_string(a.shape()) + " and " +
		                            shape_string(b.shape()) + " differ");
	}
	double m = 0.0;
	for (std::size_t i = 0; i < a.size(); ++i) {
		m = std::max(m, std::abs(a[i] - b[i]));
	}
	return m;
}

} // namespace dfdgcn
