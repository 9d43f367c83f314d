#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dfdgcn {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape &shape);
std::size_t shape_size(const Shape &shape);

/// Dense row-major array of doubles. The universal value type for signals,
/// embeddings and weights.
class Tensor {
public:
	Tensor() = default;
	explicit Tensor(Shape shape, double fill = 0.0);
	Tensor(Shape shape, std::vector<double> data);

	static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
	static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
	static Tensor vector(std::initializer_list<double> values);

	const Shape &shape() const noexcept { return shape_; }
	std::size_t rank() const noexcept { return shape_.size(); }
	std::size_t dim(std::size_t axis) const;
	std::size_t size() const noexcept { return data_.size(); }
	bool empty() const noexcept { return data_.empty(); }

	std::span<double> data() noexcept { return data_; }
	std::span<const double> data() const noexcept { return data_; }
	const std::vector<double> &values() const noexcept { return data_; }

	double &operator[](std::size_t i) noexcept { return data_[i]; }
	double operator[](std::size_t i) const noexcept { return data_[i]; }

	double &at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
	double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
	double &at(std::size_t i, std::size_t j, std::size_t k) {
		return data_[(i * shape_[1] + j) * shape_[2] + k];
	}
	double at(std::size_t i, std::size_t j, std::size_t k) const {
		return data_[(i * shape_[1] + j) * shape_[2] + k];
	}

	/// Same data under a new shape of equal element count.
	Tensor reshaped(Shape shape) const;
	void fill(double v);
	double item() const;

	bool all_finite() const noexcept;
	/// Throws std::runtime_error naming `context` when any entry is NaN/Inf.
	void require_finite(const char *context) const;

	friend bool operator==(const Tensor &a, const Tensor &b) {
		return a.shape_ == b.shape_ && a.data_ == b.data_;
	}

private:
	Shape shape_;
	std::vector<double> data_;
};

double max_abs_diff(const Tensor &a, const Tensor &b);

} // namespace dfdgcn
