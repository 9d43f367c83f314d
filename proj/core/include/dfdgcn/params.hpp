#pragma once

#include "dfdgcn/autodiff.hpp"
#include "dfdgcn/tensor.hpp"

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace dfdgcn {

/// Ordered collection of named parameter arrays with a flat scalar index
/// running over the arrays in insertion order.
class ParameterStore {
public:
	std::size_t add(std::string name, Tensor value);

	std::size_t count() const noexcept { return arrays_.size(); }
	std::size_t scalar_count() const noexcept;

	const std::string &name(std::size_t slot) const { return names_.at(slot); }
	Tensor &array(std::size_t slot) { return arrays_.at(slot); }
	const Tensor &array(std::size_t slot) const { return arrays_.at(slot); }

	/// Slot of `name`; throws std::out_of_range when absent.
	std::size_t slot(const std::string &name) const;
	bool contains(const std::string &name) const;

	/// (slot, offset) of the flat scalar index.
	std::pair<std::size_t, std::size_t> locate(std::size_t flat) const;
	double flat_value(std::size_t flat) const;
	void set_flat_value(std::size_t flat, double v);

	/// Registers every array on the tape; result is indexed by slot.
	std::vector<Var> bind(Tape &tape) const;

	/// Zero-filled arrays shaped like the parameters.
	std::vector<Tensor> zeros_like() const;

	const std::vector<std::string> &names() const noexcept { return names_; }
	const std::vector<Tensor> &arrays() const noexcept { return arrays_; }

	friend bool operator==(const ParameterStore &a, const ParameterStore &b) {
		return a.names_ == b.names_ && a.arrays_ == b.arrays_;
	}

private:
	std::vector<std::string> names_;
	std::vector<Tensor> arrays_;
	std::vector<std::size_t> offsets_; // flat start of each array
};

using Gradients = std::vector<Tensor>;

} // namespace dfdgcn
