#include "dfdgcn/params.hpp"

#include <algorithm>
#include <stdexcept>

namespace dfdgcn {

std::size_t ParameterStore::add(std::string name, Tensor value) {
	if (contains(name))
		throw std::invalid_argument("duplicate parameter name '" + name + "'");
	offsets_.push_back(scalar_count());
	names_.push_back(std::move(name));
	arrays_.push_back(std::move(value));
	return arrays_.size() - 1;
}

std::size_t ParameterStore::scalar_count() const noexcept {
	return arrays_.empty() ? 0 : offsets_.back() + arrays_.back().size();
}

std::size_t ParameterStore::slot(const std::string &name) const {
	const auto it = std::find(names_.begin(), names_.end(), name);
	if (it == names_.end())
		throw std::out_of_range("no parameter named '" + name + "'");
	return static_cast<std::size_t>(it - names_.begin());
}

bool ParameterStore::contains(const std::string &name) const {
	return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::pair<std::size_t, std::size_t> ParameterStore::locate(std::size_t flat) const {
	if (flat >= scalar_count())
		throw std::out_of_range("flat parameter index " + std::to_string(flat) + " out of range");
	const auto it = std::upper_bound(offsets_.begin(), offsets_.end(), flat);
	const std::size_t slot = static_cast<std::size_t>(it - offsets_.begin()) - 1;
	return {slot, flat - offsets_[slot]};
}

double ParameterStore::flat_value(std::size_t flat) const {
	const auto [s, o] = locate(flat);
	return arrays_[s][o];
}

void ParameterStore::set_flat_value(std::size_t flat, double v) {
	const auto [s, o] = locate(flat);
	arrays_[s][o] = v;
}

std::vector<Var> ParameterStore::bind(Tape &tape) const {
	std::vector<Var> vars;
	vars.reserve(arrays_.size());
	for (std::size_t i = 0; i < arrays_.size(); ++i)
		vars.push_back(tape.parameter(arrays_[i], i));
	return vars;
}

std::vector<Tensor> ParameterStore::zeros_like() const {
	std::vector<Tensor> out;
	out.reserve(arrays_.size());
	for (const auto &a : arrays_)
		out.emplace_back(a.shape());
	return out;
}

} // namespace dfdgcn
