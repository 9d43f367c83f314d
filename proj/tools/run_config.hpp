#pragma once

#include "dfdgcn/config.hpp"
#include "dfdgcn/data.hpp"
#include "dfdgcn/eval.hpp"
#include "dfdgcn/model.hpp"
#include "dfdgcn/train.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dfdgcn::cli {

/// Everything a subcommand needs, read from sections [model], [train],
/// [data], [eval], [run] and [synth]. Unknown sections and keys are rejected.
struct RunConfig {
	ModelConfig model;
	TrainConfig train;

	std::string dataset; // [data] path
	std::size_t target_channel = 0;

	HiRule hi_rule = HiRule::LastValue;
	std::size_t max_test_windows = 0;

	std::string out = "out";
	std::vector<GraphMode> grid = ablation_grid();
	std::vector<std::uint64_t> seeds{1, 2, 3};

	SynthConfig synth;

	static RunConfig from_text(const ConfigText &text);
	static RunConfig load(const std::filesystem::path &path);
	ConfigText to_text() const;

	/// Sets the model initialization and batch shuffling seeds together.
	void set_seed(std::uint64_t seed);
};

std::string format_grid(const std::vector<GraphMode> &grid);
std::vector<GraphMode> parse_grid(const std::string &text);

} // namespace dfdgcn::cli
