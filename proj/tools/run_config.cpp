#include "run_config.hpp"

#include <algorithm>
#include <sstream>

namespace dfdgcn::cli {

namespace {

const std::vector<std::string> kSections{"data", "eval", "model", "run", "synth", "train"};
const std::vector<std::string> kDataKeys{"path", "target_channel"};
const std::vector<std::string> kEvalKeys{"hi_rule", "max_test_windows"};
const std::vector<std::string> kRunKeys{"out", "grid", "seeds"};
const std::vector<std::string> kSynthKeys{"n_nodes",     "n_steps",   "n_sources",      "lag_min",
                                          "lag_max",     "noise_sigma", "seed",         "harmonics",
                                          "spectrum_decay", "ar_phi",  "source_noise_scale", "base_level"};

void reject_unknown(const ConfigText &text, const std::string &section, const std::vector<std::string> &keys) {
	const auto unknown = text.unknown_keys(section, keys);
	if (!unknown.empty())
		throw ConfigError("unknown config key " + unknown.front());
}

std::vector<std::uint64_t> parse_seeds(const std::string &text) {
	std::vector<std::uint64_t> out;
	std::stringstream ss(text);
	std::string part;
	while (std::getline(ss, part, ','))
		out.push_back(parse_u64("run.seeds", part));
	if (out.empty())
		throw ConfigError("run.seeds must list at least one seed");
	return out;
}

} // namespace

std::string format_grid(const std::vector<GraphMode> &grid) {
	std::string out;
	for (std::size_t i = 0; i < grid.size(); ++i)
		out += (i ? "," : "") + grid[i].label();
	return out;
}

std::vector<GraphMode> parse_grid(const std::string &text) {
	std::vector<GraphMode> out;
	std::stringstream ss(text);
	std::string part;
	while (std::getline(ss, part, ',')) {
		try {
			out.push_back(GraphMode::parse(part));
		} catch (const std::exception &e) {
			throw ConfigError(std::string("run.grid: ") + e.what());
		}
	}
	if (out.empty())
		throw ConfigError("run.grid must list at least one graph mode");
	return out;
}

RunConfig RunConfig::from_text(const ConfigText &text) {
	for (const auto &s : text.sections())
		if (std::find(kSections.begin(), kSections.end(), s) == kSections.end())
			throw ConfigError("unknown config section [" + s + "]");
	reject_unknown(text, "data", kDataKeys);
	reject_unknown(text, "eval", kEvalKeys);
	reject_unknown(text, "run", kRunKeys);
	reject_unknown(text, "synth", kSynthKeys);

	RunConfig c;
	try {
		c.model = ModelConfig::read(text);
	} catch (const ConfigError &) {
		throw;
	} catch (const std::exception &e) {
		throw ConfigError(std::string("model: ") + e.what());
	}
	c.train = TrainConfig::read(text);

	c.dataset = text.get_or("data", "path", "");
	if (text.has("data", "target_channel"))
		c.target_channel = parse_size("data.target_channel", text.get("data", "target_channel"));
	if (text.has("eval", "hi_rule"))
		c.hi_rule = parse_hi_rule(text.get("eval", "hi_rule"));
	if (text.has("eval", "max_test_windows"))
		c.max_test_windows = parse_size("eval.max_test_windows", text.get("eval", "max_test_windows"));
	c.out = text.get_or("run", "out", c.out);
	if (text.has("run", "grid"))
		c.grid = parse_grid(text.get("run", "grid"));
	if (text.has("run", "seeds"))
		c.seeds = parse_seeds(text.get("run", "seeds"));

	SynthConfig &s = c.synth;
	auto size_key = [&](const char *k, std::size_t &dst) {
		if (text.has("synth", k))
			dst = parse_size(std::string("synth.") + k, text.get("synth", k));
	};
	auto double_key = [&](const char *k, double &dst) {
		if (text.has("synth", k))
			dst = parse_double(std::string("synth.") + k, text.get("synth", k));
	};
	size_key("n_nodes", s.n_nodes);
	size_key("n_steps", s.n_steps);
	size_key("n_sources", s.n_sources);
	size_key("lag_min", s.lag_min);
	size_key("lag_max", s.lag_max);
	size_key("harmonics", s.harmonics);
	double_key("noise_sigma", s.noise_sigma);
	double_key("spectrum_decay", s.spectrum_decay);
	double_key("ar_phi", s.ar_phi);
	double_key("source_noise_scale", s.source_noise_scale);
	double_key("base_level", s.base_level);
	if (text.has("synth", "seed"))
		s.seed = parse_u64("synth.seed", text.get("synth", "seed"));
	return c;
}

RunConfig RunConfig::load(const std::filesystem::path &path) {
	return from_text(ConfigText::load(path));
}

ConfigText RunConfig::to_text() const {
	ConfigText t;
	model.write(t);
	train.write(t);
	t.set("data", "path", dataset);
	t.set("data", "target_channel", std::to_string(target_channel));
	t.set("eval", "hi_rule", hi_rule_name(hi_rule));
	t.set("eval", "max_test_windows", std::to_string(max_test_windows));
	t.set("run", "out", out);
	t.set("run", "grid", format_grid(grid));
	std::string seed_list;
	for (std::size_t i = 0; i < seeds.size(); ++i)
		seed_list += (i ? "," : "") + std::to_string(seeds[i]);
	t.set("run", "seeds", seed_list);
	t.set("synth", "n_nodes", std::to_string(synth.n_nodes));
	t.set("synth", "n_steps", std::to_string(synth.n_steps));
	t.set("synth", "n_sources", std::to_string(synth.n_sources));
	t.set("synth", "lag_min", std::to_string(synth.lag_min));
	t.set("synth", "lag_max", std::to_string(synth.lag_max));
	t.set("synth", "harmonics", std::to_string(synth.harmonics));
	t.set("synth", "noise_sigma", format_double(synth.noise_sigma));
	t.set("synth", "spectrum_decay", format_double(synth.spectrum_decay));
	t.set("synth", "ar_phi", format_double(synth.ar_phi));
	t.set("synth", "source_noise_scale", format_double(synth.source_noise_scale));
	t.set("synth", "base_level", format_double(synth.base_level));
	t.set("synth", "seed", std::to_string(synth.seed));
	return t;
}

void RunConfig::set_seed(std::uint64_t seed) {
	model.seed = seed;
	train.seed = seed;
}

} // namespace dfdgcn::cli
