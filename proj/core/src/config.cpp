#include "dfdgcn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

namespace {

std::string trim(const std::string &s) {
	const auto b = s.find_first_not_of(" \t\r\n");
	const auto e = s.find_last_not_of(" \t\r\n");
	return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

} // namespace

ConfigText ConfigText::parse(const std::string &text) {
	ConfigText cfg;
	std::istringstream in(text);
	std::string line, section;
	std::size_t lineno = 0;
	while (std::getline(in, line)) {
		++lineno;
		const auto hash = line.find('#');
		if (hash != std::string::npos)
			line = line.substr(0, hash);
		line = trim(line);
		if (line.empty())
			continue;
		if (line.front() == '[') {
			if (line.back() != ']')
				throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
			section = trim(line.substr(1, line.size() - 2));
			cfg.sections_[section];
			continue;
		}
		const auto eq = line.find('=');
		if (eq == std::string::npos)
			throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
		if (section.empty())
			throw ConfigError("line " + std::to_string(lineno) + ": key outside of any [section]");
		const std::string key = trim(line.substr(0, eq));
		if (key.empty())
			throw ConfigError("line " + std::to_string(lineno) + ": empty key");
		auto &sec = cfg.sections_[section];
		if (sec.count(key))
			throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + section + "." + key);
		sec[key] = trim(line.substr(eq + 1));
	}
	return cfg;
}

ConfigText ConfigText::load(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in)
		throw ConfigError("cannot read config file " + path.string());
	std::stringstream ss;
	ss << in.rdbuf();
	return parse(ss.str());
}

std::string ConfigText::canonical() const {
	std::string out;
	for (const auto &[name, keys] : sections_) {
		out += "[" + name + "]\n";
		for (const auto &[k, v] : keys)
			out += k + "=" + v + "\n";
	}
	return out;
}

void ConfigText::save(const std::filesystem::path &path) const {
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw std::runtime_error("cannot write " + path.string());
	out << canonical();
}

bool ConfigText::has(const std::string &section, const std::string &key) const {
	const auto it = sections_.find(section);
	return it != sections_.end() && it->second.count(key) > 0;
}

const std::string &ConfigText::get(const std::string &section, const std::string &key) const {
	const auto it = sections_.find(section);
	if (it == sections_.end() || !it->second.count(key))
		throw ConfigError("missing required key " + section + "." + key);
	return it->second.at(key);
}

std::string ConfigText::get_or(const std::string &section, const std::string &key, const std::string &fallback) const {
	return has(section, key) ? get(section, key) : fallback;
}

void ConfigText::set(const std::string &section, const std::string &key, std::string value) {
	sections_[section][key] = std::move(value);
}

std::vector<std::string> ConfigText::unknown_keys(const std::string &section,
                                                  const std::vector<std::string> &allowed) const {
	std::vector<std::string> out;
	const auto it = sections_.find(section);
	if (it == sections_.end())
		return out;
	for (const auto &[k, v] : it->second)
		if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
			out.push_back(section + "." + k);
	return out;
}

std::vector<std::string> ConfigText::sections() const {
	std::vector<std::string> out;
	for (const auto &[k, v] : sections_)
		out.push_back(k);
	return out;
}

const std::map<std::string, std::string> &ConfigText::section(const std::string &name) const {
	static const std::map<std::string, std::string> empty;
	const auto it = sections_.find(name);
	return it == sections_.end() ? empty : it->second;
}

ConfigText ConfigText::only(const std::string &section) const {
	ConfigText out;
	const auto it = sections_.find(section);
	if (it != sections_.end())
		out.sections_[section] = it->second;
	return out;
}

std::size_t parse_size(const std::string &key, const std::string &text) {
	std::size_t v = 0;
	const auto *end = text.data() + text.size();
	const auto [p, ec] = std::from_chars(text.data(), end, v);
	if (ec != std::errc() || p != end)
		throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
	return v;
}

std::uint64_t parse_u64(const std::string &key, const std::string &text) {
	std::uint64_t v = 0;
	const auto *end = text.data() + text.size();
	const auto [p, ec] = std::from_chars(text.data(), end, v);
	if (ec != std::errc() || p != end)
		throw ConfigError(key + ": expected an unsigned integer, got '" + text + "'");
	return v;
}

double parse_double(const std::string &key, const std::string &text) {
	try {
		std::size_t used = 0;
		const double v = std::stod(text, &used);
		if (used != text.size())
			throw std::invalid_argument(text);
		return v;
	} catch (const std::exception &) {
		throw ConfigError(key + ": expected a number, got '" + text + "'");
	}
}

bool parse_bool(const std::string &key, const std::string &text) {
	if (text == "true" || text == "1")
		return true;
	if (text == "false" || text == "0")
		return false;
	throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

std::vector<std::size_t> parse_size_list(const std::string &key, const std::string &text) {
	std::vector<std::size_t> out;
	std::stringstream ss(text);
	std::string part;
	while (std::getline(ss, part, ','))
		out.push_back(parse_size(key, trim(part)));
	return out;
}

std::string format_double(double v) {
	char buf[64];
	const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
	return std::string(buf, p);
}

std::string join_sizes(const std::vector<std::size_t> &values) {
	std::string out;
	for (std::size_t i = 0; i < values.size(); ++i)
		out += (i ? "," : "") + std::to_string(values[i]);
	return out;
}

} // namespace dfdgcn
