#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dfdgcn {

/// Sectioned key=value configuration. Canonical form: sections and keys in
/// lexicographic order, one `key=value` per line, `[section]` headers.
class ConfigText {
public:
	static ConfigText parse(const std::string &text);
	static ConfigText load(const std::filesystem::path &path);

	std::string canonical() const;
	void save(const std::filesystem::path &path) const;

	bool has(const std::string &section, const std::string &key) const;
	const std::string &get(const std::string &section, const std::string &key) const;
	std::string get_or(const std::string &section, const std::string &key, const std::string &fallback) const;
	void set(const std::string &section, const std::string &key, std::string value);

	/// Keys present in `section` that are not listed in `allowed`.
	std::vector<std::string> unknown_keys(const std::string &section, const std::vector<std::string> &allowed) const;
	std::vector<std::string> sections() const;
	const std::map<std::string, std::string> &section(const std::string &name) const;

	ConfigText only(const std::string &section) const;

private:
	std::map<std::string, std::map<std::string, std::string>> sections_;
};

/// Thrown for unreadable, malformed or semantically invalid configuration.
class ConfigError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

std::size_t parse_size(const std::string &key, const std::string &text);
double parse_double(const std::string &key, const std::string &text);
std::uint64_t parse_u64(const std::string &key, const std::string &text);
bool parse_bool(const std::string &key, const std::string &text);
std::vector<std::size_t> parse_size_list(const std::string &key, const std::string &text);
std::string format_double(double v);
std::string join_sizes(const std::vector<std::size_t> &values);

} // namespace dfdgcn
