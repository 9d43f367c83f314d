#include "dfdgcn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>
#include <string>

namespace dfdgcn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'D', 'F', 'D', 'G'};
// Guards against allocating absurd sizes from a corrupt file.
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 40;

template <typename T> void put(std::ofstream &out, T v) {
	out.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <typename T> T take(std::ifstream &in, const std::string &origin) {
	T v{};
	if (!in.read(reinterpret_cast<char *>(&v), sizeof v))
		throw std::runtime_error(origin + ": truncated checkpoint");
	return v;
}

std::uint64_t take_length(std::ifstream &in, const std::string &origin) {
	const auto n = take<std::uint64_t>(in, origin);
	if (n > kMaxLength)
		throw std::runtime_error(origin + ": corrupt checkpoint (length " + std::to_string(n) + ")");
	return n;
}

std::string take_string(std::ifstream &in, const std::string &origin) {
	std::string s(take_length(in, origin), '\0');
	if (!in.read(s.data(), static_cast<std::streamsize>(s.size())))
		throw std::runtime_error(origin + ": truncated checkpoint");
	return s;
}

} // namespace

void save_checkpoint(const std::filesystem::path &path, const ConfigText &config, const ParameterStore &params) {
	const auto tmp = std::filesystem::path(path.string() + ".tmp");
	{
		std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
		if (!out)
			throw std::runtime_error("cannot write " + tmp.string());
		out.write(kMagic, 4);
		put<std::uint32_t>(out, kCheckpointVersion);
		const std::string text = config.canonical();
		put<std::uint64_t>(out, text.size());
		out.write(text.data(), static_cast<std::streamsize>(text.size()));
		put<std::uint64_t>(out, params.count());
		for (std::size_t s = 0; s < params.count(); ++s) {
			const std::string &name = params.name(s);
			const Tensor &a = params.array(s);
			put<std::uint64_t>(out, name.size());
			out.write(name.data(), static_cast<std::streamsize>(name.size()));
			put<std::uint64_t>(out, a.rank());
			for (std::size_t d : a.shape())
				put<std::uint64_t>(out, d);
			out.write(reinterpret_cast<const char *>(a.data().data()), static_cast<std::streamsize>(a.size() * 8));
		}
		if (!out)
			throw std::runtime_error("failed writing " + tmp.string());
	}
	std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
	const std::string origin = path.string();
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw std::runtime_error("cannot open checkpoint " + origin);
	char magic[4];
	if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
		throw std::runtime_error(origin + ": not a checkpoint (bad magic)");
	const auto version = take<std::uint32_t>(in, origin);
	if (version != kCheckpointVersion)
		throw std::runtime_error(origin + ": unsupported checkpoint version " + std::to_string(version));
	Checkpoint cp;
	cp.config = ConfigText::parse(take_string(in, origin));
	const auto arrays = take_length(in, origin);
	for (std::uint64_t a = 0; a < arrays; ++a) {
		std::string name = take_string(in, origin);
		const auto rank = take_length(in, origin);
		Shape shape(rank);
		for (auto &d : shape)
			d = take_length(in, origin);
		Tensor t(shape);
		if (!in.read(reinterpret_cast<char *>(t.data().data()), static_cast<std::streamsize>(t.size() * 8)))
			throw std::runtime_error(origin + ": truncated data for " + name);
		cp.params.add(std::move(name), std::move(t));
	}
	return cp;
}

void restore_parameters(DfdgcnModel &model, const ParameterStore &params) {
	ParameterStore &dst = model.params();
	if (dst.count() != params.count())
		throw std::runtime_error("checkpoint holds " + std::to_string(params.count()) + " arrays, model expects " +
		                         std::to_string(dst.count()));
	for (std::size_t s = 0; s < dst.count(); ++s) {
		const std::string &name = dst.name(s);
		if (!params.contains(name))
			throw std::runtime_error("checkpoint lacks parameter " + name);
		const Tensor &src = params.array(params.slot(name));
		if (src.shape() != dst.array(s).shape())
			throw std::runtime_error("parameter " + name + ": checkpoint shape " + shape_string(src.shape()) +
			                         ", model expects " + shape_string(dst.array(s).shape()));
		dst.array(s) = src;
	}
}

DfdgcnModel load_model(const Checkpoint &checkpoint, std::optional<PredefinedGraphs> predefined) {
	DfdgcnModel model(ModelConfig::read(checkpoint.config), std::move(predefined));
	restore_parameters(model, checkpoint.params);
	return model;
}

} // namespace dfdgcn
