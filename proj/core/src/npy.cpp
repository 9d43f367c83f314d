#include "dfdgcn/npy.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dfdgcn::npy {

static_assert(std::endian::native == std::endian::little, "npy reader assumes a little-endian host");

namespace {

std::string slurp(const std::filesystem::path &path) {
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw std::runtime_error("cannot open " + path.string());
	std::ostringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

template <typename T> T load_le(const char *p) {
	T v;
	std::memcpy(&v, p, sizeof(T));
	return v;
}

double half_to_double(std::uint16_t h) {
	const int sign = (h >> 15) & 1, exp = (h >> 10) & 0x1f, frac = h & 0x3ff;
	double v;
	if (exp == 0)
		v = std::ldexp(frac, -24);
	else if (exp == 31)
		v = frac ? std::numeric_limits<double>::quiet_NaN() : std::numeric_limits<double>::infinity();
	else
		v = std::ldexp(frac + 1024, exp - 25);
	return sign ? -v : v;
}

std::string header_field(const std::string &header, const std::string &key, const std::string &origin) {
	const auto k = header.find("'" + key + "'");
	if (k == std::string::npos)
		throw std::runtime_error(origin + ": npy header lacks '" + key + "'");
	auto colon = header.find(':', k);
	auto start = header.find_first_not_of(' ', colon + 1);
	if (header[start] == '(') {
		const auto end = header.find(')', start);
		return header.substr(start, end - start + 1);
	}
	const auto end = header.find_first_of(",}", start);
	return header.substr(start, end - start);
}

} // namespace

Tensor parse(const std::string &bytes, const std::string &origin) {
	if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0)
		throw std::runtime_error(origin + ": not an npy array (bad magic)");
	const int major = static_cast<unsigned char>(bytes[6]);
	std::size_t header_len = 0, offset = 0;
	if (major == 1) {
		header_len = load_le<std::uint16_t>(bytes.data() + 8);
		offset = 10;
	} else if (major == 2 || major == 3) {
		header_len = load_le<std::uint32_t>(bytes.data() + 8);
		offset = 12;
	} else {
		throw std::runtime_error(origin + ": unsupported npy version " + std::to_string(major));
	}
	if (offset + header_len > bytes.size())
		throw std::runtime_error(origin + ": truncated npy header");
	const std::string header = bytes.substr(offset, header_len);
	offset += header_len;

	std::string descr = header_field(header, "descr", origin);
	if (descr.size() < 2)
		throw std::runtime_error(origin + ": malformed dtype " + descr);
	descr = descr.substr(1, descr.size() - 2); // strip quotes
	if (header_field(header, "fortran_order", origin) != "False")
		throw std::runtime_error(origin + ": Fortran-ordered arrays are not supported");

	const std::string shape_text = header_field(header, "shape", origin);
	Shape shape;
	{
		std::string inner = shape_text.substr(1, shape_text.size() - 2);
		std::stringstream ss(inner);
		std::string part;
		while (std::getline(ss, part, ',')) {
			const auto b = part.find_first_not_of(' ');
			if (b == std::string::npos)
				continue;
			shape.push_back(static_cast<std::size_t>(std::stoull(part.substr(b))));
		}
	}

	const char order = descr[0];
	if (order == '>')
		throw std::runtime_error(origin + ": big-endian arrays are not supported");
	const char kind = descr[1];
	const std::size_t width = static_cast<std::size_t>(std::stoul(descr.substr(2)));
	const std::size_t count = shape_size(shape);
	if (offset + count * width > bytes.size())
		throw std::runtime_error(origin + ": expected " + std::to_string(count * width) + " data bytes for shape " +
		                         shape_string(shape) + ", found " + std::to_string(bytes.size() - offset));
	std::vector<double> data(count);
	const char *p = bytes.data() + offset;
	for (std::size_t i = 0; i < count; ++i, p += width) {
		if (kind == 'f' && width == 8)
			data[i] = load_le<double>(p);
		else if (kind == 'f' && width == 4)
			data[i] = load_le<float>(p);
		else if (kind == 'f' && width == 2)
			data[i] = half_to_double(load_le<std::uint16_t>(p));
		else if (kind == 'i' && width == 8)
			data[i] = static_cast<double>(load_le<std::int64_t>(p));
		else if (kind == 'i' && width == 4)
			data[i] = load_le<std::int32_t>(p);
		else if (kind == 'u' && width == 8)
			data[i] = static_cast<double>(load_le<std::uint64_t>(p));
		else if (kind == 'u' && width == 4)
			data[i] = load_le<std::uint32_t>(p);
		else
			throw std::runtime_error(origin + ": unsupported dtype " + descr);
	}
	return Tensor(std::move(shape), std::move(data));
}

Tensor read(const std::filesystem::path &path) {
	return parse(slurp(path), path.string());
}

Tensor read_npz(const std::filesystem::path &path, const std::string &member) {
	const std::string zip = slurp(path);
	const std::string origin = path.string();
	// End of central directory record.
	if (zip.size() < 22)
		throw std::runtime_error(origin + ": not a zip archive");
	std::size_t eocd = std::string::npos;
	for (std::size_t i = zip.size() - 22 + 1; i-- > 0;) {
		if (load_le<std::uint32_t>(zip.data() + i) == 0x06054b50u) {
			eocd = i;
			break;
		}
	}
	if (eocd == std::string::npos)
		throw std::runtime_error(origin + ": zip end-of-directory record not found");
	const std::uint16_t entries = load_le<std::uint16_t>(zip.data() + eocd + 10);
	std::size_t cd = load_le<std::uint32_t>(zip.data() + eocd + 16);
	const std::string wanted = member.empty() ? "" : member + ".npy";

	for (std::uint16_t e = 0; e < entries; ++e) {
		if (cd + 46 > zip.size() || load_le<std::uint32_t>(zip.data() + cd) != 0x02014b50u)
			throw std::runtime_error(origin + ": corrupt zip central directory");
		const std::uint16_t method = load_le<std::uint16_t>(zip.data() + cd + 10);
		const std::uint32_t csize = load_le<std::uint32_t>(zip.data() + cd + 20);
		const std::uint32_t usize = load_le<std::uint32_t>(zip.data() + cd + 24);
		const std::uint16_t name_len = load_le<std::uint16_t>(zip.data() + cd + 28);
		const std::uint16_t extra_len = load_le<std::uint16_t>(zip.data() + cd + 30);
		const std::uint16_t comment_len = load_le<std::uint16_t>(zip.data() + cd + 32);
		const std::uint32_t local = load_le<std::uint32_t>(zip.data() + cd + 42);
		const std::string name = zip.substr(cd + 46, name_len);
		cd += 46 + name_len + extra_len + comment_len;

		const bool is_npy = name.size() > 4 && name.compare(name.size() - 4, 4, ".npy") == 0;
		if (!is_npy || (!wanted.empty() && name != wanted))
			continue;
		if (csize == 0xffffffffu || usize == 0xffffffffu)
			throw std::runtime_error(origin + ": zip64 members are not supported");
		if (local + 30 > zip.size() || load_le<std::uint32_t>(zip.data() + local) != 0x04034b50u)
			throw std::runtime_error(origin + ": corrupt zip local header");
		const std::size_t data_at = local + 30 + load_le<std::uint16_t>(zip.data() + local + 26) +
		                            load_le<std::uint16_t>(zip.data() + local + 28);
		if (data_at + csize > zip.size())
			throw std::runtime_error(origin + ": truncated zip member " + name);
		std::string raw;
		if (method == 0) {
			raw = zip.substr(data_at, csize);
		} else if (method == 8) {
			raw.resize(usize);
			z_stream zs{};
			if (inflateInit2(&zs, -MAX_WBITS) != Z_OK)
				throw std::runtime_error("zlib initialisation failed");
			zs.next_in = reinterpret_cast<Bytef *>(const_cast<char *>(zip.data() + data_at));
			zs.avail_in = csize;
			zs.next_out = reinterpret_cast<Bytef *>(raw.data());
			zs.avail_out = usize;
			const int rc = inflate(&zs, Z_FINISH);
			inflateEnd(&zs);
			if (rc != Z_STREAM_END)
				throw std::runtime_error(origin + ": failed to inflate member " + name);
		} else {
			throw std::runtime_error(origin + ": unsupported zip compression method " + std::to_string(method));
		}
		return parse(raw, origin + ":" + name);
	}
	throw std::runtime_error(origin + ": no array " + (wanted.empty() ? std::string("(.npy member)") : wanted) +
	                         " in archive");
}

void write(const std::filesystem::path &path, const Tensor &t) {
	std::string shape = "(";
	for (std::size_t i = 0; i < t.rank(); ++i)
		shape += std::to_string(t.dim(i)) + ",";
	if (t.rank() > 1)
		shape.pop_back();
	shape += ")";
	std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape + ", }";
	// Pad so the data starts on a 64-byte boundary; header ends with '\n'.
	const std::size_t unpadded = 10 + header.size() + 1;
	header.append((64 - unpadded % 64) % 64, ' ');
	header.push_back('\n');
	std::ofstream out(path, std::ios::binary);
	if (!out)
		throw std::runtime_error("cannot write " + path.string());
	out.write("\x93NUMPY\x01\x00", 8);
	const std::uint16_t len = static_cast<std::uint16_t>(header.size());
	out.write(reinterpret_cast<const char *>(&len), 2);
	out.write(header.data(), static_cast<std::streamsize>(header.size()));
	out.write(reinterpret_cast<const char *>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

} // namespace dfdgcn::npy
