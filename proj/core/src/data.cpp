#include "dfdgcn/data.hpp"

#include "dfdgcn/npy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string s) {
	std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
	return s;
}

std::string canonical_name(const std::string &s) {
	std::string out;
	for (char c : lower(s))
		if (std::isalnum(static_cast<unsigned char>(c)))
			out.push_back(c);
	return out;
}

std::string trim(const std::string &s) {
	const auto b = s.find_first_not_of(" \t\r\n");
	if (b == std::string::npos)
		return "";
	return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::string extents_string(std::size_t t, std::size_t n) {
	return "(" + std::to_string(t) + ", " + std::to_string(n) + ", C)";
}

Tensor read_values_csv(const fs::path &path) {
	std::ifstream in(path);
	if (!in)
		throw std::runtime_error("cannot open " + path.string());
	std::string line;
	if (!std::getline(in, line) || trim(line) != "time,node,value")
		throw std::runtime_error(path.string() + ": expected header 'time,node,value'");
	struct Row {
		std::size_t t, n;
		double v;
	};
	std::vector<Row> rows;
	std::size_t max_t = 0, max_n = 0, lineno = 1;
	while (std::getline(in, line)) {
		++lineno;
		line = trim(line);
		if (line.empty())
			continue;
		std::stringstream ss(line);
		std::string a, b, c;
		if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
			throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected three fields");
		try {
			Row r{static_cast<std::size_t>(std::stoull(a)), static_cast<std::size_t>(std::stoull(b)), std::stod(c)};
			max_t = std::max(max_t, r.t);
			max_n = std::max(max_n, r.n);
			rows.push_back(r);
		} catch (const std::exception &) {
			throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
		}
	}
	if (rows.empty())
		throw std::runtime_error(path.string() + ": no values");
	Tensor values({max_t + 1, max_n + 1, 1});
	for (const auto &r : rows)
		values.at(r.t, r.n, 0) = r.v;
	return values;
}

Tensor read_values(const fs::path &path) {
	const std::string ext = lower(path.extension().string());
	Tensor values;
	if (ext == ".npz") {
		try {
			values = npy::read_npz(path, "data");
		} catch (const std::runtime_error &) {
			values = npy::read_npz(path);
		}
	} else if (ext == ".npy") {
		values = npy::read(path);
	} else if (ext == ".csv") {
		values = read_values_csv(path);
	} else {
		throw std::runtime_error("unsupported values container " + path.string() + " (expected .npz, .npy or .csv)");
	}
	if (values.rank() == 2)
		values = values.reshaped({values.dim(0), values.dim(1), 1});
	if (values.rank() != 3)
		throw std::runtime_error(path.string() + ": expected extents (time, node[, channel]), found " +
		                         shape_string(values.shape()));
	return values;
}

std::vector<std::string> read_lines(const fs::path &path) {
	std::ifstream in(path);
	if (!in)
		throw std::runtime_error("cannot open " + path.string());
	std::vector<std::string> out;
	std::string line;
	while (std::getline(in, line))
		if (!trim(line).empty())
			out.push_back(trim(line));
	return out;
}

void remap_distances(std::vector<DistanceEdge> &edges, const std::vector<std::string> &ids, std::size_t n,
                     const std::string &origin) {
	std::map<std::size_t, std::size_t> index;
	for (std::size_t i = 0; i < ids.size(); ++i) {
		try {
			index[static_cast<std::size_t>(std::stoull(ids[i]))] = i;
		} catch (const std::exception &) {
			throw std::runtime_error(origin + ": sensor id '" + ids[i] + "' is not numeric");
		}
	}
	std::vector<DistanceEdge> kept;
	for (auto e : edges) {
		auto f = index.find(e.from), t = index.find(e.to);
		if (f == index.end() || t == index.end())
			continue;
		e.from = f->second;
		e.to = t->second;
		if (e.from < n && e.to < n)
			kept.push_back(e);
	}
	edges = std::move(kept);
}

std::map<std::string, std::string> read_meta(const fs::path &path) {
	std::map<std::string, std::string> meta;
	for (const auto &line : read_lines(path)) {
		if (line[0] == '#')
			continue;
		const auto eq = line.find('=');
		if (eq == std::string::npos)
			throw std::runtime_error(path.string() + ": expected key=value, found '" + line + "'");
		meta[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
	}
	return meta;
}

} // namespace

void TrafficDataset::validate() const {
	if (values.rank() != 3)
		throw std::invalid_argument("dataset values must be [time, node, channel], found " +
		                            shape_string(values.shape()));
	if (steps() < kWindowIn + kWindowOut)
		throw std::invalid_argument("dataset too short: " + std::to_string(steps()) + " steps, need at least " +
		                            std::to_string(kWindowIn + kWindowOut));
	if (nodes() == 0 || channels() == 0)
		throw std::invalid_argument("dataset has no nodes or channels");
	if (interval <= 0 || 86400 % interval != 0)
		throw std::invalid_argument("sampling interval " + std::to_string(interval) + " s does not divide a day");
	if (!sensor_ids.empty() && sensor_ids.size() != nodes())
		throw std::invalid_argument("expected " + std::to_string(nodes()) + " sensor ids, found " +
		                            std::to_string(sensor_ids.size()));
	if (distances)
		for (const auto &e : *distances)
			if (e.from >= nodes() || e.to >= nodes())
				throw std::invalid_argument("distance edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
				                            " outside " + std::to_string(nodes()) + " nodes");
}

const std::vector<KnownDataset> &known_datasets() {
	static const std::vector<KnownDataset> table{
	    {"PEMS-BAY", 52116, 325, 1483228800},
	    {"PEMS03", 26208, 358, 1535760000},
	    {"PEMS04", 16992, 307, 1514764800},
	    {"PEMS07", 28224, 883, 1493596800},
	    {"PEMS08", 17856, 170, 1467331200},
	};
	return table;
}

std::optional<KnownDataset> find_known_dataset(const std::string &name) {
	const std::string key = canonical_name(name);
	for (const auto &k : known_datasets())
		if (canonical_name(k.name) == key)
			return k;
	return std::nullopt;
}

TrafficDataset load_pems(const fs::path &values_file, const std::optional<fs::path> &distances_file,
                         const std::string &name, const std::optional<fs::path> &sensor_ids_file) {
	TrafficDataset ds;
	ds.values = read_values(values_file);
	ds.name = name.empty() ? values_file.stem().string() : name;
	if (auto known = find_known_dataset(ds.name)) {
		if (ds.steps() != known->steps || ds.nodes() != known->nodes)
			throw std::runtime_error(known->name + ": expected extents " + extents_string(known->steps, known->nodes) +
			                         ", found " + shape_string(ds.values.shape()));
		ds.name = known->name;
		ds.start_timestamp = known->start_timestamp;
	}
	if (sensor_ids_file)
		ds.sensor_ids = read_lines(*sensor_ids_file);
	if (distances_file) {
		auto edges = read_distances_csv(*distances_file);
		const bool needs_remap = std::any_of(edges.begin(), edges.end(),
		                                     [&](const DistanceEdge &e) { return e.from >= ds.nodes() || e.to >= ds.nodes(); });
		if (needs_remap) {
			if (ds.sensor_ids.empty())
				throw std::runtime_error(distances_file->string() +
				                         ": endpoints exceed the node count and no sensor id list was given");
			remap_distances(edges, ds.sensor_ids, ds.nodes(), distances_file->string());
		}
		ds.distances = std::move(edges);
	}
	ds.validate();
	return ds;
}

TrafficDataset load_dataset(const fs::path &path) {
	if (!fs::exists(path))
		throw std::runtime_error("dataset path does not exist: " + path.string());
	if (!fs::is_directory(path))
		return load_pems(path);

	std::map<std::string, std::string> meta;
	if (fs::exists(path / "meta.txt"))
		meta = read_meta(path / "meta.txt");
	std::string name = meta.count("name") ? meta["name"] : path.filename().string();

	std::optional<fs::path> values;
	for (const auto &candidate : {path / "values.npy", path / (name + ".npz"), path / "values.npz", path / "values.csv"})
		if (fs::exists(candidate)) {
			values = candidate;
			break;
		}
	if (!values) {
		for (const auto &entry : fs::directory_iterator(path))
			if (lower(entry.path().extension().string()) == ".npz") {
				values = entry.path();
				break;
			}
	}
	if (!values)
		throw std::runtime_error("no values file (values.npy, *.npz or values.csv) in " + path.string());

	std::optional<fs::path> distances, ids;
	for (const auto &candidate : {path / "distances.csv", path / (name + ".csv")})
		if (fs::exists(candidate)) {
			distances = candidate;
			break;
		}
	for (const auto &candidate : {path / "sensor_ids.txt", path / (name + ".txt")})
		if (fs::exists(candidate)) {
			ids = candidate;
			break;
		}

	TrafficDataset ds = load_pems(*values, distances, name, ids);
	if (meta.count("start_timestamp"))
		ds.start_timestamp = std::stoll(meta["start_timestamp"]);
	if (meta.count("interval"))
		ds.interval = std::stoll(meta["interval"]);
	ds.validate();
	return ds;
}

void save_dataset(const fs::path &dir, const TrafficDataset &ds) {
	fs::create_directories(dir);
	npy::write(dir / "values.npy", ds.values);
	std::ofstream meta(dir / "meta.txt");
	if (!meta)
		throw std::runtime_error("cannot write " + (dir / "meta.txt").string());
	meta << "name=" << ds.name << "\n"
	     << "start_timestamp=" << ds.start_timestamp << "\n"
	     << "interval=" << ds.interval << "\n";
	if (ds.distances)
		write_distances_csv(dir / "distances.csv", *ds.distances);
	if (!ds.sensor_ids.empty()) {
		std::ofstream ids(dir / "sensor_ids.txt");
		for (const auto &id : ds.sensor_ids)
			ids << id << "\n";
	}
}

const std::vector<DistanceEdge> &require_distances(const TrafficDataset &ds) {
	if (!ds.distances)
		throw std::runtime_error("predefined graph requires distances");
	return *ds.distances;
}

SplitRanges split(std::size_t total_steps) {
	const std::size_t n_train = total_steps * 7 / 10;
	const std::size_t n_val = total_steps / 10;
	if (n_train == 0 || n_val == 0 || total_steps - n_train - n_val == 0)
		throw std::invalid_argument("dataset too short: " + std::to_string(total_steps) +
		                            " steps cannot be split 7:1:2");
	SplitRanges r;
	r.train = {0, n_train};
	r.val = {n_train, n_train + n_val};
	r.test = {n_train + n_val, total_steps};
	return r;
}

void require_windows(const SplitRanges &ranges) {
	const std::size_t need = kWindowIn + kWindowOut;
	const std::pair<const char *, StepRange> parts[] = {{"train", ranges.train}, {"val", ranges.val}, {"test", ranges.test}};
	for (const auto &[label, range] : parts)
		if (range.size() < need)
			throw std::invalid_argument("dataset too short: " + std::string(label) + " split has " +
			                            std::to_string(range.size()) + " steps, need at least " + std::to_string(need));
}

std::size_t window_count(std::size_t steps) {
	const std::size_t need = kWindowIn + kWindowOut;
	return steps < need ? 0 : steps - need + 1;
}

Calendar calendar_features(std::size_t step_index, std::int64_t start_timestamp, std::int64_t interval) {
	const std::int64_t ts = start_timestamp + static_cast<std::int64_t>(step_index) * interval;
	const std::int64_t day = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
	const std::int64_t seconds = ts - day * 86400;
	Calendar c;
	c.tod = static_cast<std::size_t>(seconds / interval);
	// 1970-01-01 was a Thursday.
	c.dow = static_cast<std::size_t>(((day + 3) % 7 + 7) % 7);
	return c;
}

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), std_(std::move(stddev)) {
	if (mean_.size() != std_.size())
		throw std::invalid_argument("normalizer mean and std differ in length");
	for (std::size_t c = 0; c < std_.size(); ++c)
		if (!(std_[c] > 0.0) || !std::isfinite(std_[c]))
			throw std::invalid_argument("channel " + std::to_string(c) + " has zero or non-finite standard deviation");
}

Normalizer Normalizer::fit(const TrafficDataset &ds, StepRange range) {
	if (range.size() == 0 || range.end > ds.steps())
		throw std::invalid_argument("normalizer range outside the dataset");
	const std::size_t nc = ds.channels();
	std::vector<double> mean(nc, 0.0), var(nc, 0.0);
	const double count = static_cast<double>(range.size() * ds.nodes());
	for (std::size_t c = 0; c < nc; ++c) {
		double s = 0.0;
		for (std::size_t t = range.begin; t < range.end; ++t)
			for (std::size_t n = 0; n < ds.nodes(); ++n)
				s += ds.value(t, n, c);
		mean[c] = s / count;
		double q = 0.0;
		for (std::size_t t = range.begin; t < range.end; ++t)
			for (std::size_t n = 0; n < ds.nodes(); ++n) {
				const double d = ds.value(t, n, c) - mean[c];
				q += d * d;
			}
		var[c] = std::sqrt(q / count);
	}
	return Normalizer(std::move(mean), std::move(var));
}

Tensor Normalizer::inverse(const Tensor &z, std::size_t channel) const {
	Tensor out(z.shape());
	for (std::size_t i = 0; i < z.size(); ++i)
		out[i] = inverse(z[i], channel);
	return out;
}

SplitWindows::SplitWindows(const TrafficDataset &ds, StepRange range, const Normalizer &norm,
                           std::size_t target_channel)
    : ds_(&ds), range_(range), norm_(norm), target_(target_channel), count_(window_count(range.size())) {
	if (range.end > ds.steps())
		throw std::invalid_argument("window range outside the dataset");
	if (target_channel >= ds.channels())
		throw std::invalid_argument("target channel " + std::to_string(target_channel) + " outside " +
		                            std::to_string(ds.channels()) + " channels");
	if (norm.mean().size() != ds.channels())
		throw std::invalid_argument("normalizer channel count does not match the dataset");
}

Window SplitWindows::at(std::size_t i) const {
	if (i >= count_)
		throw std::out_of_range("window " + std::to_string(i) + " of " + std::to_string(count_));
	const std::size_t n = ds_->nodes(), c = ds_->channels();
	Window w;
	w.start = range_.begin + i;
	w.x = Tensor({n, c, kWindowIn});
	w.x_raw = Tensor({n, c, kWindowIn});
	w.y = Tensor({n, kWindowOut});
	for (std::size_t node = 0; node < n; ++node) {
		for (std::size_t ch = 0; ch < c; ++ch)
			for (std::size_t t = 0; t < kWindowIn; ++t) {
				const double v = ds_->value(w.start + t, node, ch);
				w.x_raw.at(node, ch, t) = v;
				w.x.at(node, ch, t) = norm_.transform(v, ch);
			}
		for (std::size_t h = 0; h < kWindowOut; ++h)
			w.y.at(node, h) = ds_->value(w.start + kWindowIn + h, node, target_);
	}
	const Calendar cal = calendar_features(w.start + kWindowIn - 1, ds_->start_timestamp, ds_->interval);
	w.tod = cal.tod * static_cast<std::size_t>(ds_->interval) / static_cast<std::size_t>(kIntervalSeconds);
	w.dow = cal.dow;
	return w;
}

WindowBatch make_batch(const WindowView &view, const std::vector<std::size_t> &indices) {
	WindowBatch b;
	if (indices.empty())
		return b;
	const Window first = view.at(indices.front());
	Shape xs{indices.size()};
	xs.insert(xs.end(), first.x.shape().begin(), first.x.shape().end());
	Shape ys{indices.size()};
	ys.insert(ys.end(), first.y.shape().begin(), first.y.shape().end());
	b.x = Tensor(xs);
	b.y = Tensor(ys);
	for (std::size_t k = 0; k < indices.size(); ++k) {
		const Window w = k == 0 ? first : view.at(indices[k]);
		std::copy(w.x.data().begin(), w.x.data().end(), b.x.data().begin() + static_cast<long>(k * w.x.size()));
		std::copy(w.y.data().begin(), w.y.data().end(), b.y.data().begin() + static_cast<long>(k * w.y.size()));
		b.tod.push_back(w.tod);
		b.dow.push_back(w.dow);
	}
	return b;
}

SynthResult synth_timeshift(const SynthConfig &cfg) {
	if (cfg.n_nodes == 0 || cfg.n_sources == 0 || cfg.n_sources > cfg.n_nodes)
		throw std::invalid_argument("synthetic generator needs 1 <= n_sources <= n_nodes");
	if (cfg.lag_min > cfg.lag_max || cfg.lag_max >= kWindowIn)
		throw std::invalid_argument("synthetic lags must satisfy lag_min <= lag_max < " + std::to_string(kWindowIn));
	if (!cfg.lags.empty() && cfg.lags.size() != cfg.n_nodes)
		throw std::invalid_argument("lag map needs one entry per node");
	if (!cfg.gains.empty() && cfg.gains.size() != cfg.n_nodes)
		throw std::invalid_argument("gain list needs one entry per node");
	for (std::size_t lag : cfg.lags)
		if (lag >= kWindowIn)
			throw std::invalid_argument("synthetic lag " + std::to_string(lag) + " is not below the input length");

	std::mt19937_64 rng(cfg.seed);
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	std::normal_distribution<double> gauss(0.0, 1.0);

	const std::size_t n = cfg.n_nodes, s = cfg.n_sources;
	std::vector<std::size_t> lag(n, 0);
	std::vector<double> gain(n, 1.0);
	for (std::size_t j = s; j < n; ++j) {
		lag[j] = cfg.lags.empty()
		             ? cfg.lag_min + static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.lag_max - cfg.lag_min + 1))
		             : cfg.lags[j];
		gain[j] = cfg.gains.empty() ? 0.7 + 0.6 * unit(rng) : cfg.gains[j];
	}
	const std::size_t history = *std::max_element(lag.begin(), lag.end());
	const std::size_t total = cfg.n_steps + history;

	// Source signals on [-history, n_steps), stored with offset `history`.
	std::vector<std::vector<double>> source(s, std::vector<double>(total));
	const double ar_scale = std::sqrt(1.0 - cfg.ar_phi * cfg.ar_phi);
	for (std::size_t k = 0; k < s; ++k) {
		std::vector<double> amp(cfg.harmonics), phase(cfg.harmonics);
		double power = 0.0;
		for (std::size_t h = 0; h < cfg.harmonics; ++h) {
			amp[h] = std::pow(static_cast<double>(h + 1), -cfg.spectrum_decay);
			phase[h] = 2.0 * std::numbers::pi * unit(rng);
			power += 0.5 * amp[h] * amp[h];
		}
		const double norm = power > 0.0 ? 1.0 / std::sqrt(power) : 0.0;
		double ar = gauss(rng);
		for (std::size_t burn = 0; burn < 200; ++burn)
			ar = cfg.ar_phi * ar + ar_scale * gauss(rng);
		for (std::size_t i = 0; i < total; ++i) {
			const double t = static_cast<double>(i) - static_cast<double>(history);
			double periodic = 0.0;
			for (std::size_t h = 0; h < cfg.harmonics; ++h)
				periodic += amp[h] * std::cos(2.0 * std::numbers::pi * static_cast<double>(h + 1) * t / 288.0 + phase[h]);
			ar = cfg.ar_phi * ar + ar_scale * gauss(rng);
			source[k][i] = cfg.base_level + norm * periodic + cfg.noise_sigma * cfg.source_noise_scale * ar;
		}
	}

	SynthResult out;
	TrafficDataset &ds = out.dataset;
	ds.values = Tensor({cfg.n_steps, n, 1});
	ds.start_timestamp = cfg.start_timestamp;
	ds.interval = kIntervalSeconds;
	ds.name = "synth";
	for (std::size_t j = 0; j < n; ++j)
		ds.sensor_ids.push_back(std::to_string(j));
	std::vector<DistanceEdge> edges;
	for (std::size_t t = 0; t < cfg.n_steps; ++t)
		for (std::size_t k = 0; k < s; ++k)
			ds.values.at(t, k, 0) = source[k][t + history];
	for (std::size_t j = s; j < n; ++j) {
		const std::size_t src = j % s;
		for (std::size_t t = 0; t < cfg.n_steps; ++t) {
			const double noise = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * gauss(rng) : 0.0;
			ds.values.at(t, j, 0) = gain[j] * source[src][t + history - lag[j]] + noise;
		}
		out.truth.push_back({src, j, lag[j], gain[j]});
		const double d = cfg.meters_per_lag * static_cast<double>(lag[j]);
		edges.push_back({src, j, d});
		edges.push_back({j, src, d});
	}
	ds.distances = std::move(edges);
	ds.validate();
	return out;
}

void write_synth(const fs::path &dir, const SynthResult &result) {
	save_dataset(dir, result.dataset);
	std::ofstream out(dir / "truth_graph.csv");
	if (!out)
		throw std::runtime_error("cannot write " + (dir / "truth_graph.csv").string());
	out << "from,to,lag,gain\n";
	out.precision(17);
	for (const auto &e : result.truth)
		out << e.from << "," << e.to << "," << e.lag << "," << e.gain << "\n";
}

std::vector<TruthEdge> read_truth_graph(const fs::path &path) {
	const auto lines = read_lines(path);
	if (lines.empty() || lines.front() != "from,to,lag,gain")
		throw std::runtime_error(path.string() + ": expected header 'from,to,lag,gain'");
	std::vector<TruthEdge> edges;
	for (std::size_t i = 1; i < lines.size(); ++i) {
		std::stringstream ss(lines[i]);
		std::string a, b, c, d;
		std::getline(ss, a, ',');
		std::getline(ss, b, ',');
		std::getline(ss, c, ',');
		std::getline(ss, d);
		edges.push_back({std::stoull(a), std::stoull(b), std::stoull(c), std::stod(d)});
	}
	return edges;
}

} // namespace dfdgcn
