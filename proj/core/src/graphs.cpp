#include "dfdgcn/graphs.hpp"

#include "dfdgcn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace dfdgcn {

namespace {

constexpr std::size_t kWindowLength = 12;

std::string trim(std::string s) {
	const auto b = s.find_first_not_of(" \t\r\n");
	const auto e = s.find_last_not_of(" \t\r\n");
	return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

void check_window(const Tensor &window, std::size_t channel) {
	if (window.rank() != 3)
		throw std::invalid_argument("graph window must be [N, C, T], got " + shape_string(window.shape()));
	if (window.dim(2) != kWindowLength)
		throw std::invalid_argument("graph window length " + std::to_string(window.dim(2)) + ", expected " +
		                            std::to_string(kWindowLength));
	if (channel >= window.dim(1))
		throw std::out_of_range("target channel " + std::to_string(channel) + " outside window with " +
		                        std::to_string(window.dim(1)) + " channels");
}

std::size_t tod_slot_for(std::size_t tod, const Tensor &e_tod) {
	if (tod >= kStepsPerDay)
		throw std::out_of_range("time-of-day index " + std::to_string(tod) + " outside 0..287");
	return tod * e_tod.dim(0) / kStepsPerDay;
}

} // namespace

GraphMode GraphMode::parse(const std::string &text) {
	GraphMode mode;
	std::stringstream ss(text);
	std::string part;
	while (std::getline(ss, part, '+')) {
		part = trim(part);
		if (part == "P")
			mode.predefined = true;
		else if (part == "SA")
			mode.adaptive = true;
		else if (part == "D")
			mode.dynamic = true;
		else if (part == "T")
			mode.time_domain = true;
		else
			throw std::invalid_argument("unknown graph label '" + part + "' (expected P, SA, D or T)");
	}
	if (mode.empty())
		throw std::invalid_argument("graph mode must name at least one graph");
	return mode;
}

std::string GraphMode::label() const {
	std::vector<std::string> parts;
	if (dynamic)
		parts.emplace_back("D");
	if (time_domain)
		parts.emplace_back("T");
	if (predefined)
		parts.emplace_back("P");
	if (adaptive)
		parts.emplace_back("SA");
	std::string out;
	for (std::size_t i = 0; i < parts.size(); ++i)
		out += (i ? "+" : "") + parts[i];
	return out;
}

std::vector<GraphMode> ablation_grid() {
	return {GraphMode::parse("P"),    GraphMode::parse("SA"),   GraphMode::parse("D"),
	        GraphMode::parse("T"),    GraphMode::parse("P+SA"), GraphMode::parse("D+P"),
	        GraphMode::parse("D+SA"), GraphMode::parse("D+P+SA")};
}

FreqMode parse_freq_mode(const std::string &text) {
	if (text == "realimag")
		return FreqMode::RealImag;
	if (text == "magnitude")
		return FreqMode::Magnitude;
	throw std::invalid_argument("unknown freq_mode '" + text + "' (expected realimag or magnitude)");
}

std::string freq_mode_name(FreqMode mode) {
	return mode == FreqMode::RealImag ? "realimag" : "magnitude";
}

// ---------------------------------------------------------------------------

std::vector<DistanceEdge> read_distances_csv(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in)
		throw std::runtime_error("cannot open distance file " + path.string());
	std::string line;
	if (!std::getline(in, line))
		throw std::runtime_error("distance file " + path.string() + " is empty");
	if (trim(line) != "from,to,cost")
		throw std::runtime_error("distance file " + path.string() + ": expected header 'from,to,cost', found '" +
		                         trim(line) + "'");
	std::vector<DistanceEdge> edges;
	std::size_t lineno = 1;
	while (std::getline(in, line)) {
		++lineno;
		line = trim(line);
		if (line.empty())
			continue;
		std::stringstream ss(line);
		std::string a, b, c;
		if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
			throw std::runtime_error("distance file " + path.string() + ":" + std::to_string(lineno) +
			                         ": expected three fields");
		try {
			DistanceEdge e;
			e.from = static_cast<std::size_t>(std::stoull(a));
			e.to = static_cast<std::size_t>(std::stoull(b));
			e.distance = std::stod(c);
			edges.push_back(e);
		} catch (const std::exception &) {
			throw std::runtime_error("distance file " + path.string() + ":" + std::to_string(lineno) +
			                         ": malformed row '" + line + "'");
		}
	}
	return edges;
}

void write_distances_csv(const std::filesystem::path &path, std::span<const DistanceEdge> edges) {
	std::ofstream out(path);
	if (!out)
		throw std::runtime_error("cannot write " + path.string());
	out << "from,to,cost\n";
	out.precision(17);
	for (const auto &e : edges)
		out << e.from << ',' << e.to << ',' << e.distance << '\n';
}

PredefinedGraphs build_predefined(std::span<const DistanceEdge> distances, std::size_t n, double kappa) {
	if (distances.empty())
		throw std::invalid_argument("predefined graph requires a non-empty distance list");
	const double inf = std::numeric_limits<double>::infinity();
	Tensor dist({n, n}, inf);
	for (std::size_t i = 0; i < n; ++i)
		dist.at(i, i) = 0.0;
	for (const auto &e : distances) {
		if (e.from >= n || e.to >= n)
			throw std::out_of_range("distance edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
			                        " references a node outside 0.." + std::to_string(n - 1));
		if (!(e.distance >= 0.0) || !std::isfinite(e.distance))
			throw std::invalid_argument("distance edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
			                            " has invalid distance");
		dist.at(e.from, e.to) = e.distance;
	}
	double mean = 0.0;
	for (const auto &e : distances)
		mean += e.distance;
	mean /= static_cast<double>(distances.size());
	double var = 0.0;
	for (const auto &e : distances)
		var += (e.distance - mean) * (e.distance - mean);
	const double sigma = std::sqrt(var / static_cast<double>(distances.size()));

	Tensor w({n, n});
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t j = 0; j < n; ++j) {
			const double d = dist.at(i, j);
			if (!std::isfinite(d))
				continue;
			// sigma == 0 (all listed distances equal) takes the sigma -> 0 limit.
			const double k = sigma > 0.0 ? std::exp(-(d * d) / (sigma * sigma)) : (d == 0.0 ? 1.0 : 0.0);
			w.at(i, j) = k < kappa ? 0.0 : k;
		}

	auto rownorm = [n](const Tensor &m) {
		Tensor out = m;
		for (std::size_t i = 0; i < n; ++i) {
			double s = 0.0;
			for (std::size_t j = 0; j < n; ++j)
				s += m.at(i, j);
			if (s > 0.0)
				for (std::size_t j = 0; j < n; ++j)
					out.at(i, j) = m.at(i, j) / s;
		}
		return out;
	};
	return {rownorm(w), rownorm(kernels::transpose(w))};
}

// ---------------------------------------------------------------------------

Tensor adaptive_graph(const Tensor &e1, const Tensor &e2) {
	Tape tape;
	return tape.value(adaptive_graph(tape, tape.constant(e1), tape.constant(e2)));
}

Var adaptive_graph(Tape &tape, Var e1, Var e2) {
	if (tape.value(e1).rank() != 2 || tape.value(e1).shape() != tape.value(e2).shape())
		throw std::invalid_argument("adaptive_graph: embeddings " + shape_string(tape.value(e1).shape()) + " and " +
		                            shape_string(tape.value(e2).shape()) + " must both be [N, d]");
	Var logits = ad::matmul(tape, e1, ad::transpose(tape, e2));
	return ad::softmax_rows(tape, ad::relu(tape, logits));
}

std::size_t spectrum_feature_count(FreqMode mode, std::size_t t) {
	const std::size_t bins = t / 2 + 1;
	return mode == FreqMode::RealImag ? 2 * bins : bins;
}

Var spectrum_features(Tape &tape, Var series, FreqMode mode) {
	return mode == FreqMode::RealImag ? ad::dft_realimag(tape, series) : ad::dft_magnitude(tape, series);
}

Var graph_from_features(Tape &tape, Var features, std::size_t tod_slot, std::size_t dow, const GraphLearnerVars &p) {
	const std::size_t n = tape.value(features).dim(0);
	if (tape.value(p.e_id).dim(0) != n)
		throw std::invalid_argument("identity embedding has " + std::to_string(tape.value(p.e_id).dim(0)) +
		                            " rows for " + std::to_string(n) + " nodes");
	if (dow >= tape.value(p.e_dow).dim(0))
		throw std::out_of_range("day-of-week index " + std::to_string(dow) + " outside 0..6");
	if (tod_slot >= tape.value(p.e_tod).dim(0))
		throw std::out_of_range("time-of-day slot " + std::to_string(tod_slot) + " out of range");

	Var series_embed = ad::matmul(tape, features, p.w_map);
	Var dow_embed = ad::repeat_rows(tape, ad::gather_rows(tape, p.e_dow, {dow}), n);
	Var tod_embed = ad::repeat_rows(tape, ad::gather_rows(tape, p.e_tod, {tod_slot}), n);
	Var de = ad::concat(tape, {series_embed, p.e_id, dow_embed, tod_embed}, 1); // [N, 44]
	// 1x1 convolution with the embedding dims as channels and nodes as positions.
	Var conv = ad::conv1x1(tape, ad::transpose(tape, de), p.w_conv, p.b_conv); // [30, N]
	Var de2 = ad::transpose(tape, conv);                                       // [N, 30]
	Var logits = ad::matmul(tape, ad::matmul(tape, de2, p.w_adj), ad::transpose(tape, de2));
	return ad::softmax_rows(tape, ad::relu(tape, logits));
}

Tensor target_series(const Tensor &window, std::size_t channel) {
	check_window(window, channel);
	const std::size_t n = window.dim(0), t = window.dim(2);
	Tensor out({n, t});
	for (std::size_t i = 0; i < n; ++i)
		for (std::size_t k = 0; k < t; ++k)
			out.at(i, k) = window.at(i, channel, k);
	return out;
}

Var frequency_graph(Tape &tape, const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerVars &p,
                    FreqMode mode, std::size_t channel) {
	Var series = tape.constant(target_series(window, channel));
	const std::size_t slot = tod_slot_for(tod, tape.value(p.e_tod));
	return graph_from_features(tape, spectrum_features(tape, series, mode), slot, dow, p);
}

Tensor frequency_graph(const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerParams &p,
                       FreqMode mode, std::size_t channel) {
	Tape tape;
	return tape.value(frequency_graph(tape, window, tod, dow, bind_constants(tape, p), mode, channel));
}

Var time_domain_graph(Tape &tape, const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerVars &p,
                      std::size_t channel) {
	Var series = tape.constant(target_series(window, channel));
	const std::size_t slot = tod_slot_for(tod, tape.value(p.e_tod));
	return graph_from_features(tape, series, slot, dow, p);
}

Tensor time_domain_graph(const Tensor &window, std::size_t tod, std::size_t dow, const GraphLearnerParams &p,
                         std::size_t channel) {
	Tape tape;
	return tape.value(time_domain_graph(tape, window, tod, dow, bind_constants(tape, p), channel));
}

GraphLearnerVars bind_constants(Tape &tape, const GraphLearnerParams &p) {
	return {tape.reference(p.w_map),  tape.reference(p.e_id),   tape.reference(p.e_dow), tape.reference(p.e_tod),
	        tape.reference(p.w_conv), tape.reference(p.b_conv), tape.reference(p.w_adj)};
}

bool is_row_stochastic(const Tensor &a, double tol) {
	if (a.rank() != 2)
		return false;
	for (std::size_t i = 0; i < a.dim(0); ++i) {
		double s = 0.0;
		for (std::size_t j = 0; j < a.dim(1); ++j) {
			if (a.at(i, j) < 0.0)
				return false;
			s += a.at(i, j);
		}
		if (std::abs(s - 1.0) > tol)
			return false;
	}
	return true;
}

} // namespace dfdgcn
