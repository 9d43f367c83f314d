#include "dfdgcn/dft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dfdgcn {

std::complex<double> twiddle(std::size_t k, std::size_t t, std::size_t period) {
	const std::size_t r = (k * t) % period;
	const double angle = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(period);
	return {std::cos(angle), -std::sin(angle)};
}

ComplexSpectrum dft_real(std::span<const double> signal) {
	if (signal.empty())
		throw std::invalid_argument("empty signal");
	const std::size_t n = signal.size();
	const std::size_t bins = n / 2 + 1;
	ComplexSpectrum out;
	out.signal_length = n;
	out.re.assign(bins, 0.0);
	out.im.assign(bins, 0.0);
	for (std::size_t k = 0; k < bins; ++k) {
		double re = 0.0, im = 0.0;
		for (std::size_t t = 0; t < n; ++t) {
			const auto w = twiddle(k, t, n);
			re += signal[t] * w.real();
			im += signal[t] * w.imag();
		}
		out.re[k] = re;
		out.im[k] = im;
	}
	// Exact zeros where real input forces them.
	out.im[0] = 0.0;
	if (n % 2 == 0)
		out.im[bins - 1] = 0.0;
	return out;
}

std::vector<std::complex<double>> full_spectrum(const ComplexSpectrum &spectrum) {
	const std::size_t n = spectrum.signal_length;
	std::vector<std::complex<double>> full(n);
	for (std::size_t k = 0; k < n; ++k) {
		if (k < spectrum.bins())
			full[k] = {spectrum.re[k], spectrum.im[k]};
		else
			full[k] = std::conj(std::complex<double>(spectrum.re[n - k], spectrum.im[n - k]));
	}
	return full;
}

ComplexSpectrum phase_rotate(const ComplexSpectrum &spectrum, long shift) {
	const long n = static_cast<long>(spectrum.signal_length);
	long s = shift % n;
	if (s < 0)
		s += n;
	ComplexSpectrum out = spectrum;
	for (std::size_t k = 0; k < spectrum.bins(); ++k) {
		const auto w = twiddle(k, static_cast<std::size_t>(s), spectrum.signal_length);
		const std::complex<double> v = std::complex<double>(spectrum.re[k], spectrum.im[k]) * w;
		out.re[k] = v.real();
		out.im[k] = v.imag();
	}
	return out;
}

std::vector<double> magnitude(const ComplexSpectrum &spectrum) {
	std::vector<double> out(spectrum.bins());
	for (std::size_t k = 0; k < out.size(); ++k)
		out[k] = std::hypot(spectrum.re[k], spectrum.im[k]);
	return out;
}

std::vector<double> shift_invariant_magnitude(std::span<const double> signal) {
	if (signal.empty())
		throw std::invalid_argument("empty signal");
	const std::size_t n = signal.size();
	std::vector<double> autocorr(n);
	std::vector<double> products(n);
	for (std::size_t lag = 0; lag < n; ++lag) {
		for (std::size_t t = 0; t < n; ++t)
			products[t] = signal[t] * signal[(t + lag) % n];
		std::sort(products.begin(), products.end());
		double s = 0.0;
		for (double p : products)
			s += p;
		autocorr[lag] = s;
	}
	std::vector<double> out(n / 2 + 1);
	for (std::size_t k = 0; k < out.size(); ++k) {
		double power = 0.0;
		for (std::size_t lag = 0; lag < n; ++lag)
			power += autocorr[lag] * twiddle(k, lag, n).real();
		out[k] = std::sqrt(std::max(power, 0.0));
	}
	return out;
}

} // namespace dfdgcn
