#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace dfdgcn {

/// One-sided spectrum of a real signal of length T: floor(T/2)+1 bins.
struct ComplexSpectrum {
	std::vector<double> re;
	std::vector<double> im;
	std::size_t signal_length = 0;

	std::size_t bins() const noexcept { return re.size(); }
};

/// Direct O(T^2) transform X[k] = sum_t x[t] e^{-j 2 pi k t / T}, k = 0..T/2.
/// Throws std::invalid_argument("empty signal") on empty input.
ComplexSpectrum dft_real(std::span<const double> signal);

/// Expands a one-sided spectrum into all T bins using conjugate symmetry.
std::vector<std::complex<double>> full_spectrum(const ComplexSpectrum &spectrum);

/// Multiplies bin k by e^{-j 2 pi k s / T}: the spectrum of the signal
/// circularly delayed by s steps.
ComplexSpectrum phase_rotate(const ComplexSpectrum &spectrum, long shift);

std::vector<double> magnitude(const ComplexSpectrum &spectrum);

/// |X[k]| computed from the circular autocorrelation with each lag summed in
/// sorted order, so the result is bit-identical for every circular shift of
/// the input.
std::vector<double> shift_invariant_magnitude(std::span<const double> signal);

/// e^{-j 2 pi k t / T} evaluated with the phase index reduced mod T.
std::complex<double> twiddle(std::size_t k, std::size_t t, std::size_t period);

} // namespace dfdgcn
