#ifndef GWD_SPECTRA_HPP
#define GWD_SPECTRA_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "potentials.hpp"
#include "state.hpp"

namespace gwd
{
	// C(t_k) = <psi_0|psi_{t_k}> on t_k = k dt.
	struct Autocorrelation
	{
		double dt = 1.0;
		std::vector<cplx> values;
		double e1g = 0.0;
		double hbar = 1.0;

		double time(std::size_t k) const { return static_cast<double>(k) * dt; }
		double final_time() const { return values.empty() ? 0.0 : time(values.size() - 1); }
	};

	struct Spectrum
	{
		std::vector<double> frequencies;
		std::vector<double> intensities;
		double damping_hwhm = 0.0;  // 0 when undamped
		bool truncated = false;     // |C(t_f)| was not negligible

		double spacing() const { return frequencies.size() < 2 ? 0.0 : frequencies[1] - frequencies[0]; }
	};

	inline constexpr double truncation_threshold = 1e-6;

	// C(t) exp[-ln 2 (t / hwhm)^2]
	inline Autocorrelation damp(const Autocorrelation& ac, double hwhm)
	{
		if (!(hwhm > 0.0))
			throw std::invalid_argument("damping half-width must be positive");
		Autocorrelation out = ac;
		for (std::size_t k = 0; k < out.values.size(); ++k) {
			const double x = ac.time(k) / hwhm;
			out.values[k] *= std::exp(-std::numbers::ln2 * x * x);
		}
		return out;
	}

	// Points j * 2 pi / t_f inside [lo, hi].
	inline std::vector<double> frequency_grid(const Autocorrelation& ac, double lo, double hi)
	{
		if (ac.values.size() < 2)
			throw std::invalid_argument("autocorrelation needs at least two samples");
		if (!(hi > lo))
			throw std::invalid_argument("frequency window must have hi > lo");
		const double d = 2.0 * pi / ac.final_time();
		std::vector<double> w;
		for (auto j = static_cast<long long>(std::ceil(lo / d)); static_cast<double>(j) * d <= hi; ++j)
			w.push_back(static_cast<double>(j) * d);
		return w;
	}

	// sigma(w) = Re int_0^t_f C(t) exp[i (w + E_1g / hbar) t] dt, trapezoid rule.
	inline Spectrum spectrum(const Autocorrelation& ac, std::span<const double> omega, double damping_hwhm = 0.0)
	{
		if (ac.values.size() < 2)
			throw std::invalid_argument("autocorrelation needs at least two samples");
		Spectrum s;
		s.frequencies.assign(omega.begin(), omega.end());
		s.intensities.resize(omega.size());
		s.damping_hwhm = damping_hwhm;
		s.truncated = std::abs(ac.values.back()) >= truncation_threshold;
		const std::size_t n = ac.values.size();
		constexpr std::size_t resync = 256;
		for (std::size_t j = 0; j < omega.size(); ++j) {
			const double w = omega[j] + ac.e1g / ac.hbar;
			const cplx rot = std::polar(1.0, w * ac.dt);
			cplx phase = 1.0, acc = 0.0;
			for (std::size_t k = 0; k < n; ++k) {
				if (k % resync == 0)
					phase = std::polar(1.0, w * ac.time(k));
				const double weight = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
				acc += weight * ac.values[k] * phase;
				phase *= rot;
			}
			s.intensities[j] = (acc * ac.dt).real();
		}
		return s;
	}

	inline Spectrum spectrum(const Autocorrelation& ac, double lo, double hi, double damping_hwhm = 0.0)
	{
		const auto w = frequency_grid(ac, lo, hi);
		return spectrum(ac, std::span<const double>(w), damping_hwhm);
	}

	// Overlaps <psi_0|psi_k> of trajectory samples spaced dt apart.
	inline Autocorrelation gwd_autocorrelation(std::span<const GaussianState> trajectory, const GaussianState& psi0,
		double dt, double e1g)
	{
		Autocorrelation ac;
		ac.dt = dt;
		ac.e1g = e1g;
		ac.hbar = psi0.hbar;
		const HellerParams h0 = to_heller(psi0);
		ac.values.reserve(trajectory.size());
		for (const auto& s : trajectory) {
			require_same_dim(s.dim(), psi0.dim(), "trajectory");
			ac.values.push_back(overlap(h0, to_heller(s)));
		}
		return ac;
	}

	// Local maxima with intensity above rel_height * max, by ascending frequency.
	inline std::vector<double> find_peaks(const Spectrum& s, double rel_height = 0.01)
	{
		std::vector<double> out;
		if (s.intensities.size() < 3)
			return out;
		const double top = *std::max_element(s.intensities.begin(), s.intensities.end());
		for (std::size_t j = 1; j + 1 < s.intensities.size(); ++j) {
			const double v = s.intensities[j];
			if (v > rel_height * top && v >= s.intensities[j - 1] && v > s.intensities[j + 1])
				out.push_back(s.frequencies[j]);
		}
		return out;
	}

	// Bound levels of V_eq + d (1 - exp[-a x])^2 with mass m:
	// E_n = V_eq + hbar w (n + 1/2) - [hbar w (n + 1/2)]^2 / (4 d), w = a sqrt(2 d / m).
	inline std::vector<double> morse_levels(double v_eq, double d, double a, double mass, double hbar, std::size_t count)
	{
		const double w = a * std::sqrt(2.0 * d / mass);
		const double n_max = 2.0 * d / (hbar * w) - 0.5;
		std::vector<double> e;
		for (std::size_t n = 0; n < count && static_cast<double>(n) <= n_max; ++n) {
			const double x = hbar * w * (static_cast<double>(n) + 0.5);
			e.push_back(v_eq + x - x * x / (4.0 * d));
		}
		return e;
	}

	inline std::vector<double> morse_levels(const CoupledMorse& pot, double mass, double hbar, std::size_t count)
	{
		if (pot.dim() != 1 || pot.de_cpl() != 0.0)
			throw std::invalid_argument("analytic Morse levels need an uncoupled one-dimensional Morse potential");
		return morse_levels(pot.v_eq(), pot.de_prime(), pot.a_prime()(0), mass, hbar, count);
	}

	// sqrt(sum (a - b)^2 dw) on a shared frequency grid.
	inline double spectral_distance(const Spectrum& a, const Spectrum& b)
	{
		if (a.frequencies != b.frequencies)
			throw std::invalid_argument("spectral distance requires identical frequency grids");
		double acc = 0.0;
		for (std::size_t j = 0; j < a.intensities.size(); ++j) {
			const double d = a.intensities[j] - b.intensities[j];
			acc += d * d;
		}
		return std::sqrt(acc * a.spacing());
	}
}

#endif
