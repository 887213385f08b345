#ifndef GWD_EFFECTIVE_HPP
#define GWD_EFFECTIVE_HPP

#include <stdexcept>
#include <string>
#include <string_view>

#include "potentials.hpp"
#include "state.hpp"

namespace gwd
{
	/// Which Gaussian wavepacket dynamics drives the wavepacket.
	///  - lha: local harmonic (Heller's thawed Gaussian)
	///  - lca: local cubic variational
	///  - var: fully variational
	enum class MethodKind { lha, lca, var };

	inline std::string_view to_string(MethodKind m)
	{
		switch (m) {
			case MethodKind::lha: return "lha";
			case MethodKind::lca: return "lca";
			case MethodKind::var: return "var";
		}
		return "?";
	}

	inline MethodKind parse_method(std::string_view s)
	{
		if (s == "lha") return MethodKind::lha;
		if (s == "lca") return MethodKind::lca;
		if (s == "var") return MethodKind::var;
		throw std::invalid_argument("unknown method '" + std::string(s) + "' (expected lha, lca or var)");
	}

	/// Coefficients of the effective potential V0 + V1.x + x.V2.x/2, x = q - q_t.
	struct EffectiveCoefficients
	{
		double V0 = 0.0;
		Vec V1;
		Mat V2;
		MethodKind method = MethodKind::lha;
	};

	/// The coefficients depend on the wavepacket only through its center and
	/// position covariance; this overload makes that explicit.
	template <PotentialModel Pot>
	EffectiveCoefficients effective_coefficients(MethodKind method, const Pot& pot, const Vec& q, const Mat& sigma)
	{
		EffectiveCoefficients c;
		c.method = method;
		switch (method) {
			case MethodKind::lha: {
				Taylor t = pot.derivatives(q, 2);
				c.V0 = t.value;
				c.V1 = std::move(t.gradient);
				c.V2 = std::move(t.hessian);
				break;
			}
			case MethodKind::lca: {
				Taylor t = pot.derivatives(q, 3);
				c.V0 = t.value;
				c.V1 = t.gradient + 0.5 * t.third.contract_last_two(sigma);
				c.V2 = std::move(t.hessian);
				break;
			}
			case MethodKind::var: {
				Taylor t = pot.expectations(q, sigma, 2);
				c.V0 = t.value - 0.5 * (t.hessian * sigma).trace();
				c.V1 = std::move(t.gradient);
				c.V2 = std::move(t.hessian);
				break;
			}
		}
		return c;
	}

	template <PotentialModel Pot>
	EffectiveCoefficients effective_coefficients(MethodKind method, const Pot& pot, const GaussianState& s)
	{
		return effective_coefficients(method, pot, s.q, position_covariance(s));
	}

	/// <V_eff> = V0 + Tr(V2 Sigma)/2
	inline double effective_potential_mean(const EffectiveCoefficients& c, const Mat& sigma)
	{
		return c.V0 + 0.5 * (c.V2 * sigma).trace();
	}

	template <PotentialModel Pot>
	double effective_potential_mean(MethodKind method, const Pot& pot, const GaussianState& s)
	{
		const Mat sigma = position_covariance(s);
		return effective_potential_mean(effective_coefficients(method, pot, s.q, sigma), sigma);
	}
}

#endif
