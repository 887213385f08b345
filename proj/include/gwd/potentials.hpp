#ifndef GWD_POTENTIALS_HPP
#define GWD_POTENTIALS_HPP

#include <cmath>
#include <concepts>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include "linalg.hpp"
#include "state.hpp"
#include "tensor.hpp"

namespace gwd
{
	// Value and derivative tensors up to `order`, either at a point or as
	// expectation values in a Gaussian. Entries above `order` are left empty.
	struct Taylor
	{
		int order = 0;
		double value = 0.0;
		Vec gradient;
		Mat hessian;
		Tensor3 third;
		Tensor4 fourth;

		Taylor() = default;
		Taylor(int max_order, Eigen::Index dim) : order(max_order)
		{
			if (max_order < 0 || max_order > 4)
				throw std::invalid_argument("derivative order must be in 0..4");
			if (order >= 1) gradient = Vec::Zero(dim);
			if (order >= 2) hessian = Mat::Zero(dim, dim);
			if (order >= 3) third = Tensor3(dim);
			if (order >= 4) fourth = Tensor4(dim);
		}
	};

	// Contract every potential model fulfils: derivatives at a point and
	// expectation values in a Gaussian with center q and position covariance sigma.
	template <typename P>
	concept PotentialModel = requires(const P& pot, const Vec& q, const Mat& sigma, int order) {
		{ pot.dim() } -> std::convertible_to<Eigen::Index>;
		{ pot.value(q) } -> std::convertible_to<double>;
		{ pot.derivatives(q, order) } -> std::same_as<Taylor>;
		{ pot.expectations(q, sigma, order) } -> std::same_as<Taylor>;
	};

	namespace detail
	{
		// Adds c_n * dir^{(x)n} to the rank-n slots, c_n = d (-2 (-1)^n y1 + (-2)^n y2),
		// i.e. the n-th derivative of d (1 - e^{-s})^2 along s = dir . x, with y1, y2
		// standing for e^{-s}, e^{-2s} or their Gaussian averages.
		inline void add_morse_derivatives(Taylor& t, const Vec& dir, double d, double y1, double y2)
		{
			const auto dim = dir.size();
			double c[5];
			double sign = -1.0, pow2 = -2.0;
			for (int n = 1; n <= 4; ++n) {
				c[n] = d * (-2.0 * sign * y1 + pow2 * y2);
				sign = -sign;
				pow2 *= -2.0;
			}
			if (t.order >= 1) t.gradient += c[1] * dir;
			if (t.order >= 2) t.hessian += c[2] * dir * dir.transpose();
			if (t.order >= 3)
				for (Eigen::Index k = 0; k < dim; ++k)
					for (Eigen::Index j = 0; j < dim; ++j) {
						const double f = c[3] * dir(j) * dir(k);
						if (f == 0.0)
							continue;
						for (Eigen::Index i = 0; i < dim; ++i)
							t.third(i, j, k) += f * dir(i);
					}
			if (t.order >= 4)
				for (Eigen::Index l = 0; l < dim; ++l)
					for (Eigen::Index k = 0; k < dim; ++k)
						for (Eigen::Index j = 0; j < dim; ++j) {
							const double f = c[4] * dir(j) * dir(k) * dir(l);
							if (f == 0.0)
								continue;
							for (Eigen::Index i = 0; i < dim; ++i)
								t.fourth(i, j, k, l) += f * dir(i);
						}
		}

		// Single-coordinate version: only the all-j diagonal entries are touched.
		inline void add_axis_morse_derivatives(Taylor& t, Eigen::Index j, double a, double d, double y1, double y2)
		{
			double pa = -a, p2a = -2.0 * a;
			double c[5];
			for (int n = 1; n <= 4; ++n) {
				c[n] = d * (-2.0 * pa * y1 + p2a * y2);
				pa *= -a;
				p2a *= -2.0 * a;
			}
			if (t.order >= 1) t.gradient(j) += c[1];
			if (t.order >= 2) t.hessian(j, j) += c[2];
			if (t.order >= 3) t.third(j, j, j) += c[3];
			if (t.order >= 4) t.fourth(j, j, j, j) += c[4];
		}
	}

	// V(q) = V_eq + sum_j d'(1 - y_j)^2 + d (1 - y)^2,
	// y_j = exp[-a'_j (q_j - q_eq,j)], y = exp[-a . (q - q_eq)],
	// a'_j = chi'_j sqrt(8 d'), a = chi sqrt(8 d).
	class CoupledMorse
	{
	public:
		CoupledMorse(Vec q_eq, double v_eq, double de_prime, Vec chi_prime, double de_cpl, Vec chi_cpl,
			double exponent_cap = 200.0)
			: q_eq_(std::move(q_eq)), v_eq_(v_eq), de_prime_(de_prime), chi_prime_(std::move(chi_prime)),
			  de_cpl_(de_cpl), chi_cpl_(std::move(chi_cpl)), cap_(exponent_cap)
		{
			const auto d = q_eq_.size();
			if (d == 0)
				throw std::invalid_argument("coupled Morse: dimension must be positive");
			require_same_dim(chi_prime_.size(), d, "chi_prime");
			require_same_dim(chi_cpl_.size(), d, "chi");
			if (!(de_prime_ > 0.0))
				throw std::invalid_argument("coupled Morse: d_e_prime must be positive");
			if (!(chi_prime_.array() > 0.0).all())
				throw std::invalid_argument("coupled Morse: chi_prime entries must be positive");
			if (!(de_cpl_ >= 0.0))
				throw std::invalid_argument("coupled Morse: d_e must be nonnegative");
			a_prime_ = chi_prime_ * std::sqrt(8.0 * de_prime_);
			a_cpl_ = chi_cpl_ * std::sqrt(8.0 * de_cpl_);
		}

		Eigen::Index dim() const { return q_eq_.size(); }
		const Vec& q_eq() const { return q_eq_; }
		double v_eq() const { return v_eq_; }
		double de_prime() const { return de_prime_; }
		const Vec& chi_prime() const { return chi_prime_; }
		double de_cpl() const { return de_cpl_; }
		const Vec& chi_cpl() const { return chi_cpl_; }
		const Vec& a_prime() const { return a_prime_; }
		const Vec& a_cpl() const { return a_cpl_; }
		double exponent_cap() const { return cap_; }

		double value(const Vec& q) const { return derivatives(q, 0).value; }

		Taylor derivatives(const Vec& q, int order) const
		{
			require_same_dim(q.size(), dim(), "coupled Morse point");
			Taylor t(order, dim());
			t.value = v_eq_;
			for (Eigen::Index j = 0; j < dim(); ++j) {
				const double arg = -a_prime_(j) * (q(j) - q_eq_(j));
				check(arg);
				const double one_minus_y = -std::expm1(arg);
				const double y = std::exp(arg);
				t.value += de_prime_ * one_minus_y * one_minus_y;
				detail::add_axis_morse_derivatives(t, j, a_prime_(j), de_prime_, y, y * y);
			}
			if (de_cpl_ > 0.0) {
				const double arg = -a_cpl_.dot(q - q_eq_);
				check(arg);
				const double one_minus_y = -std::expm1(arg);
				const double y = std::exp(arg);
				t.value += de_cpl_ * one_minus_y * one_minus_y;
				detail::add_morse_derivatives(t, a_cpl_, de_cpl_, y, y * y);
			}
			return t;
		}

		// Uses <exp(-a.(q^ - q_eq))> = y(a, q_t) exp(a^T Sigma a / 2).
		Taylor expectations(const Vec& q, const Mat& sigma, int order) const
		{
			require_same_dim(q.size(), dim(), "coupled Morse center");
			require_same_dim(sigma.rows(), dim(), "covariance");
			Taylor t(order, dim());
			t.value = v_eq_;
			for (Eigen::Index j = 0; j < dim(); ++j) {
				const double arg = -a_prime_(j) * (q(j) - q_eq_(j));
				const double var = a_prime_(j) * a_prime_(j) * sigma(j, j);
				check(arg + var);
				const double y1 = std::exp(arg + 0.5 * var);
				const double y2 = std::exp(2.0 * arg + 2.0 * var);
				t.value += de_prime_ * (1.0 - 2.0 * y1 + y2);
				detail::add_axis_morse_derivatives(t, j, a_prime_(j), de_prime_, y1, y2);
			}
			if (de_cpl_ > 0.0) {
				const double arg = -a_cpl_.dot(q - q_eq_);
				const double var = a_cpl_.dot(sigma * a_cpl_);
				check(arg + var);
				const double y1 = std::exp(arg + 0.5 * var);
				const double y2 = std::exp(2.0 * arg + 2.0 * var);
				t.value += de_cpl_ * (1.0 - 2.0 * y1 + y2);
				detail::add_morse_derivatives(t, a_cpl_, de_cpl_, y1, y2);
			}
			return t;
		}

	private:
		void check(double arg) const
		{
			if (!(arg <= cap_))
				throw std::range_error("coupled Morse: exponent argument " + std::to_string(arg)
					+ " exceeds cap " + std::to_string(cap_) + " (trajectory entered the repulsive wall)");
		}

		Vec q_eq_;
		double v_eq_;
		double de_prime_;
		Vec chi_prime_;
		double de_cpl_;
		Vec chi_cpl_;
		double cap_;
		Vec a_prime_;
		Vec a_cpl_;
	};

	// V(q) = V_eq + (q - q_eq)^T k (q - q_eq) / 2
	class HarmonicPotential
	{
	public:
		HarmonicPotential(Vec q_eq, Mat k, double v_eq = 0.0) : q_eq_(std::move(q_eq)), k_(std::move(k)), v_eq_(v_eq)
		{
			require_same_dim(k_.rows(), q_eq_.size(), "force constants");
			require_same_dim(k_.cols(), q_eq_.size(), "force constants");
			if ((k_ - k_.transpose()).norm() > 1e-12 * (1.0 + k_.norm()))
				throw std::invalid_argument("harmonic potential: force-constant matrix must be symmetric");
			k_ = symmetrized(k_);
		}

		Eigen::Index dim() const { return q_eq_.size(); }
		const Vec& q_eq() const { return q_eq_; }
		const Mat& force_constants() const { return k_; }
		double v_eq() const { return v_eq_; }

		double value(const Vec& q) const
		{
			const Vec x = q - q_eq_;
			return v_eq_ + 0.5 * x.dot(k_ * x);
		}

		Taylor derivatives(const Vec& q, int order) const
		{
			require_same_dim(q.size(), dim(), "harmonic point");
			Taylor t(order, dim());
			const Vec x = q - q_eq_;
			t.value = v_eq_ + 0.5 * x.dot(k_ * x);
			if (order >= 1) t.gradient = k_ * x;
			if (order >= 2) t.hessian = k_;
			return t;
		}

		Taylor expectations(const Vec& q, const Mat& sigma, int order) const
		{
			Taylor t = derivatives(q, order);
			t.value += 0.5 * (k_ * sigma).trace();
			return t;
		}

	private:
		Vec q_eq_;
		Mat k_;
		double v_eq_;
	};

	struct GroundState
	{
		GaussianState state;
		double zero_point_energy;
		Vec frequencies;
	};

	// Ground vibrational state of a harmonic surface:
	// A = i m^1/2 (m^-1/2 k m^-1/2)^1/2 m^1/2, ZPE = (hbar/2) sum_j omega_j.
	inline GroundState harmonic_ground_state(const HarmonicPotential& pot, const MassMatrix& mass, double hbar = 1.0)
	{
		require_same_dim(mass.dim(), pot.dim(), "mass");
		const Mat k = pot.force_constants();
		if (!is_positive_definite(k))
			throw std::invalid_argument("harmonic ground state: force constants must be positive definite");
		const Mat m_half = spd_sqrt(mass.matrix);
		const Mat m_inv_half = spd_inverse_sqrt(mass.matrix);
		const Mat mass_weighted = symmetrized(Mat(m_inv_half * k * m_inv_half));
		Eigen::SelfAdjointEigenSolver<Mat> es(mass_weighted);
		const Vec omega = es.eigenvalues().array().sqrt();
		const Mat root = es.operatorSqrt();

		HellerParams h;
		h.q = pot.q_eq();
		h.p = Vec::Zero(pot.dim());
		h.A = cplx(0.0, 1.0) * symmetrized(Mat(m_half * root * m_half)).cast<cplx>();
		h.hbar = hbar;
		h.mass = mass;
		h.gamma = 0.0;
		return {from_heller(h), 0.5 * hbar * omega.sum(), omega};
	}

	// Forwards to a wrapped model and counts derivative/expectation evaluations.
	template <PotentialModel Pot>
	class CountingPotential
	{
	public:
		explicit CountingPotential(const Pot& pot) : pot_(&pot) {}

		Eigen::Index dim() const { return pot_->dim(); }
		double value(const Vec& q) const { return pot_->value(q); }
		Taylor derivatives(const Vec& q, int order) const
		{
			++count_;
			return pot_->derivatives(q, order);
		}
		Taylor expectations(const Vec& q, const Mat& sigma, int order) const
		{
			++count_;
			return pot_->expectations(q, sigma, order);
		}

		std::size_t evaluations() const { return count_; }
		void reset() { count_ = 0; }

	private:
		const Pot* pot_;
		mutable std::size_t count_ = 0;
	};
}

#endif
