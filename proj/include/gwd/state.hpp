#ifndef GWD_STATE_HPP
#define GWD_STATE_HPP

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>

#include "linalg.hpp"

namespace gwd
{
	// Real symmetric positive-definite mass matrix together with its inverse.
	struct MassMatrix
	{
		Mat matrix;
		Mat inverse;

		MassMatrix() = default;

		explicit MassMatrix(const Mat& m)
		{
			if (m.rows() != m.cols() || m.rows() == 0)
				throw std::invalid_argument("mass matrix must be square and nonempty");
			if ((m - m.transpose()).norm() > 1e-12 * (1.0 + m.norm()))
				throw std::invalid_argument("mass matrix must be symmetric");
			if (!is_positive_definite(m))
				throw std::invalid_argument("mass matrix must be positive definite");
			matrix = symmetrized(m);
			inverse = symmetrized(Mat(matrix.inverse()));
		}

		static MassMatrix identity(Eigen::Index dim) { return MassMatrix(Mat::Identity(dim, dim)); }

		Eigen::Index dim() const { return matrix.rows(); }
	};

	// psi(q) = exp[(i/hbar)(x^T A x / 2 + p^T x + gamma)], x = q - q_t.
	struct HellerParams
	{
		Vec q;
		Vec p;
		CMat A;
		cplx gamma = 0.0;
		double hbar = 1.0;
		MassMatrix mass;

		Eigen::Index dim() const { return q.size(); }
	};

	// Hagedorn parametrization, A = P Q^-1:
	//   psi(q) = (pi hbar)^(-D/4) (det Q)^(-1/2) exp[(i/hbar)(x^T P Q^-1 x / 2 + p^T x + S)].
	// log_det_Q carries the branch of log det Q continuously along a trajectory;
	// it fixes the global phase of psi and is updated by every flow that moves Q.
	struct GaussianState
	{
		Vec q;
		Vec p;
		CMat Q;
		CMat P;
		double S = 0.0;
		cplx log_det_Q = 0.0;
		double hbar = 1.0;
		MassMatrix mass;

		Eigen::Index dim() const { return q.size(); }
	};

	struct HagedornResiduals
	{
		double symmetric;   // |Q^T P - P^T Q|
		double symplectic;  // |Q^+ P - P^+ Q - 2i I|
	};

	inline HagedornResiduals hagedorn_residuals(const GaussianState& s)
	{
		const auto d = s.dim();
		const CMat sym = s.Q.transpose() * s.P - s.P.transpose() * s.Q;
		const CMat spl = s.Q.adjoint() * s.P - s.P.adjoint() * s.Q - cplx(0.0, 2.0) * CMat::Identity(d, d);
		return {sym.norm(), spl.norm()};
	}

	inline void validate(const HellerParams& h)
	{
		const auto d = h.dim();
		require_same_dim(h.p.size(), d, "momentum");
		require_same_dim(h.A.rows(), d, "width rows");
		require_same_dim(h.A.cols(), d, "width cols");
		require_same_dim(h.mass.dim(), d, "mass");
		if (!(h.hbar > 0.0))
			throw std::invalid_argument("hbar must be positive");
		if ((h.A - h.A.transpose()).norm() > 1e-12 * (1.0 + h.A.norm()))
			throw InvalidWidthError("width matrix A is not symmetric");
		if (!is_positive_definite(h.A.imag()))
			throw InvalidWidthError("Im A is not positive definite");
	}

	inline void validate(const GaussianState& s, double tol = 1e-10)
	{
		const auto d = s.dim();
		require_same_dim(s.p.size(), d, "momentum");
		require_same_dim(s.Q.rows(), d, "Q rows");
		require_same_dim(s.P.rows(), d, "P rows");
		require_same_dim(s.mass.dim(), d, "mass");
		const auto r = hagedorn_residuals(s);
		if (!(r.symmetric <= tol && r.symplectic <= tol))
			throw DegenerateStateError("Hagedorn relations violated");
	}

	// A = P Q^-1, symmetrized.
	inline CMat width_matrix(const GaussianState& s)
	{
		Eigen::PartialPivLU<CMat> lu(s.Q.transpose());
		if (!(lu.rcond() > 1e-14))
			throw DegenerateStateError("Q is singular");
		return symmetrized(CMat(lu.solve(s.P.transpose()).transpose()));
	}

	inline HellerParams to_heller(const GaussianState& s)
	{
		HellerParams h;
		h.q = s.q;
		h.p = s.p;
		h.A = width_matrix(s);
		const double d = static_cast<double>(s.dim());
		h.gamma = s.S + cplx(0.0, 0.5 * s.hbar) * s.log_det_Q
			+ cplx(0.0, 0.25 * s.hbar * d * std::log(pi * s.hbar));
		h.hbar = s.hbar;
		h.mass = s.mass;
		return h;
	}

	// Gauge: Q = (Im A)^(-1/2) real symmetric positive definite, P = A Q.
	// The result is always normalized; Re gamma becomes the action S.
	inline GaussianState from_heller(const HellerParams& h)
	{
		validate(h);
		const Mat im_a = symmetrized(Mat(h.A.imag()));
		const Mat q_real = spd_inverse_sqrt(im_a);
		GaussianState s;
		s.q = h.q;
		s.p = h.p;
		s.Q = q_real.cast<cplx>();
		s.P = h.A * s.Q;
		s.S = h.gamma.real();
		s.log_det_Q = -0.5 * spd_log_det(im_a);
		s.hbar = h.hbar;
		s.mass = h.mass;
		return s;
	}

	// log ||psi|| = -Im gamma / hbar + log det(pi hbar / Im A) / 4
	inline double log_norm(const HellerParams& h)
	{
		const double d = static_cast<double>(h.dim());
		const Mat im_a = h.A.imag();
		return -h.gamma.imag() / h.hbar + 0.25 * (d * std::log(pi * h.hbar) - spd_log_det(im_a));
	}

	inline double norm(const HellerParams& h) { return std::exp(log_norm(h)); }

	// |‖psi‖ - 1| without cancellation.
	inline double norm_deviation(const HellerParams& h) { return std::abs(std::expm1(log_norm(h))); }

	inline Mat position_covariance(const GaussianState& s)
	{
		return symmetrized(Mat((0.5 * s.hbar) * (s.Q * s.Q.adjoint()).real()));
	}

	inline Mat position_covariance(const HellerParams& h)
	{
		return symmetrized(Mat((0.5 * h.hbar) * Mat(h.A.imag()).inverse()));
	}

	// (hbar/2) A (Im A)^-1 A^+ ; real for symmetric A.
	inline Mat momentum_covariance(const HellerParams& h)
	{
		const Mat inv_im = Mat(h.A.imag()).inverse();
		const CMat c = h.A * inv_im.cast<cplx>() * h.A.adjoint();
		return symmetrized(Mat((0.5 * h.hbar) * c.real()));
	}

	inline Mat momentum_covariance(const GaussianState& s)
	{
		return symmetrized(Mat((0.5 * s.hbar) * (s.P * s.P.adjoint()).real()));
	}

	namespace detail
	{
		// log <a^|b^> for the unit-normalized versions of two Gaussians, written in
		// terms of parameter differences so that log|<a^|b^>| (second order in the
		// differences) is free of first-order cancellation.
		inline cplx log_normalized_overlap(const HellerParams& a, const HellerParams& b)
		{
			const auto d = a.dim();
			require_same_dim(b.dim(), d, "overlap");
			if (a.hbar != b.hbar)
				throw std::invalid_argument("overlap: states use different hbar");
			const double hbar = a.hbar;

			const Mat im_a = a.A.imag(), im_b = b.A.imag();
			const Mat k = symmetrized(Mat(0.5 * (im_a + im_b)));
			const Mat half_dim = symmetrized(Mat(0.5 * (im_b - im_a)));
			const Mat half_dre = symmetrized(Mat(0.5 * (b.A.real() - a.A.real())));

			Eigen::LLT<Mat> llt(k);
			if (llt.info() != Eigen::Success)
				throw InvalidWidthError("overlap: Im A not positive definite");
			const Mat l_inv = llt.matrixL().solve(Mat::Identity(d, d));
			Eigen::SelfAdjointEigenSolver<Mat> es_nu(symmetrized(Mat(l_inv * half_dim * l_inv.transpose())), Eigen::EigenvaluesOnly);
			Eigen::SelfAdjointEigenSolver<Mat> es_rho(symmetrized(Mat(l_inv * half_dre * l_inv.transpose())), Eigen::EigenvaluesOnly);

			cplx width = 0.0;
			for (Eigen::Index j = 0; j < d; ++j) {
				const double nu = es_nu.eigenvalues()(j);
				const double rho = es_rho.eigenvalues()(j);
				width += cplx(0.25 * std::log1p(-nu * nu), 0.0);
				width += cplx(-0.25 * std::log1p(rho * rho), 0.5 * std::atan(rho));
			}

			const Vec dq = b.q - a.q;
			const Vec dp = b.p - a.p;
			const cplx i_over_hbar(0.0, 1.0 / hbar);
			const CMat m = (2.0 / hbar) * (k.cast<cplx>() - cplx(0.0, 1.0) * half_dre.cast<cplx>());
			const CVec v = i_over_hbar * (dp.cast<cplx>() - b.A * dq.cast<cplx>());
			const CVec minv_v = m.partialPivLu().solve(v);
			const cplx gauss = 0.5 * (v.transpose() * minv_v)(0, 0);
			const cplx quad = (dq.cast<cplx>().transpose() * b.A * dq.cast<cplx>())(0, 0);
			const cplx linear = i_over_hbar * (0.5 * quad - b.p.dot(dq) + (b.gamma.real() - a.gamma.real()));
			return width + gauss + linear;
		}
	}

	// <a|b> = \int conj(psi_a) psi_b dq
	inline cplx overlap(const HellerParams& a, const HellerParams& b)
	{
		const cplx l = detail::log_normalized_overlap(a, b);
		return std::exp(l + log_norm(a) + log_norm(b));
	}

	// ‖a - b‖ = sqrt(‖a‖² + ‖b‖² - 2 Re<a|b>), evaluated via the normalized overlap
	// so that small distances keep relative precision.
	inline double state_distance(const HellerParams& a, const HellerParams& b)
	{
		const double na = norm(a), nb = norm(b);
		const cplx l = detail::log_normalized_overlap(a, b);
		const double d2 = (na - nb) * (na - nb) - 2.0 * na * nb * real_expm1(l);
		return d2 > 0.0 ? std::sqrt(d2) : 0.0;
	}

	inline double state_distance(const GaussianState& a, const GaussianState& b)
	{
		return state_distance(to_heller(a), to_heller(b));
	}

	inline double norm_deviation(const GaussianState& s) { return norm_deviation(to_heller(s)); }

	// One text line: t, q, p, Re Q, Im Q, Re P, Im P (column-major), S, Re/Im log det Q.
	inline void write_state_record(std::ostream& os, double t, const GaussianState& s)
	{
		char buf[40];
		auto put = [&](double x, bool first = false) {
			std::snprintf(buf, sizeof buf, "%.17g", x);
			if (!first)
				os << ' ';
			os << buf;
		};
		put(t, true);
		for (Eigen::Index j = 0; j < s.dim(); ++j) put(s.q(j));
		for (Eigen::Index j = 0; j < s.dim(); ++j) put(s.p(j));
		for (const CMat* m : {&s.Q, &s.P}) {
			for (Eigen::Index k = 0; k < m->size(); ++k) put((*m)(k).real());
			for (Eigen::Index k = 0; k < m->size(); ++k) put((*m)(k).imag());
		}
		put(s.S);
		put(s.log_det_Q.real());
		put(s.log_det_Q.imag());
		os << '\n';
	}

	inline std::pair<double, GaussianState> read_state_record(const std::string& line, Eigen::Index dim,
		double hbar, const MassMatrix& mass)
	{
		std::istringstream is(line);
		auto get = [&]() {
			double x;
			if (!(is >> x))
				throw std::runtime_error("malformed state record");
			return x;
		};
		const double t = get();
		GaussianState s;
		s.q.resize(dim);
		s.p.resize(dim);
		for (Eigen::Index j = 0; j < dim; ++j) s.q(j) = get();
		for (Eigen::Index j = 0; j < dim; ++j) s.p(j) = get();
		for (CMat* m : {&s.Q, &s.P}) {
			m->resize(dim, dim);
			for (Eigen::Index k = 0; k < m->size(); ++k) (*m)(k) = get();
			for (Eigen::Index k = 0; k < m->size(); ++k) (*m)(k) += cplx(0.0, get());
		}
		s.S = get();
		const double lre = get();
		s.log_det_Q = cplx(lre, get());
		s.hbar = hbar;
		s.mass = mass;
		return {t, std::move(s)};
	}
}

#endif
