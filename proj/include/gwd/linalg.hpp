#ifndef GWD_LINALG_HPP
#define GWD_LINALG_HPP

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gwd
{
	using cplx = std::complex<double>;
	using Vec = Eigen::VectorXd;
	using Mat = Eigen::MatrixXd;
	using CVec = Eigen::VectorXcd;
	using CMat = Eigen::MatrixXcd;

	inline constexpr double pi = std::numbers::pi;

	// Error types. All are std::runtime_error / std::invalid_argument derivatives
	// so that callers can catch broadly.
	struct DegenerateStateError : std::runtime_error { using std::runtime_error::runtime_error; };
	struct InvalidWidthError : std::invalid_argument { using std::invalid_argument::invalid_argument; };
	struct DimensionMismatch : std::invalid_argument { using std::invalid_argument::invalid_argument; };
	struct BranchTrackingError : std::runtime_error { using std::runtime_error::runtime_error; };

	inline void require_same_dim(Eigen::Index a, Eigen::Index b, const char* what)
	{
		if (a != b)
			throw DimensionMismatch(std::string(what) + ": dimension mismatch ("
				+ std::to_string(a) + " vs " + std::to_string(b) + ")");
	}

	// log(1 + z) without cancellation for small |z|.
	inline cplx log1p(cplx z)
	{
		const double x = z.real(), y = z.imag();
		return {0.5 * std::log1p(x * (2.0 + x) + y * y), std::atan2(y, 1.0 + x)};
	}

	// Re(exp(z) - 1) without cancellation for small |z|.
	inline double real_expm1(cplx z)
	{
		const double s = std::sin(0.5 * z.imag());
		return std::expm1(z.real()) * std::cos(z.imag()) - 2.0 * s * s;
	}

	inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }
	inline CMat symmetrized(const CMat& m) { return 0.5 * (m + m.transpose()); }

	inline bool is_positive_definite(const Mat& m)
	{
		Eigen::LLT<Mat> llt(symmetrized(m));
		return llt.info() == Eigen::Success;
	}

	inline Mat spd_sqrt(const Mat& m)
	{
		Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m));
		return es.operatorSqrt();
	}

	inline Mat spd_inverse_sqrt(const Mat& m)
	{
		Eigen::SelfAdjointEigenSolver<Mat> es(symmetrized(m));
		return es.operatorInverseSqrt();
	}

	inline double spd_log_det(const Mat& m)
	{
		Eigen::LLT<Mat> llt(symmetrized(m));
		if (llt.info() != Eigen::Success)
			throw InvalidWidthError("matrix is not positive definite");
		return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
	}

	// log det(I + X), continuous in X along the segment s -> s X, s in [0, 1].
	// Small X: unpivoted elimination with the identity split off, so every pivot
	// stays near 1 and log1p keeps full relative precision. Otherwise fall back to
	// per-eigenvalue principal logs, which is exact whenever no eigenvalue of I + sX
	// crosses the negative real axis (true for X = t m^-1 A with Im A > 0).
	inline cplx log_det_identity_plus(const CMat& x)
	{
		const Eigen::Index n = x.rows();
		if (x.norm() < 0.5) {
			CMat w = x;
			cplx acc = 0.0;
			for (Eigen::Index k = 0; k < n; ++k) {
				const cplx pivot = 1.0 + w(k, k);
				acc += gwd::log1p(w(k, k));
				for (Eigen::Index i = k + 1; i < n; ++i) {
					const cplx l = w(i, k) / pivot;
					for (Eigen::Index j = k + 1; j < n; ++j)
						w(i, j) -= l * w(k, j);
				}
			}
			return acc;
		}
		Eigen::ComplexEigenSolver<CMat> es(x, false);
		if (es.info() != Eigen::Success)
			throw BranchTrackingError("eigenvalue decomposition failed in log det update");
		cplx acc = 0.0;
		for (Eigen::Index k = 0; k < n; ++k) {
			const cplx lam = es.eigenvalues()(k);
			if (lam.real() <= -1.0 && std::abs(lam.imag()) < 1e-14 * (1.0 + std::abs(lam)))
				throw BranchTrackingError("log det update crosses the branch cut");
			acc += gwd::log1p(lam);
		}
		return acc;
	}

	// log det m on the branch whose imaginary part lies closest to reference.
	// Recomputing from an LU factorization keeps a tracked log det free of
	// accumulated rounding; the reference only selects the sheet.
	inline cplx log_det_near(const CMat& m, cplx reference)
	{
		Eigen::PartialPivLU<CMat> lu(m);
		const CMat& u = lu.matrixLU();
		cplx acc = 0.0;
		for (Eigen::Index k = 0; k < m.rows(); ++k) {
			if (u(k, k) == cplx(0.0))
				throw DegenerateStateError("singular matrix in log det");
			acc += std::log(u(k, k));
		}
		if (lu.permutationP().determinant() < 0)
			acc += cplx(0.0, pi);
		const double turns = std::round((reference.imag() - acc.imag()) / (2.0 * pi));
		return {acc.real(), acc.imag() + 2.0 * pi * turns};
	}

	// Column-major position of element (row, col) of a D x D matrix in a flat vector.
	inline Eigen::Index flat_index(Eigen::Index row, Eigen::Index col, Eigen::Index dim)
	{
		return row + dim * col;
	}
}

#endif
