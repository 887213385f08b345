#include <gtest/gtest.h>

#include <gwd/effective.hpp>
#include <gwd/integrators.hpp>
#include <gwd/potentials.hpp>

#include <random>

#include "oracles.hpp"

using namespace gwd;

namespace
{
	CoupledMorse morse1d()
	{
		return CoupledMorse(Vec::Constant(1, 1.5), 10.0, 22.5, Vec::Constant(1, 0.01), 0.0, Vec::Zero(1));
	}

	CoupledMorse coupled(Eigen::Index d)
	{
		Vec chi_p(d), chi(d);
		for (Eigen::Index j = 0; j < d; ++j) {
			chi_p(j) = 0.15 + 0.05 * static_cast<double>(j);
			chi(j) = 0.1 - 0.03 * static_cast<double>(j);
		}
		return CoupledMorse(Vec::LinSpaced(d, 0.2, 0.6), 0.3, 1.2, chi_p, 0.8, chi);
	}

	Vec random_point(std::mt19937& rng, Eigen::Index d, double scale = 0.7)
	{
		std::normal_distribution<double> n(0.0, scale);
		Vec q(d);
		for (Eigen::Index j = 0; j < d; ++j) q(j) = n(rng);
		return q;
	}

	Mat random_covariance(std::mt19937& rng, Eigen::Index d, double scale = 0.05)
	{
		std::normal_distribution<double> n(0.0, 1.0);
		Mat b(d, d);
		for (Eigen::Index i = 0; i < d; ++i)
			for (Eigen::Index j = 0; j < d; ++j) b(i, j) = n(rng);
		return scale * (b * b.transpose() + Mat::Identity(d, d));
	}

	GaussianState state_at(const Vec& q, const HellerParams& like)
	{
		HellerParams h = like;
		h.q = q;
		return from_heller(h);
	}
}

TEST(Potentials, MorseReferenceValues)
{
	const auto pot = morse1d();
	EXPECT_DOUBLE_EQ(pot.value(Vec::Constant(1, 1.5)), 10.0);
	// a' = 0.01 sqrt(180); V(-0.5) = V_eq + d' (1 - exp(2 a'))^2
	const double a = 0.01 * std::sqrt(180.0);
	const double y = std::exp(2.0 * a);
	EXPECT_NEAR(pot.value(Vec::Constant(1, -0.5)), 10.0 + 22.5 * (1 - y) * (1 - y), 1e-12);
	// dissociation limit
	EXPECT_NEAR(pot.value(Vec::Constant(1, 1.5 + 5000.0)), 10.0 + 22.5, 1e-9);
	// a' = chi' sqrt(8 d')
	EXPECT_NEAR(pot.a_prime()(0), a, 1e-15);
}

TEST(Potentials, SecondDerivativeAtMinimum)
{
	const auto pot = coupled(3);
	const auto t = pot.derivatives(pot.q_eq(), 4);
	const Mat expect = (2.0 * pot.de_prime() * pot.a_prime().array().square()).matrix().asDiagonal().toDenseMatrix()
		+ 2.0 * pot.de_cpl() * pot.a_cpl() * pot.a_cpl().transpose();
	EXPECT_LT((t.hessian - expect).norm(), 1e-12);
	EXPECT_LT(t.gradient.norm(), 1e-14);
	// coupling contribution to the third derivative: -6 d a_i a_j a_k
	const CoupledMorse axes(pot.q_eq(), pot.v_eq(), pot.de_prime(), pot.chi_prime(), 0.0, pot.chi_cpl());
	const auto ta = axes.derivatives(pot.q_eq(), 3);
	const Vec& a = pot.a_cpl();
	for (Eigen::Index i = 0; i < 3; ++i)
		for (Eigen::Index j = 0; j < 3; ++j)
			for (Eigen::Index k = 0; k < 3; ++k)
				EXPECT_NEAR(t.third(i, j, k) - ta.third(i, j, k), -6.0 * pot.de_cpl() * a(i) * a(j) * a(k), 1e-12);
}

TEST(Potentials, DerivativesMatchFiniteDifferences)
{
	std::mt19937 rng(31);
	for (Eigen::Index d = 1; d <= 3; ++d) {
		const auto pot = coupled(d);
		for (int trial = 0; trial < 4; ++trial) {
			const Vec q = random_point(rng, d);
			const auto t = pot.derivatives(q, 4);
			const double h = 1e-4;
			for (Eigen::Index i = 0; i < d; ++i) {
				Vec qp = q, qm = q;
				qp(i) += h;
				qm(i) -= h;
				const double fd = (pot.value(qp) - pot.value(qm)) / (2 * h);
				EXPECT_NEAR(t.gradient(i), fd, 1e-7 * (1 + std::abs(fd)));
				const auto tp = pot.derivatives(qp, 3), tm = pot.derivatives(qm, 3);
				for (Eigen::Index j = 0; j < d; ++j) {
					const double fh = (tp.gradient(j) - tm.gradient(j)) / (2 * h);
					EXPECT_NEAR(t.hessian(i, j), fh, 1e-7 * (1 + std::abs(fh)));
					for (Eigen::Index k = 0; k < d; ++k) {
						const double f3 = (tp.hessian(j, k) - tm.hessian(j, k)) / (2 * h);
						EXPECT_NEAR(t.third(i, j, k), f3, 1e-7 * (1 + std::abs(f3)));
						for (Eigen::Index l = 0; l < d; ++l) {
							const double f4 = (tp.third(j, k, l) - tm.third(j, k, l)) / (2 * h);
							EXPECT_NEAR(t.fourth(i, j, k, l), f4, 1e-6 * (1 + std::abs(f4)));
						}
					}
				}
			}
			EXPECT_LT((t.hessian - t.hessian.transpose()).norm(), 1e-13);
			EXPECT_LT(t.third.asymmetry(), 1e-12);
		}
	}
}

TEST(Potentials, ExpectationsMatchGaussHermite)
{
	std::mt19937 rng(37);
	for (Eigen::Index d = 1; d <= 2; ++d) {
		const auto pot = coupled(d);
		for (int trial = 0; trial < 3; ++trial) {
			const Vec q = random_point(rng, d);
			const Mat sigma = random_covariance(rng, d);
			const auto e = pot.expectations(q, sigma, 4);
			const double v = oracle::gaussian_expectation([&](const Vec& x) { return pot.value(x); }, q, sigma);
			EXPECT_NEAR(e.value, v, 1e-10 * (1 + std::abs(v)));
			const Vec g = oracle::gaussian_expectation([&](const Vec& x) { return Vec(pot.derivatives(x, 1).gradient); }, q, sigma);
			EXPECT_LT((e.gradient - g).norm(), 1e-10 * (1 + g.norm()));
			const Mat hs = oracle::gaussian_expectation([&](const Vec& x) { return Mat(pot.derivatives(x, 2).hessian); }, q, sigma);
			EXPECT_LT((e.hessian - hs).norm(), 1e-10 * (1 + hs.norm()));
			for (Eigen::Index i = 0; i < d; ++i) {
				const Mat t3 = oracle::gaussian_expectation([&](const Vec& x) {
					const auto t = pot.derivatives(x, 3);
					Mat m(d, d);
					for (Eigen::Index j = 0; j < d; ++j)
						for (Eigen::Index k = 0; k < d; ++k) m(j, k) = t.third(i, j, k);
					return m;
				}, q, sigma);
				for (Eigen::Index j = 0; j < d; ++j)
					for (Eigen::Index k = 0; k < d; ++k)
						EXPECT_NEAR(e.third(i, j, k), t3(j, k), 1e-9 * (1 + std::abs(t3(j, k))));
			}
		}
	}
}

TEST(Potentials, NarrowGaussianLimit)
{
	const auto pot = coupled(2);
	const Vec q = Vec::LinSpaced(2, -0.3, 0.4);
	const auto point = pot.derivatives(q, 4);
	const auto narrow = pot.expectations(q, 1e-12 * Mat::Identity(2, 2), 4);
	EXPECT_NEAR(narrow.value, point.value, 1e-10);
	EXPECT_LT((narrow.gradient - point.gradient).norm(), 1e-10);
	EXPECT_LT((narrow.hessian - point.hessian).norm(), 1e-10);
}

TEST(Potentials, DecoupledIsSumOfOneDimensional)
{
	CoupledMorse pot(Vec::LinSpaced(3, 0.0, 1.0), 2.0, 0.9, Vec::Constant(3, 0.2), 0.0, Vec::Zero(3));
	std::mt19937 rng(41);
	const Vec q = random_point(rng, 3);
	double sum = 2.0;
	for (Eigen::Index j = 0; j < 3; ++j) {
		CoupledMorse one(Vec::Constant(1, pot.q_eq()(j)), 0.0, 0.9, Vec::Constant(1, 0.2), 0.0, Vec::Zero(1));
		sum += one.value(Vec::Constant(1, q(j)));
		EXPECT_NEAR(pot.derivatives(q, 1).gradient(j), one.derivatives(Vec::Constant(1, q(j)), 1).gradient(0), 1e-13);
	}
	EXPECT_NEAR(pot.value(q), sum, 1e-13);
}

TEST(Potentials, ExponentCapRaisesRangeError)
{
	const auto pot = morse1d();
	EXPECT_THROW(pot.value(Vec::Constant(1, -2000.0)), std::range_error);
	EXPECT_THROW(pot.expectations(Vec::Constant(1, 1.5), Mat::Constant(1, 1, 1e6), 2), std::range_error);
}

TEST(Potentials, InvalidParameters)
{
	EXPECT_THROW(CoupledMorse(Vec::Zero(1), 0.0, 0.0, Vec::Ones(1), 0.0, Vec::Zero(1)), std::invalid_argument);
	EXPECT_THROW(CoupledMorse(Vec::Zero(1), 0.0, 1.0, Vec::Zero(1), 0.0, Vec::Zero(1)), std::invalid_argument);
	EXPECT_THROW(CoupledMorse(Vec::Zero(2), 0.0, 1.0, Vec::Ones(1), 0.0, Vec::Zero(2)), DimensionMismatch);
	EXPECT_THROW(coupled(2).value(Vec::Zero(3)), DimensionMismatch);
	Mat k(2, 2);
	k << 1, 2, 0, 1;
	EXPECT_THROW(HarmonicPotential(Vec::Zero(2), k), std::invalid_argument);
}

TEST(Potentials, HarmonicGroundState)
{
	const auto mass = MassMatrix::identity(1);
	const auto g1 = harmonic_ground_state(HarmonicPotential(Vec::Zero(1), Mat::Identity(1, 1)), mass);
	EXPECT_NEAR(std::abs(width_matrix(g1.state)(0, 0) - cplx(0, 1)), 0.0, 1e-15);
	EXPECT_NEAR(g1.zero_point_energy, 0.5, 1e-15);
	Mat k = Mat::Zero(2, 2);
	k.diagonal() << 1.0, 4.0;
	const auto g2 = harmonic_ground_state(HarmonicPotential(Vec::Zero(2), k), MassMatrix::identity(2));
	EXPECT_NEAR(g2.zero_point_energy, 1.5, 1e-14);
	EXPECT_NEAR(g2.frequencies(1), 2.0, 1e-14);
}

TEST(Potentials, HarmonicGroundStateIsStationary)
{
	Mat k(2, 2);
	k << 1.3, 0.2, 0.2, 0.7;
	Mat m(2, 2);
	m << 1.0, 0.1, 0.1, 2.0;
	const HarmonicPotential pot(Vec::LinSpaced(2, 0.5, -0.5), k);
	const auto g = harmonic_ground_state(pot, MassMatrix(m));
	const CMat a0 = width_matrix(g.state);
	for (MethodKind method : {MethodKind::lha, MethodKind::lca, MethodKind::var}) {
		const auto plan = StepPlan::geometric(method, Splitting::tvt, optimal_scheme(2), 0.05);
		const auto s = evolve(g.state, plan, pot, 100);
		EXPECT_LT((s.q - g.state.q).norm(), 1e-12);
		EXPECT_LT(s.p.norm(), 1e-12);
		EXPECT_LT((width_matrix(s) - a0).norm(), 1e-3);  // splitting error in the width
		const auto exact = evolve(g.state, plan.with_dt(0.005), pot, 1000);
		EXPECT_LT((width_matrix(exact) - a0).norm(), 1e-5);
	}
}

TEST(EffectiveModels, HarmonicAllMethodsAgree)
{
	Mat k(2, 2);
	k << 2.0, 0.3, 0.3, 1.0;
	const HarmonicPotential pot(Vec::Zero(2), k, 0.4);
	std::mt19937 rng(43);
	const auto s = from_heller(oracle::random_heller(rng, 2));
	const auto lha = effective_coefficients(MethodKind::lha, pot, s);
	for (MethodKind m : {MethodKind::lca, MethodKind::var}) {
		const auto c = effective_coefficients(m, pot, s);
		EXPECT_NEAR(c.V0, lha.V0, 1e-13);
		EXPECT_LT((c.V1 - lha.V1).norm(), 1e-13);
		EXPECT_LT((c.V2 - lha.V2).norm(), 1e-13);
	}
}

TEST(EffectiveModels, CubicCorrectionAtMinimum)
{
	const auto pot = morse1d();
	HellerParams h;
	h.q = pot.q_eq();
	h.p = Vec::Zero(1);
	h.A = cplx(0, 1) * CMat::Identity(1, 1);
	h.mass = MassMatrix::identity(1);
	const auto s = from_heller(h);
	const auto lca = effective_coefficients(MethodKind::lca, pot, s);
	const auto lha = effective_coefficients(MethodKind::lha, pot, s);
	const double a = pot.a_prime()(0);
	const double third = -6.0 * pot.de_prime() * a * a * a;
	EXPECT_NEAR(lca.V1(0), 0.5 * third * 0.5, 1e-12);
	EXPECT_NEAR(lha.V1(0), 0.0, 1e-14);
}

TEST(EffectiveModels, LcaMinusLhaIsHalfContraction)
{
	std::mt19937 rng(47);
	const auto pot = coupled(3);
	const auto h = oracle::random_heller(rng, 3);
	const auto s = state_at(random_point(rng, 3, 0.3), h);
	const Mat sigma = position_covariance(s);
	const auto lca = effective_coefficients(MethodKind::lca, pot, s);
	const auto lha = effective_coefficients(MethodKind::lha, pot, s);
	const auto t = pot.derivatives(s.q, 3);
	Vec expect = Vec::Zero(3);
	for (Eigen::Index i = 0; i < 3; ++i)
		for (Eigen::Index j = 0; j < 3; ++j)
			for (Eigen::Index k = 0; k < 3; ++k) expect(i) += 0.5 * t.third(i, j, k) * sigma(j, k);
	EXPECT_LT((lca.V1 - lha.V1 - expect).norm(), 1e-12);
	EXPECT_LT((lca.V2 - lha.V2).norm(), 1e-15);
	EXPECT_EQ(lca.V0, lha.V0);
}

TEST(EffectiveModels, VariationalMeanMatchesQuadrature)
{
	std::mt19937 rng(53);
	for (Eigen::Index d = 1; d <= 2; ++d) {
		const auto pot = coupled(d);
		const auto s = state_at(random_point(rng, d, 0.3), oracle::random_heller(rng, d));
		const Mat sigma = position_covariance(s);
		const double quad = oracle::gaussian_expectation([&](const Vec& x) { return pot.value(x); }, s.q, sigma);
		EXPECT_NEAR(effective_potential_mean(MethodKind::var, pot, s), quad, 1e-10 * (1 + std::abs(quad)));
		// V1 and V2 are averaged gradient and Hessian
		const auto c = effective_coefficients(MethodKind::var, pot, s);
		const Vec g = oracle::gaussian_expectation([&](const Vec& x) { return Vec(pot.derivatives(x, 1).gradient); }, s.q, sigma);
		EXPECT_LT((c.V1 - g).norm(), 1e-10 * (1 + g.norm()));
	}
}

TEST(EffectiveModels, VariationalAndCubicAgreeToSecondOrderInWidth)
{
	const auto pot = coupled(2);
	const Vec q = Vec::LinSpaced(2, 0.1, -0.2);
	std::mt19937 rng(59);
	const Mat base = random_covariance(rng, 2, 1.0);
	double prev = 0.0;
	for (double eps : {1e-2, 5e-3}) {
		const Mat sigma = eps * base;
		const auto var = effective_coefficients(MethodKind::var, pot, q, sigma);
		const auto lca = effective_coefficients(MethodKind::lca, pot, q, sigma);
		const double diff = (var.V1 - lca.V1).norm();
		if (prev > 0.0) {
			EXPECT_NEAR(prev / diff, 4.0, 0.2);
		}
		prev = diff;
	}
}

TEST(EffectiveModels, CoefficientsDependOnlyOnCovariance)
{
	std::mt19937 rng(61);
	const auto pot = coupled(2);
	const auto s = state_at(Vec::LinSpaced(2, 0.1, 0.2), oracle::random_heller(rng, 2));
	GaussianState t = s;
	const double th = 0.7;
	CMat u(2, 2);
	u << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
	u *= std::polar(1.0, 0.3);
	t.Q = s.Q * u;
	t.P = s.P * u;
	for (MethodKind m : {MethodKind::lha, MethodKind::lca, MethodKind::var}) {
		const auto a = effective_coefficients(m, pot, s);
		const auto b = effective_coefficients(m, pot, t);
		EXPECT_NEAR(a.V0, b.V0, 1e-12);
		EXPECT_LT((a.V1 - b.V1).norm(), 1e-12);
		EXPECT_LT((a.V2 - b.V2).norm(), 1e-12);
	}
}

TEST(EffectiveModels, MethodNames)
{
	for (MethodKind m : {MethodKind::lha, MethodKind::lca, MethodKind::var}) EXPECT_EQ(parse_method(to_string(m)), m);
	EXPECT_THROW(parse_method("tga"), std::invalid_argument);
}

TEST(EffectiveModels, CountingPotentialCountsEvaluations)
{
	const auto pot = coupled(2);
	CountingPotential counted(pot);
	const auto g = harmonic_ground_state(HarmonicPotential(pot.q_eq(), Mat::Identity(2, 2)), MassMatrix::identity(2));
	const auto plan = StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(4), 0.01);
	evolve(g.state, plan, counted, 3);
	EXPECT_EQ(counted.evaluations(), 3 * optimal_scheme(4).stages());
	counted.reset();
	evolve(g.state, StepPlan::runge_kutta(MethodKind::var, 0.01), counted, 2);
	EXPECT_EQ(counted.evaluations(), 8u);
}
