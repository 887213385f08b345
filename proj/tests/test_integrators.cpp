#include <gtest/gtest.h>

#include <gwd/diagnostics.hpp>
#include <gwd/integrators.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"

using namespace gwd;

namespace
{
	const cplx I1(0.0, 1.0);

	CoupledMorse morse1d()
	{
		return CoupledMorse(Vec::Constant(1, 1.5), 10.0, 22.5, Vec::Constant(1, 0.01), 0.0, Vec::Zero(1));
	}

	CoupledMorse morse2d()
	{
		Vec chi_p(2), chi(2);
		chi_p << 0.02, 0.025;
		chi << 0.015, 0.01;
		return CoupledMorse(Vec::Constant(2, 1.0), 0.0, 5.0, chi_p, 3.0, chi);
	}

	GaussianState packet(const Vec& q, const Vec& p, double width = 1.0)
	{
		HellerParams h;
		h.q = q;
		h.p = p;
		h.A = I1 * width * CMat::Identity(q.size(), q.size());
		h.mass = MassMatrix::identity(q.size());
		return from_heller(h);
	}

	GaussianState morse1d_initial() { return packet(Vec::Constant(1, -0.5), Vec::Zero(1)); }

	GaussianState morse2d_initial()
	{
		Vec q(2), p(2);
		q << 0.3, -0.2;
		p << 0.4, 0.1;
		return packet(q, p);
	}

	std::vector<CompositionScheme> all_schemes()
	{
		std::vector<CompositionScheme> out;
		for (int order : {2, 4, 6, 8, 10}) out.push_back(optimal_scheme(order));
		for (int order : {4, 6, 8})
			for (SchemeName n : {SchemeName::triple_jump, SchemeName::suzuki}) out.push_back(make_scheme(order, n));
		return out;
	}

	double fit_slope(const std::vector<double>& dts, const std::vector<double>& errs)
	{
		const auto n = static_cast<double>(dts.size());
		double sx = 0, sy = 0, sxx = 0, sxy = 0;
		for (std::size_t i = 0; i < dts.size(); ++i) {
			const double x = std::log(dts[i]), y = std::log(errs[i]);
			sx += x;
			sy += y;
			sxx += x * x;
			sxy += x * y;
		}
		return (n * sxy - sx * sy) / (n * sxx - sx * sx);
	}

	double max_abs_diff(const GaussianState& a, const GaussianState& b)
	{
		return (flatten(a) - flatten(b)).lpNorm<Eigen::Infinity>();
	}
}

TEST(Composition, TripleJumpCoefficients)
{
	const auto s = make_scheme(4, SchemeName::triple_jump);
	ASSERT_EQ(s.gammas.size(), 3u);
	EXPECT_NEAR(s.gammas[0], 1.3512071919596578, 1e-15);
	EXPECT_NEAR(s.gammas[1], -1.7024143839193153, 1e-15);
}

TEST(Composition, SuzukiCoefficients)
{
	const auto s = make_scheme(4, SchemeName::suzuki);
	ASSERT_EQ(s.gammas.size(), 5u);
	EXPECT_NEAR(s.gammas[0], 0.4144907717943757, 1e-15);
	EXPECT_NEAR(s.gammas[2], 1.0 - 4.0 * s.gammas[0], 1e-15);
}

TEST(Composition, Invariants)
{
	for (const auto& s : all_schemes()) {
		SCOPED_TRACE(std::string(to_string(s.name)) + " " + std::to_string(s.order));
		double sum = 0.0;
		for (double g : s.gammas) sum += g;
		EXPECT_NEAR(sum, 1.0, 1e-14);
		EXPECT_NEAR(s.partial_sums().back(), 1.0, 1e-14);
		const auto m = s.gammas.size();
		for (std::size_t j = 0; j < m; ++j) EXPECT_EQ(s.gammas[j], s.gammas[m - 1 - j]);
		if (s.order > 2) {
			double lift = 0.0;
			for (double g : s.gammas) lift += std::pow(g, s.base_order + 1);
			if (s.base_order + 2 == s.order) {
				EXPECT_NEAR(lift, 0.0, 1e-12);
			}
			// Odd moments of the expanded second-order weights vanish up to order - 1.
			const auto w = second_order_weights(s);
			for (int k = 3; k < s.order; k += 2) {
				double acc = 0.0;
				for (double x : w) acc += std::pow(x, k);
				EXPECT_NEAR(acc, 0.0, 1e-12) << "k = " << k;
			}
		}
	}
}

TEST(Composition, StageCounts)
{
	EXPECT_EQ(optimal_scheme(2).stages(), 1u);
	EXPECT_EQ(optimal_scheme(4).stages(), 5u);
	EXPECT_EQ(optimal_scheme(6).stages(), 9u);
	EXPECT_EQ(optimal_scheme(8).stages(), 17u);
	EXPECT_EQ(optimal_scheme(10).stages(), 35u);
	EXPECT_EQ(make_scheme(6, SchemeName::triple_jump).stages(), 9u);
	EXPECT_EQ(make_scheme(6, SchemeName::suzuki).stages(), 25u);
	EXPECT_THROW(make_scheme(6, SchemeName::kahan_li8), std::invalid_argument);
	EXPECT_THROW(optimal_scheme(3), std::invalid_argument);
	EXPECT_THROW(parse_scheme_name("yoshida"), std::invalid_argument);
}

TEST(Composition, FlowSequenceMerging)
{
	for (const auto& s : all_schemes())
		for (Splitting sp : {Splitting::tvt, Splitting::vtv}) {
			const auto merged = flow_sequence(s, sp);
			const auto raw = flow_sequence(s, sp, false);
			EXPECT_EQ(merged.size(), 2 * s.stages() + 1);
			EXPECT_EQ(raw.size(), 3 * s.stages());
			double kin = 0.0, pot = 0.0;
			for (const auto& f : merged) (f.kind == FlowKind::kinetic ? kin : pot) += f.fraction;
			EXPECT_NEAR(kin, 1.0, 1e-14);
			EXPECT_NEAR(pot, 1.0, 1e-14);
			for (std::size_t i = 1; i < merged.size(); ++i) EXPECT_NE(merged[i].kind, merged[i - 1].kind);
		}
}

TEST(Composition, MergedFlowsMatchUnmerged)
{
	const auto pot = morse2d();
	const auto s0 = morse2d_initial();
	for (int order : {4, 8}) {
		auto plan = StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(order), 0.05);
		auto raw = plan;
		raw.flows = flow_sequence(plan.scheme, plan.splitting, false);
		const auto a = composed_step(s0, plan, pot);
		const auto b = composed_step(s0, raw, pot);
		EXPECT_LT(max_abs_diff(a, b), 1e-14);
	}
}

TEST(Flows, KineticExamples)
{
	const auto s = packet(Vec::Zero(1), Vec::Constant(1, 2.0));
	const auto same = kinetic_flow(s, 0.0);
	EXPECT_EQ(max_abs_diff(same, s), 0.0);
	const auto moved = kinetic_flow(s, 0.5);
	EXPECT_NEAR(moved.q(0), 1.0, 1e-15);
	EXPECT_NEAR(moved.S - s.S, 1.0, 1e-15);
	EXPECT_EQ(moved.p(0), 2.0);

	const auto u = packet(Vec::Zero(2), Vec::Zero(2));
	const auto k = kinetic_flow(u, 1.0);
	EXPECT_LT((k.Q - (1.0 + I1) * CMat::Identity(2, 2)).norm(), 1e-15);
	EXPECT_LT(hagedorn_residuals(k).symplectic, 1e-14);
}

TEST(Flows, PotentialFlowHarmonicKick)
{
	Mat k(2, 2);
	k << 1.5, 0.4, 0.4, 0.8;
	const HarmonicPotential pot(Vec::Zero(2), k);
	std::mt19937 rng(67);
	const auto s = from_heller(oracle::random_heller(rng, 2));
	for (MethodKind m : {MethodKind::lha, MethodKind::lca, MethodKind::var}) {
		const auto out = potential_flow(s, 0.3, m, pot);
		EXPECT_LT((out.P - (s.P - 0.3 * k.cast<cplx>() * s.Q)).norm(), 1e-14);
		EXPECT_LT((out.p - (s.p - 0.3 * k * s.q)).norm(), 1e-14);
		EXPECT_EQ(out.q, s.q);
		EXPECT_EQ(out.Q, s.Q);
		EXPECT_EQ(max_abs_diff(potential_flow(s, 0.0, m, pot), s), 0.0);
	}
}

TEST(Flows, CubicMomentumKickMatchesEquationsOfMotion)
{
	const auto pot = morse1d();
	const auto s = packet(Vec::Constant(1, 0.7), Vec::Zero(1), 0.6);
	const double sigma = position_covariance(s)(0, 0);
	// dp/dt = -V'(q) - V'''(q) Sigma / 2, derivatives from finite differences of V
	const double h = 1e-3, q = s.q(0);
	auto v = [&](double x) { return pot.value(Vec::Constant(1, x)); };
	const double d1 = (v(q + h) - v(q - h)) / (2 * h);
	const double d3 = (v(q + 2 * h) - 2 * v(q + h) + 2 * v(q - h) - v(q - 2 * h)) / (2 * h * h * h);
	const double rate = -d1 - 0.5 * d3 * sigma;
	for (double t : {1e-3, 1e-4}) {
		const auto out = potential_flow(s, t, MethodKind::lca, pot);
		EXPECT_NEAR((out.p(0) - s.p(0)) / t, rate, 1e-4 * std::abs(rate));
	}
}

TEST(SecondOrder, ReversibleToRoundoff)
{
	const auto pot = morse2d();
	const auto s0 = morse2d_initial();
	for (Splitting sp : {Splitting::tvt, Splitting::vtv})
		for (MethodKind m : {MethodKind::lha, MethodKind::lca, MethodKind::var}) {
			const auto fwd = second_order_step(s0, sp, 0.1, m, pot);
			const auto back = second_order_step(fwd, sp, -0.1, m, pot);
			EXPECT_LE(state_distance(back, s0), 1e-13);
		}
}

TEST(SecondOrder, HarmonicRotation)
{
	// Coherent state in V = q^2 / 2: the center rotates, the width is stationary.
	const HarmonicPotential pot(Vec::Zero(1), Mat::Identity(1, 1));
	const auto s0 = packet(Vec::Constant(1, 1.0), Vec::Zero(1));
	std::vector<double> dts, errs;
	for (double dt : {0.02, 0.01, 0.005}) {
		const auto n = static_cast<std::size_t>(std::lround(2 * pi / dt));
		const auto plan = StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(2), 2 * pi / static_cast<double>(n));
		const auto s = evolve(s0, plan, pot, n);
		dts.push_back(plan.dt);
		errs.push_back(std::hypot(s.q(0) - 1.0, s.p(0)));
	}
	EXPECT_LT(errs[1], 1e-4);
	EXPECT_NEAR(fit_slope(dts, errs), 2.0, 0.3);
}

TEST(SecondOrder, FreeParticleIsExactKineticFlow)
{
	const HarmonicPotential free(Vec::Zero(2), Mat::Zero(2, 2));
	const auto s0 = morse2d_initial();
	for (const auto& sc : all_schemes())
		for (Splitting sp : {Splitting::tvt, Splitting::vtv}) {
			const auto plan = StepPlan::geometric(MethodKind::lca, sp, sc, 0.37);
			const auto s = evolve(s0, plan, free, 3);
			const auto exact = kinetic_flow(s0, 3 * 0.37);
			EXPECT_LT(max_abs_diff(s, exact), 1e-12);
		}
}

TEST(Composed, SuzukiHarmonicOrderFour)
{
	Mat k(2, 2);
	k << 1.0, 0.3, 0.3, 2.0;
	const HarmonicPotential pot(Vec::Zero(2), k);
	const auto s0 = morse2d_initial();
	const double t_f = 8.0;
	const auto exact = evolve(s0, StepPlan::geometric(MethodKind::lha, Splitting::tvt, optimal_scheme(10), t_f / 4096), pot, 4096);
	std::vector<double> dts, errs;
	for (int n : {16, 32, 64, 128}) {
		const auto plan = StepPlan::geometric(MethodKind::lha, Splitting::tvt, optimal_scheme(4), t_f / n);
		dts.push_back(plan.dt);
		errs.push_back(state_distance(evolve(s0, plan, pot, static_cast<std::size_t>(n)), exact));
	}
	EXPECT_NEAR(fit_slope(dts, errs), 4.0, 0.3);
}

TEST(Composed, SelfConvergenceSlopes)
{
	// Slope of d(psi^dt, psi^dt/2) against dt on a sqrt(2) ladder, from the
	// points between the asymptotic threshold and the roundoff floor. Order 10
	// is still pre-asymptotic on this well when it meets the floor; the 20D
	// acceptance run covers it.
	const auto pot = morse1d();
	const auto s0 = morse1d_initial();
	const double t_f = 16.0;
	for (const auto& sc : all_schemes()) {
		if (sc.order > 8)
			continue;
		SCOPED_TRACE(std::string(to_string(sc.name)) + " " + std::to_string(sc.order));
		std::vector<double> dts, errs;
		for (int k = 4; k >= -20 && dts.size() < 6; --k) {
			const auto n = static_cast<std::size_t>(std::lround(t_f / std::exp2(0.5 * k)));
			const auto plan = StepPlan::geometric(MethodKind::lca, Splitting::tvt, sc, t_f / static_cast<double>(n));
			double e = 0.0;
			try {
				e = convergence_error(s0, plan, pot, n);
			} catch (const std::runtime_error&) {
				continue;  // unstable step size
			}
			if (e < 1e-11)
				break;
			if (e < 1e-5) {
				dts.push_back(plan.dt);
				errs.push_back(e);
			}
		}
		ASSERT_GE(dts.size(), 3u);
		EXPECT_NEAR(fit_slope(dts, errs), sc.order, 0.3);
	}
}

TEST(Composed, TvtAndVtvAgreeToTheirOrder)
{
	const auto pot = morse2d();
	const auto s0 = morse2d_initial();
	for (int order : {2, 4}) {
		std::vector<double> dts, errs;
		for (double dt : {0.2, 0.1, 0.05}) {
			const auto n = static_cast<std::size_t>(std::lround(4.0 / dt));
			const auto a = evolve(s0, StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(order), dt), pot, n);
			const auto b = evolve(s0, StepPlan::geometric(MethodKind::lca, Splitting::vtv, optimal_scheme(order), dt), pot, n);
			dts.push_back(dt);
			errs.push_back(state_distance(a, b));
		}
		EXPECT_NEAR(fit_slope(dts, errs), order, 0.5);
	}
}

TEST(Geometric, NormAndReversibility)
{
	const auto pot = morse2d();
	const auto s0 = morse2d_initial();
	for (const auto& sc : all_schemes())
		for (MethodKind m : {MethodKind::lha, MethodKind::lca, MethodKind::var})
			for (double dt : {0.01, 0.5}) {
				const auto plan = StepPlan::geometric(m, Splitting::tvt, sc, dt);
				const auto s = evolve(s0, plan, pot, 20);
				EXPECT_LE(norm_deviation(s), 1e-12);
				EXPECT_LE(reversibility_defect(s0, plan, pot, 20), 1e-10);
			}
}

TEST(Geometric, HagedornRelationsPreservedOverLongRun)
{
	const auto pot = morse1d();
	const auto plan = StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(2), 0.01);
	const auto s = evolve(morse1d_initial(), plan, pot, 10000);
	const auto r = hagedorn_residuals(s);
	EXPECT_LT(r.symmetric, 1e-10);
	EXPECT_LT(r.symplectic, 1e-10);
}

TEST(RungeKutta, AgreesWithEighthOrderAtSmallStep)
{
	const auto pot = morse1d();
	const auto s0 = morse1d_initial();
	const std::size_t n = 10000;
	for (MethodKind m : {MethodKind::lha, MethodKind::lca, MethodKind::var}) {
		const auto rk = evolve(s0, StepPlan::runge_kutta(m, 1e-4), pot, n);
		const auto g8 = evolve(s0, StepPlan::geometric(m, Splitting::tvt, optimal_scheme(8), 1e-4), pot, n);
		EXPECT_LE(state_distance(rk, g8), 1e-10);
	}
}

TEST(RungeKutta, HarmonicEnergyErrorPerPeriod)
{
	const HarmonicPotential pot(Vec::Zero(1), Mat::Identity(1, 1));
	const auto s0 = packet(Vec::Constant(1, 1.0), Vec::Constant(1, 0.5), 1.7);
	const double e0 = energy_report(MethodKind::lha, pot, s0).E;
	std::vector<double> dts, errs;
	for (int n : {32, 64, 128}) {
		const double dt = 2 * pi / n;
		const auto s = evolve(s0, StepPlan::runge_kutta(MethodKind::lha, dt), pot, static_cast<std::size_t>(n));
		dts.push_back(dt);
		errs.push_back(std::abs(energy_report(MethodKind::lha, pot, s).E - e0));
	}
	// Bounded by O(dt^4); the measured slope is closer to 5.
	EXPECT_GE(fit_slope(dts, errs), 3.7);
	EXPECT_LT(errs.back(), 1e-7);
}

TEST(RungeKutta, NotGeometricAtLargeStep)
{
	const auto pot = morse2d();
	const auto s0 = morse2d_initial();
	const auto plan = StepPlan::runge_kutta(MethodKind::lca, 0.5);
	const auto s = evolve(s0, plan, pot, 200);
	EXPECT_GT(norm_deviation(s), 1e-10);
	EXPECT_GT(reversibility_defect(s0, plan, pot, 50), 1e-10);
	EXPECT_GT(hagedorn_residuals(s).symplectic, 1e-12);
}

TEST(Propagate, ZeroStepsReturnsInitialState)
{
	const auto pot = morse1d();
	const auto s0 = morse1d_initial();
	const auto rec = propagate(s0, StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(2), 0.01), pot, 0);
	ASSERT_EQ(rec.samples.size(), 1u);
	EXPECT_EQ(rec.times[0], 0.0);
	EXPECT_EQ(max_abs_diff(rec.final_state, s0), 0.0);
	EXPECT_FALSE(rec.failed);
}

TEST(Propagate, StrideAndObservers)
{
	const auto pot = morse1d();
	const auto s0 = morse1d_initial();
	const auto plan = StepPlan::geometric(MethodKind::lca, Splitting::tvt, optimal_scheme(4), 0.01);
	std::vector<double> seen;
	const auto rec = propagate(s0, plan, pot, 25, 10, {[&](double t, const GaussianState&) { seen.push_back(t); }});
	EXPECT_EQ(rec.times, (std::vector<double>{0.0, 0.1, 0.2, 0.25}));
	EXPECT_EQ(seen, rec.times);
	EXPECT_EQ(rec.completed_steps, 25u);
	EXPECT_EQ(rec.potential_evaluations, 25u * 5u);
	EXPECT_THROW(propagate(s0, plan, pot, 3, 0), std::invalid_argument);
}

TEST(Propagate, BitwiseDeterministic)
{
	const auto pot = morse2d();
	const auto s0 = morse2d_initial();
	const auto plan = StepPlan::geometric(MethodKind::var, Splitting::vtv, optimal_scheme(6), 0.05);
	const auto a = propagate(s0, plan, pot, 100, 7);
	const auto b = propagate(s0, plan, pot, 100, 7);
	ASSERT_EQ(a.samples.size(), b.samples.size());
	for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(flatten(a.samples[i]), flatten(b.samples[i]));
}

TEST(Propagate, RangeErrorEndsRunWithPartialTrajectory)
{
	// A packet fired at the repulsive wall with a tight exponent cap.
	const CoupledMorse pot(Vec::Constant(1, 0.0), 0.0, 1.0, Vec::Constant(1, 0.5), 0.0, Vec::Zero(1), 0.5);
	const auto s0 = packet(Vec::Constant(1, 0.0), Vec::Constant(1, -6.0));
	const auto plan = StepPlan::geometric(MethodKind::lha, Splitting::tvt, optimal_scheme(2), 0.05);
	const auto rec = propagate(s0, plan, pot, 1000, 5);
	EXPECT_TRUE(rec.failed);
	EXPECT_FALSE(rec.failure.empty());
	EXPECT_LT(rec.completed_steps, 1000u);
	EXPECT_GT(rec.completed_steps, 0u);
	EXPECT_EQ(rec.times.back(), static_cast<double>(rec.completed_steps) * 0.05);
	EXPECT_THROW(StepPlan::runge_kutta(MethodKind::lca, 0.0), std::invalid_argument);
}
