#ifndef GWD_INTEGRATORS_HPP
#define GWD_INTEGRATORS_HPP

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "composition.hpp"
#include "effective.hpp"
#include "potentials.hpp"
#include "state.hpp"

namespace gwd
{
	enum class Stepper { composition, rk4 };

	struct StepPlan
	{
		MethodKind method = MethodKind::lca;
		Splitting splitting = Splitting::tvt;
		CompositionScheme scheme;
		double dt = 0.0;
		Stepper stepper = Stepper::composition;
		std::vector<Flow> flows;

		static StepPlan geometric(MethodKind method, Splitting splitting, CompositionScheme scheme, double dt)
		{
			if (dt == 0.0)
				throw std::invalid_argument("time step must be nonzero");
			StepPlan p;
			p.method = method;
			p.splitting = splitting;
			p.scheme = std::move(scheme);
			p.dt = dt;
			p.stepper = Stepper::composition;
			p.flows = flow_sequence(p.scheme, splitting);
			return p;
		}

		static StepPlan runge_kutta(MethodKind method, double dt)
		{
			if (dt == 0.0)
				throw std::invalid_argument("time step must be nonzero");
			StepPlan p;
			p.method = method;
			p.dt = dt;
			p.stepper = Stepper::rk4;
			p.scheme.order = 4;
			return p;
		}

		StepPlan with_dt(double new_dt) const
		{
			if (new_dt == 0.0)
				throw std::invalid_argument("time step must be nonzero");
			StepPlan p = *this;
			p.dt = new_dt;
			return p;
		}

		int order() const { return stepper == Stepper::rk4 ? 4 : scheme.order; }
	};

	// Exact flow of H_eff = T(p):
	// q += t m^-1 p, Q += t m^-1 P, S += t T(p); p, P unchanged.
	inline GaussianState kinetic_flow(const GaussianState& s, double t)
	{
		if (t == 0.0)
			return s;
		GaussianState out = s;
		const Mat& minv = s.mass.inverse;
		const CMat minv_p = minv.cast<cplx>() * s.P;
		// det Q_new / det Q = det(I + t Q^-1 m^-1 P)
		const CMat x = t * s.Q.partialPivLu().solve(minv_p);
		out.q += t * (minv * s.p);
		out.Q += t * minv_p;
		out.log_det_Q = log_det_near(out.Q, s.log_det_Q + log_det_identity_plus(x));
		out.S += t * 0.5 * s.p.dot(minv * s.p);
		return out;
	}

	// Exact flow of H_eff = V_eff(q; psi): q and Q stay fixed, so the coefficients
	// evaluated at the start hold for the whole flow.
	template <PotentialModel Pot>
	GaussianState potential_flow(const GaussianState& s, double t, MethodKind method, const Pot& pot)
	{
		if (t == 0.0)
			return s;
		const EffectiveCoefficients c = effective_coefficients(method, pot, s);
		GaussianState out = s;
		out.p -= t * c.V1;
		out.P -= t * (c.V2.cast<cplx>() * s.Q);
		out.S -= t * c.V0;
		return out;
	}

	template <PotentialModel Pot>
	GaussianState apply_flow(const GaussianState& s, const Flow& f, double dt, MethodKind method, const Pot& pot)
	{
		return f.kind == FlowKind::kinetic ? kinetic_flow(s, f.fraction * dt)
		                                   : potential_flow(s, f.fraction * dt, method, pot);
	}

	// TVT: T(dt/2) V(dt) T(dt/2); VTV: V(dt/2) T(dt) V(dt/2).
	template <PotentialModel Pot>
	GaussianState second_order_step(const GaussianState& s, Splitting splitting, double dt, MethodKind method, const Pot& pot)
	{
		if (splitting == Splitting::tvt)
			return kinetic_flow(potential_flow(kinetic_flow(s, 0.5 * dt), dt, method, pot), 0.5 * dt);
		return potential_flow(kinetic_flow(potential_flow(s, 0.5 * dt, method, pot), dt), 0.5 * dt, method, pot);
	}

	template <PotentialModel Pot>
	GaussianState composed_step(const GaussianState& s, const StepPlan& plan, const Pot& pot)
	{
		GaussianState cur = s;
		for (const Flow& f : plan.flows)
			cur = apply_flow(cur, f, plan.dt, plan.method, pot);
		return cur;
	}

	namespace detail
	{
		struct Rate
		{
			Vec dq, dp;
			CMat dQ, dP;
			double dS;
			cplx dlog_det;
		};

		template <PotentialModel Pot>
		Rate rate(const GaussianState& s, MethodKind method, const Pot& pot)
		{
			const EffectiveCoefficients c = effective_coefficients(method, pot, s);
			const Mat& minv = s.mass.inverse;
			Rate r;
			r.dq = minv * s.p;
			r.dp = -c.V1;
			r.dQ = minv.cast<cplx>() * s.P;
			r.dP = -(c.V2.cast<cplx>() * s.Q);
			r.dS = 0.5 * s.p.dot(minv * s.p) - c.V0;
			// d log det Q / dt = Tr(Q^-1 dQ/dt)
			r.dlog_det = s.Q.partialPivLu().solve(r.dQ).trace();
			return r;
		}

		inline GaussianState advance(const GaussianState& s, const Rate& r, double h)
		{
			GaussianState out = s;
			out.q += h * r.dq;
			out.p += h * r.dp;
			out.Q += h * r.dQ;
			out.P += h * r.dP;
			out.S += h * r.dS;
			out.log_det_Q += h * r.dlog_det;
			return out;
		}
	}

	// Classical fourth-order Runge-Kutta on (q, p, Q, P, S, log det Q).
	template <PotentialModel Pot>
	GaussianState rk4_step(const GaussianState& s, double dt, MethodKind method, const Pot& pot)
	{
		using detail::advance;
		using detail::rate;
		const auto k1 = rate(s, method, pot);
		const auto k2 = rate(advance(s, k1, 0.5 * dt), method, pot);
		const auto k3 = rate(advance(s, k2, 0.5 * dt), method, pot);
		const auto k4 = rate(advance(s, k3, dt), method, pot);
		GaussianState out = s;
		const double w = dt / 6.0;
		out.q += w * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
		out.p += w * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
		out.Q += w * (k1.dQ + 2.0 * k2.dQ + 2.0 * k3.dQ + k4.dQ);
		out.P += w * (k1.dP + 2.0 * k2.dP + 2.0 * k3.dP + k4.dP);
		out.S += w * (k1.dS + 2.0 * k2.dS + 2.0 * k3.dS + k4.dS);
		// Integrated, not recomputed from Q: this is the RK4 image of the phase
		// equation, and its error shows up in the norm like an integrated gamma would.
		out.log_det_Q += w * (k1.dlog_det + 2.0 * k2.dlog_det + 2.0 * k3.dlog_det + k4.dlog_det);
		return out;
	}

	template <PotentialModel Pot>
	GaussianState step(const GaussianState& s, const StepPlan& plan, const Pot& pot)
	{
		return plan.stepper == Stepper::rk4 ? rk4_step(s, plan.dt, plan.method, pot) : composed_step(s, plan, pot);
	}

	using Observer = std::function<void(double t, const GaussianState&)>;

	struct TrajectoryRecord
	{
		std::vector<double> times;          // sample times, including 0 and the final time
		std::vector<GaussianState> samples;
		GaussianState final_state;
		std::size_t completed_steps = 0;
		std::size_t potential_evaluations = 0;
		bool failed = false;
		std::string failure;
	};

	// Runs n_steps steps. Samples (and observer calls) happen at t = 0, every
	// `stride` steps and at the last completed step. A range error from the
	// potential ends the run early with `failed` set.
	template <PotentialModel Pot>
	TrajectoryRecord propagate(const GaussianState& s0, const StepPlan& plan, const Pot& pot, std::size_t n_steps,
		std::size_t stride = 1, const std::vector<Observer>& observers = {})
	{
		if (stride == 0)
			throw std::invalid_argument("observer stride must be positive");
		CountingPotential<Pot> counted(pot);
		TrajectoryRecord rec;
		auto sample = [&](std::size_t n, const GaussianState& s) {
			const double t = static_cast<double>(n) * plan.dt;
			rec.times.push_back(t);
			rec.samples.push_back(s);
			for (const auto& obs : observers) obs(t, s);
		};
		GaussianState cur = s0;
		sample(0, cur);
		std::size_t last_sampled = 0;
		for (std::size_t n = 1; n <= n_steps; ++n) {
			try {
				cur = step(cur, plan, counted);
			} catch (const std::range_error& e) {
				rec.failed = true;
				rec.failure = e.what();
				break;
			}
			rec.completed_steps = n;
			if (n % stride == 0) {
				sample(n, cur);
				last_sampled = n;
			}
		}
		if (rec.completed_steps != last_sampled)
			sample(rec.completed_steps, cur);
		rec.final_state = cur;
		rec.potential_evaluations = counted.evaluations();
		return rec;
	}

	// Final state only; no sampling.
	template <PotentialModel Pot>
	GaussianState evolve(const GaussianState& s0, const StepPlan& plan, const Pot& pot, std::size_t n_steps)
	{
		GaussianState cur = s0;
		for (std::size_t n = 0; n < n_steps; ++n) cur = step(cur, plan, pot);
		return cur;
	}
}

#endif
