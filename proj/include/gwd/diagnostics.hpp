#ifndef GWD_DIAGNOSTICS_HPP
#define GWD_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "effective.hpp"
#include "integrators.hpp"
#include "potentials.hpp"
#include "state.hpp"

namespace gwd
{
	struct EnergyReport
	{
		double kinetic = 0.0;
		double potential_exact = 0.0;
		double potential_effective = 0.0;
		double E = 0.0;
		double E_eff = 0.0;
	};

	// <T> = T(p) + Tr(m^-1 Cov(p))/2, <V> from the potential's Gaussian
	// expectation, <V_eff> = V0 + Tr(V2 Sigma)/2.
	template <PotentialModel Pot>
	EnergyReport energy_report(MethodKind method, const Pot& pot, const GaussianState& s)
	{
		const Mat& minv = s.mass.inverse;
		const Mat sigma = position_covariance(s);
		EnergyReport r;
		r.kinetic = 0.5 * s.p.dot(minv * s.p) + 0.5 * (minv * momentum_covariance(s)).trace();
		r.potential_exact = pot.expectations(s.q, sigma, 0).value;
		r.potential_effective = effective_potential_mean(effective_coefficients(method, pot, s.q, sigma), sigma);
		r.E = r.kinetic + r.potential_exact;
		r.E_eff = r.kinetic + r.potential_effective;
		return r;
	}

	template <PotentialModel Pot>
	Observer energy_observer(MethodKind method, const Pot& pot, std::vector<EnergyReport>& sink)
	{
		return [method, &pot, &sink](double, const GaussianState& s) { sink.push_back(energy_report(method, pot, s)); };
	}

	// max_t |E_eff(t) - E_eff(0)|
	inline double effective_energy_drift(std::span<const EnergyReport> reports)
	{
		if (reports.empty())
			throw std::invalid_argument("effective_energy_drift: empty trajectory");
		double worst = 0.0;
		for (const auto& r : reports) worst = std::max(worst, std::abs(r.E_eff - reports.front().E_eff));
		return worst;
	}

	inline double energy_drift(std::span<const EnergyReport> reports)
	{
		if (reports.empty())
			throw std::invalid_argument("energy_drift: empty trajectory");
		double worst = 0.0;
		for (const auto& r : reports) worst = std::max(worst, std::abs(r.E - reports.front().E));
		return worst;
	}

	// Distance between s0 and the state propagated n steps forward, then n steps
	// with -dt.
	template <PotentialModel Pot>
	double reversibility_defect(const GaussianState& s0, const StepPlan& plan, const Pot& pot, std::size_t n_steps)
	{
		const GaussianState fwd = evolve(s0, plan, pot, n_steps);
		const GaussianState back = evolve(fwd, plan.with_dt(-plan.dt), pot, n_steps);
		return state_distance(back, s0);
	}

	// d(psi^(dt), psi^(dt/2)) at t = n_steps * dt.
	template <PotentialModel Pot>
	double convergence_error(const GaussianState& s0, const StepPlan& plan, const Pot& pot, std::size_t n_steps)
	{
		const GaussianState coarse = evolve(s0, plan, pot, n_steps);
		const GaussianState fine = evolve(s0, plan.with_dt(0.5 * plan.dt), pot, 2 * n_steps);
		return state_distance(coarse, fine);
	}

	// ---------------------------------------------------------------------------
	// Symplectic structure in Hagedorn variables.
	//
	// z = (q, p, vec Q1, vec P1, vec Q2, vec P2) with Q = Q1 + i Q2, P = P1 + i P2
	// and vec stacking columns (element (j, k) at j + D k).

	struct ZLayout
	{
		Eigen::Index D;
		Eigen::Index size() const { return 2 * D + 4 * D * D; }
		Eigen::Index q() const { return 0; }
		Eigen::Index p() const { return D; }
		Eigen::Index Q(int r) const { return 2 * D + (r == 0 ? 0 : 2 * D * D); }
		Eigen::Index P(int r) const { return Q(r) + D * D; }
	};

	inline Vec flatten(const GaussianState& s)
	{
		const ZLayout z{s.dim()};
		const auto d = s.dim();
		Vec out(z.size());
		out.segment(z.q(), d) = s.q;
		out.segment(z.p(), d) = s.p;
		for (Eigen::Index k = 0; k < d * d; ++k) {
			out(z.Q(0) + k) = s.Q(k).real();
			out(z.P(0) + k) = s.P(k).real();
			out(z.Q(1) + k) = s.Q(k).imag();
			out(z.P(1) + k) = s.P(k).imag();
		}
		return out;
	}

	// Inverse of flatten; S and log det Q are taken from `like`.
	inline GaussianState unflatten(const Vec& v, const GaussianState& like)
	{
		const ZLayout z{like.dim()};
		const auto d = like.dim();
		GaussianState s = like;
		s.q = v.segment(z.q(), d);
		s.p = v.segment(z.p(), d);
		for (Eigen::Index k = 0; k < d * d; ++k) {
			s.Q(k) = cplx(v(z.Q(0) + k), v(z.Q(1) + k));
			s.P(k) = cplx(v(z.P(0) + k), v(z.P(1) + k));
		}
		return s;
	}

	// Block diagonal: J_2D, (hbar/2) J_2D^2, (hbar/2) J_2D^2.
	inline Mat symplectic_form(Eigen::Index dim, double hbar)
	{
		const ZLayout z{dim};
		Mat w = Mat::Zero(z.size(), z.size());
		for (Eigen::Index i = 0; i < dim; ++i) {
			w(z.q() + i, z.p() + i) = 1.0;
			w(z.p() + i, z.q() + i) = -1.0;
		}
		for (int r = 0; r < 2; ++r)
			for (Eigen::Index k = 0; k < dim * dim; ++k) {
				w(z.Q(r) + k, z.P(r) + k) = 0.5 * hbar;
				w(z.P(r) + k, z.Q(r) + k) = -0.5 * hbar;
			}
		return w;
	}

	inline Mat step_jacobian_kinetic(double t, const MassMatrix& mass)
	{
		const auto d = mass.dim();
		const ZLayout z{d};
		Mat j = Mat::Identity(z.size(), z.size());
		j.block(z.q(), z.p(), d, d) = t * mass.inverse;
		for (int r = 0; r < 2; ++r)
			for (Eigen::Index k = 0; k < d; ++k)
				for (Eigen::Index row = 0; row < d; ++row)
					for (Eigen::Index n = 0; n < d; ++n)
						j(z.Q(r) + flat_index(row, k, d), z.P(r) + flat_index(n, k, d)) = t * mass.inverse(row, n);
		return j;
	}

	// Derivative blocks of the potential flow p -= t V1(q, Q), P -= t V2(q, Q) Q:
	//   a_jk = dV1_j/dq_k,                  b^(r)_{j,(k,l)} = dV1_j/dQ^(r)_kl,
	//   c^(r)_{(j,k),l} = d(V2 Q^(r))_jk/dq_l, d^(rs)_{(j,k),(l,m)} = d(V2 Q^(r))_jk/dQ^(s)_lm.
	struct PotentialJacobianBlocks
	{
		Mat a;
		Mat b[2];
		Mat c[2];
		Mat d[2][2];
	};

	template <PotentialModel Pot>
	PotentialJacobianBlocks potential_jacobian_blocks(MethodKind method, const Pot& pot, const GaussianState& s)
	{
		const auto D = s.dim();
		const double hbar = s.hbar;
		const Mat sigma = position_covariance(s);
		const Mat qr[2] = {s.Q.real(), s.Q.imag()};

		Taylor t = method == MethodKind::var ? pot.expectations(s.q, sigma, 4) : pot.derivatives(s.q, 4);

		PotentialJacobianBlocks blk;
		blk.a = t.hessian;
		if (method == MethodKind::lca)
			blk.a += 0.5 * t.fourth.contract_last_two(sigma);

		for (int r = 0; r < 2; ++r) {
			blk.b[r] = Mat::Zero(D, D * D);
			if (method != MethodKind::lha)
				for (Eigen::Index j = 0; j < D; ++j)
					for (Eigen::Index k = 0; k < D; ++k)
						for (Eigen::Index l = 0; l < D; ++l) {
							double acc = 0.0;
							for (Eigen::Index m = 0; m < D; ++m) acc += t.third(j, k, m) * qr[r](m, l);
							blk.b[r](j, flat_index(k, l, D)) = 0.5 * hbar * acc;
						}

			blk.c[r] = Mat::Zero(D * D, D);
			for (Eigen::Index j = 0; j < D; ++j)
				for (Eigen::Index k = 0; k < D; ++k)
					for (Eigen::Index l = 0; l < D; ++l) {
						double acc = 0.0;
						for (Eigen::Index n = 0; n < D; ++n) acc += t.third(j, n, l) * qr[r](n, k);
						blk.c[r](flat_index(j, k, D), l) = acc;
					}
		}

		for (int r = 0; r < 2; ++r)
			for (int sidx = 0; sidx < 2; ++sidx) {
				Mat& dd = blk.d[r][sidx];
				dd = Mat::Zero(D * D, D * D);
				if (r == sidx)
					for (Eigen::Index j = 0; j < D; ++j)
						for (Eigen::Index k = 0; k < D; ++k)
							for (Eigen::Index l = 0; l < D; ++l)
								dd(flat_index(j, k, D), flat_index(l, k, D)) += t.hessian(j, l);
				if (method == MethodKind::var)
					for (Eigen::Index j = 0; j < D; ++j)
						for (Eigen::Index k = 0; k < D; ++k)
							for (Eigen::Index l = 0; l < D; ++l)
								for (Eigen::Index m = 0; m < D; ++m) {
									double acc = 0.0;
									for (Eigen::Index n = 0; n < D; ++n)
										for (Eigen::Index p = 0; p < D; ++p)
											acc += t.fourth(j, n, l, p) * qr[r](n, k) * qr[sidx](p, m);
									dd(flat_index(j, k, D), flat_index(l, m, D)) += 0.5 * hbar * acc;
								}
			}
		return blk;
	}

	// I - t B with B holding the blocks in the (p, P1, P2) rows.
	inline Mat assemble_potential_jacobian(double t, const PotentialJacobianBlocks& blk, Eigen::Index D)
	{
		const ZLayout z{D};
		Mat j = Mat::Identity(z.size(), z.size());
		j.block(z.p(), z.q(), D, D) -= t * blk.a;
		for (int r = 0; r < 2; ++r) {
			j.block(z.p(), z.Q(r), D, D * D) -= t * blk.b[r];
			j.block(z.P(r), z.q(), D * D, D) -= t * blk.c[r];
			for (int s = 0; s < 2; ++s)
				j.block(z.P(r), z.Q(s), D * D, D * D) -= t * blk.d[r][s];
		}
		return j;
	}

	template <PotentialModel Pot>
	Mat step_jacobian_potential(double t, MethodKind method, const Pot& pot, const GaussianState& s)
	{
		return assemble_potential_jacobian(t, potential_jacobian_blocks(method, pot, s), s.dim());
	}

	// Residuals of a = a^T, (b^(r))^T = (hbar/2) c^(r), (d^(rs))^T = d^(sr).
	struct BlockConditionResiduals
	{
		double a_symmetry = 0.0;
		double b_c = 0.0;
		double d_symmetry = 0.0;
	};

	inline BlockConditionResiduals block_conditions(const PotentialJacobianBlocks& blk, double hbar)
	{
		BlockConditionResiduals res;
		res.a_symmetry = (blk.a - blk.a.transpose()).norm();
		for (int r = 0; r < 2; ++r) {
			res.b_c = std::max(res.b_c, (blk.b[r].transpose() - 0.5 * hbar * blk.c[r]).norm());
			for (int s = 0; s < 2; ++s)
				res.d_symmetry = std::max(res.d_symmetry, (blk.d[r][s].transpose() - blk.d[s][r]).norm());
		}
		return res;
	}

	inline double symplectic_defect(const Mat& jac, const Mat& omega)
	{
		return (jac.transpose() * omega * jac - omega).norm();
	}

	// Central finite-difference Jacobian of one full step with respect to z.
	template <PotentialModel Pot>
	Mat finite_difference_step_jacobian(const GaussianState& s, const StepPlan& plan, const Pot& pot, double h = 1e-6)
	{
		const Vec z0 = flatten(s);
		const auto n = z0.size();
		Mat j(n, n);
		for (Eigen::Index i = 0; i < n; ++i) {
			Vec zp = z0, zm = z0;
			zp(i) += h;
			zm(i) -= h;
			const Vec fp = flatten(step(unflatten(zp, s), plan, pot));
			const Vec fm = flatten(step(unflatten(zm, s), plan, pot));
			j.col(i) = (fp - fm) / (2.0 * h);
		}
		return j;
	}

	inline constexpr Eigen::Index max_symplecticity_dim = 8;

	// Accumulates the flow Jacobian over n_steps and reports
	// |Phi'^T omega Phi' - omega|_F after every `stride` steps (t, residual).
	// Geometric plans use the analytic elementary-flow Jacobians in application
	// order; RK4 uses finite differences of each full step.
	template <PotentialModel Pot>
	std::vector<std::pair<double, double>> symplecticity_history(const GaussianState& s0, const StepPlan& plan,
		const Pot& pot, std::size_t n_steps, std::size_t stride = 1)
	{
		const auto D = s0.dim();
		if (D > max_symplecticity_dim)
			throw std::invalid_argument("symplecticity check limited to D <= 8");
		if (stride == 0)
			throw std::invalid_argument("stride must be positive");
		const Mat omega = symplectic_form(D, s0.hbar);
		Mat phi = Mat::Identity(omega.rows(), omega.cols());
		GaussianState cur = s0;
		std::vector<std::pair<double, double>> out;
		out.emplace_back(0.0, 0.0);
		for (std::size_t n = 1; n <= n_steps; ++n) {
			if (plan.stepper == Stepper::rk4) {
				phi = finite_difference_step_jacobian(cur, plan, pot) * phi;
				cur = step(cur, plan, pot);
			} else {
				for (const Flow& f : plan.flows) {
					const double t = f.fraction * plan.dt;
					if (f.kind == FlowKind::kinetic) {
						phi = step_jacobian_kinetic(t, cur.mass) * phi;
						cur = kinetic_flow(cur, t);
					} else {
						phi = step_jacobian_potential(t, plan.method, pot, cur) * phi;
						cur = potential_flow(cur, t, plan.method, pot);
					}
				}
			}
			if (n % stride == 0 || n == n_steps)
				out.emplace_back(static_cast<double>(n) * plan.dt, symplectic_defect(phi, omega));
		}
		return out;
	}

	template <PotentialModel Pot>
	double symplecticity_residual(const GaussianState& s0, const StepPlan& plan, const Pot& pot, std::size_t n_steps)
	{
		return symplecticity_history(s0, plan, pot, n_steps, n_steps == 0 ? 1 : n_steps).back().second;
	}
}

#endif
