#ifndef GWD_GRID_HPP
#define GWD_GRID_HPP

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "potentials.hpp"
#include "state.hpp"

namespace gwd
{
	struct GridSupportError : std::runtime_error { using std::runtime_error::runtime_error; };
	struct BoundaryLeakError : std::runtime_error { using std::runtime_error::runtime_error; };
	struct GridMismatchError : std::invalid_argument { using std::invalid_argument::invalid_argument; };

	// Uniform axis including both endpoints.
	struct Axis
	{
		double min = 0.0;
		double max = 1.0;
		std::size_t n = 8;

		double spacing() const { return (max - min) / static_cast<double>(n - 1); }
		double point(std::size_t i) const { return min + spacing() * static_cast<double>(i); }

		bool operator==(const Axis&) const = default;
	};

	inline void validate(const Axis& a)
	{
		if (a.n < 8)
			throw std::invalid_argument("grid axis needs at least 8 points");
		if (!(a.max > a.min))
			throw std::invalid_argument("grid axis needs max > min");
	}

	// Values on the tensor grid; the last axis runs fastest.
	struct GridWavefunction
	{
		std::vector<Axis> axes;
		std::vector<cplx> values;

		std::size_t dims() const { return axes.size(); }
		std::size_t size() const
		{
			std::size_t n = 1;
			for (const auto& a : axes) n *= a.n;
			return n;
		}
		double cell_volume() const
		{
			double v = 1.0;
			for (const auto& a : axes) v *= a.spacing();
			return v;
		}
		// Coordinates of flat point k.
		Vec point(std::size_t k) const
		{
			Vec q(static_cast<Eigen::Index>(dims()));
			for (std::size_t d = dims(); d-- > 0;) {
				q(static_cast<Eigen::Index>(d)) = axes[d].point(k % axes[d].n);
				k /= axes[d].n;
			}
			return q;
		}
	};

	namespace detail
	{
		inline void check_grid_dims(const std::vector<Axis>& axes)
		{
			if (axes.empty() || axes.size() > 2)
				throw std::invalid_argument("grid dynamics supports one or two dimensions");
			for (const auto& a : axes) validate(a);
		}

		inline bool on_boundary(const std::vector<Axis>& axes, std::size_t k)
		{
			for (std::size_t d = axes.size(); d-- > 0;) {
				const std::size_t i = k % axes[d].n;
				if (i == 0 || i + 1 == axes[d].n)
					return true;
				k /= axes[d].n;
			}
			return false;
		}

		inline double boundary_max(const GridWavefunction& psi)
		{
			double m = 0.0;
			for (std::size_t k = 0; k < psi.values.size(); ++k)
				if (on_boundary(psi.axes, k))
					m = std::max(m, std::abs(psi.values[k]));
			return m;
		}

		// FFTW's planner is not thread safe.
		inline std::mutex& fftw_planner_mutex()
		{
			static std::mutex m;
			return m;
		}
	}

	inline constexpr double grid_boundary_tolerance = 1e-8;

	inline double grid_norm(const GridWavefunction& psi)
	{
		double acc = 0.0;
		for (const auto& v : psi.values) acc += std::norm(v);
		return std::sqrt(acc * psi.cell_volume());
	}

	// Rescales to unit discrete norm.
	inline void grid_normalize(GridWavefunction& psi)
	{
		const double n = grid_norm(psi);
		if (!(n > 0.0))
			throw std::invalid_argument("cannot normalize a zero wavefunction");
		for (auto& v : psi.values) v /= n;
	}

	// <psi0|psi_t> by the rectangle rule (exact for band-limited periodic data).
	inline cplx grid_autocorrelation(const GridWavefunction& psi0, const GridWavefunction& psi_t)
	{
		if (psi0.axes != psi_t.axes || psi0.values.size() != psi_t.values.size())
			throw GridMismatchError("autocorrelation requires identical grids");
		cplx acc = 0.0;
		for (std::size_t k = 0; k < psi0.values.size(); ++k) acc += std::conj(psi0.values[k]) * psi_t.values[k];
		return acc * psi0.cell_volume();
	}

	inline Vec grid_position_mean(const GridWavefunction& psi)
	{
		Vec m = Vec::Zero(static_cast<Eigen::Index>(psi.dims()));
		double w = 0.0;
		for (std::size_t k = 0; k < psi.values.size(); ++k) {
			const double rho = std::norm(psi.values[k]);
			m += rho * psi.point(k);
			w += rho;
		}
		return m / w;
	}

	// Evaluates exp[(i/hbar)(x^T A x / 2 + p^T x + gamma)] at every grid point.
	inline GridWavefunction grid_sample_gaussian(const HellerParams& h, const std::vector<Axis>& axes,
		double boundary_tolerance = grid_boundary_tolerance)
	{
		validate(h);
		detail::check_grid_dims(axes);
		require_same_dim(static_cast<Eigen::Index>(axes.size()), h.dim(), "grid");
		GridWavefunction psi;
		psi.axes = axes;
		psi.values.resize(psi.size());
		const cplx i_over_hbar(0.0, 1.0 / h.hbar);
		for (std::size_t k = 0; k < psi.values.size(); ++k) {
			const CVec x = (psi.point(k) - h.q).cast<cplx>();
			const cplx phase = 0.5 * (x.transpose() * h.A * x)(0, 0) + h.p.cast<cplx>().dot(x) + h.gamma;
			psi.values[k] = std::exp(i_over_hbar * phase);
		}
		const double peak = std::exp(-h.gamma.imag() / h.hbar);
		const double edge = detail::boundary_max(psi);
		if (edge > boundary_tolerance * std::max(1.0, peak))
			throw GridSupportError("Gaussian is not supported inside the grid (boundary amplitude "
				+ std::to_string(edge) + ")");
		return psi;
	}

	// Second-order split operator exp(-iT dt/2h) exp(-iV dt/h) exp(-iT dt/2h)
	// with the kinetic factor applied in the discrete Fourier basis.
	class GridPropagator
	{
	public:
		template <PotentialModel Pot>
		GridPropagator(const GridWavefunction& psi0, const Pot& pot, const MassMatrix& mass, double hbar, double dt,
			std::size_t check_stride = 1, double boundary_tolerance = grid_boundary_tolerance)
			: axes_(psi0.axes), dt_(dt), check_stride_(check_stride == 0 ? 1 : check_stride),
			  tolerance_(boundary_tolerance)
		{
			detail::check_grid_dims(axes_);
			require_same_dim(static_cast<Eigen::Index>(axes_.size()), pot.dim(), "potential");
			require_same_dim(static_cast<Eigen::Index>(axes_.size()), mass.dim(), "mass");
			if (dt == 0.0)
				throw std::invalid_argument("time step must be nonzero");
			if (psi0.values.size() != psi0.size())
				throw GridMismatchError("wavefunction size does not match its axes");
			n_ = psi0.size();
			psi_ = psi0;
			potential_.resize(n_);
			kinetic_energy_.resize(n_);
			potential_phase_.resize(n_);
			kinetic_half_phase_.resize(n_);
			for (std::size_t k = 0; k < n_; ++k) {
				potential_[k] = pot.value(psi_.point(k));
				potential_phase_[k] = std::exp(cplx(0.0, -potential_[k] * dt / hbar));
			}
			// Wavenumbers in standard FFT ordering; T = (hbar k)^T m^-1 (hbar k) / 2.
			std::vector<std::vector<double>> kgrid(axes_.size());
			for (std::size_t d = 0; d < axes_.size(); ++d) {
				const std::size_t n = axes_[d].n;
				const double length = static_cast<double>(n) * axes_[d].spacing();
				kgrid[d].resize(n);
				for (std::size_t j = 0; j < n; ++j) {
					const double m = j <= n / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(n);
					kgrid[d][j] = 2.0 * pi * m / length;
				}
			}
			const auto dim = static_cast<Eigen::Index>(axes_.size());
			for (std::size_t k = 0; k < n_; ++k) {
				Vec kv(dim);
				std::size_t rem = k;
				for (std::size_t d = axes_.size(); d-- > 0;) {
					kv(static_cast<Eigen::Index>(d)) = kgrid[d][rem % axes_[d].n];
					rem /= axes_[d].n;
				}
				const Vec pv = hbar * kv;
				kinetic_energy_[k] = 0.5 * pv.dot(mass.inverse * pv);
				kinetic_half_phase_[k] = std::exp(cplx(0.0, -0.5 * kinetic_energy_[k] * dt / hbar));
			}

			buffer_.reset(static_cast<cplx*>(fftw_malloc(sizeof(cplx) * n_)));
			if (!buffer_)
				throw std::bad_alloc();
			std::vector<int> shape;
			for (const auto& a : axes_) shape.push_back(static_cast<int>(a.n));
			auto* raw = reinterpret_cast<fftw_complex*>(buffer_.get());
			std::lock_guard lock(detail::fftw_planner_mutex());
			forward_ = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), raw, raw, FFTW_FORWARD, FFTW_ESTIMATE);
			backward_ = fftw_plan_dft(static_cast<int>(shape.size()), shape.data(), raw, raw, FFTW_BACKWARD, FFTW_ESTIMATE);
			if (!forward_ || !backward_)
				throw std::runtime_error("FFTW planning failed");
		}

		GridPropagator(const GridPropagator&) = delete;
		GridPropagator& operator=(const GridPropagator&) = delete;

		~GridPropagator()
		{
			std::lock_guard lock(detail::fftw_planner_mutex());
			if (forward_) fftw_destroy_plan(forward_);
			if (backward_) fftw_destroy_plan(backward_);
		}

		const GridWavefunction& wavefunction() const { return psi_; }
		std::size_t steps_taken() const { return steps_; }
		double time() const { return static_cast<double>(steps_) * dt_; }
		// Largest boundary amplitude seen at the checked steps.
		double max_boundary_amplitude() const { return max_edge_; }

		void step(std::size_t n = 1)
		{
			cplx* b = buffer_.get();
			const double inv_n = 1.0 / static_cast<double>(n_);
			for (std::size_t s = 0; s < n; ++s) {
				std::memcpy(static_cast<void*>(b), psi_.values.data(), sizeof(cplx) * n_);
				kinetic_half(b, inv_n);
				for (std::size_t k = 0; k < n_; ++k) b[k] *= potential_phase_[k];
				kinetic_half(b, inv_n);
				std::memcpy(static_cast<void*>(psi_.values.data()), b, sizeof(cplx) * n_);
				++steps_;
				if (steps_ % check_stride_ == 0) {
					const double edge = detail::boundary_max(psi_);
					max_edge_ = std::max(max_edge_, edge);
					if (edge > tolerance_)
						throw BoundaryLeakError("wavefunction reached the grid boundary at step " + std::to_string(steps_)
							+ " (amplitude " + std::to_string(edge) + ")");
				}
			}
		}

		// <H> using the spectral kinetic operator.
		double energy() const
		{
			cplx* b = buffer_.get();
			std::memcpy(static_cast<void*>(b), psi_.values.data(), sizeof(cplx) * n_);
			double pot = 0.0, norm2 = 0.0;
			for (std::size_t k = 0; k < n_; ++k) {
				pot += std::norm(b[k]) * potential_[k];
				norm2 += std::norm(b[k]);
			}
			fftw_execute(forward_);
			double kin = 0.0, knorm = 0.0;
			for (std::size_t k = 0; k < n_; ++k) {
				kin += std::norm(b[k]) * kinetic_energy_[k];
				knorm += std::norm(b[k]);
			}
			return kin / knorm + pot / norm2;
		}

	private:
		void kinetic_half(cplx* b, double inv_n) const
		{
			fftw_execute(forward_);
			for (std::size_t k = 0; k < n_; ++k) b[k] *= kinetic_half_phase_[k] * inv_n;
			fftw_execute(backward_);
		}

		struct FftwFree
		{
			void operator()(cplx* p) const { fftw_free(p); }
		};

		std::vector<Axis> axes_;
		double dt_;
		std::size_t check_stride_;
		double tolerance_;
		double max_edge_ = 0.0;
		std::size_t n_ = 0;
		std::size_t steps_ = 0;
		GridWavefunction psi_;
		std::vector<double> potential_;
		std::vector<double> kinetic_energy_;
		std::vector<cplx> potential_phase_;
		std::vector<cplx> kinetic_half_phase_;
		std::unique_ptr<cplx, FftwFree> buffer_;
		fftw_plan forward_ = nullptr;
		fftw_plan backward_ = nullptr;
	};

	template <PotentialModel Pot>
	GridWavefunction grid_propagate(const GridWavefunction& psi, const Pot& pot, const MassMatrix& mass, double hbar,
		double dt, std::size_t n_steps, std::size_t check_stride = 1, double boundary_tolerance = grid_boundary_tolerance)
	{
		GridPropagator prop(psi, pot, mass, hbar, dt, check_stride, boundary_tolerance);
		prop.step(n_steps);
		return prop.wavefunction();
	}

	// Text header terminated by "end\n", then re/im doubles in native byte order.
	inline void write_grid_snapshot(std::ostream& os, const GridWavefunction& psi, std::size_t step)
	{
		os << "gwd-grid 1\n" << "dims " << psi.dims() << '\n';
		char buf[128];
		for (const auto& a : psi.axes) {
			std::snprintf(buf, sizeof buf, "axis %.17g %.17g %zu\n", a.min, a.max, a.n);
			os << buf;
		}
		os << "step " << step << '\n' << "end\n";
		os.write(reinterpret_cast<const char*>(psi.values.data()),
			static_cast<std::streamsize>(psi.values.size() * sizeof(cplx)));
	}

	inline std::pair<GridWavefunction, std::size_t> read_grid_snapshot(std::istream& is)
	{
		auto fail = [](const std::string& what) { return std::runtime_error("grid snapshot: " + what); };
		std::string line;
		if (!std::getline(is, line) || line != "gwd-grid 1")
			throw fail("bad magic");
		GridWavefunction psi;
		std::size_t dims = 0, step = 0;
		while (std::getline(is, line) && line != "end") {
			std::istringstream ls(line);
			std::string key;
			ls >> key;
			if (key == "dims") ls >> dims;
			else if (key == "axis") {
				Axis a;
				ls >> a.min >> a.max >> a.n;
				psi.axes.push_back(a);
			} else if (key == "step") ls >> step;
			else throw fail("unknown header key '" + key + "'");
			if (ls.fail())
				throw fail("malformed header line '" + line + "'");
		}
		if (line != "end" || dims != psi.axes.size())
			throw fail("incomplete header");
		psi.values.resize(psi.size());
		is.read(reinterpret_cast<char*>(psi.values.data()), static_cast<std::streamsize>(psi.values.size() * sizeof(cplx)));
		if (!is)
			throw fail("truncated data");
		return {std::move(psi), step};
	}
}

#endif
