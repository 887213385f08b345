#ifndef GWD_EXPERIMENT_HPP
#define GWD_EXPERIMENT_HPP

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "diagnostics.hpp"
#include "grid.hpp"
#include "integrators.hpp"
#include "spectra.hpp"

namespace gwd
{
	inline constexpr const char* version = "1.0.0";

	struct ConfigError : std::runtime_error { using std::runtime_error::runtime_error; };

	using json = nlohmann::json;

	struct PotentialSpec
	{
		std::string type = "coupled_morse";  // or "harmonic"
		Vec q_eq;
		double v_eq = 0.0;
		double de_prime = 0.0;
		Vec chi_prime;
		double de = 0.0;
		Vec chi;
		double exponent_cap = 200.0;
		Mat k;  // harmonic force constants
	};

	struct InitialSpec
	{
		Vec q0;
		Vec p0;
		Vec a_real;               // diagonal of Re A0
		Vec a_imag;               // diagonal of Im A0
		Vec ground_frequencies;   // alternative: ground state of a harmonic surface centered at q0
		std::optional<double> e1g;
	};

	struct RunSpec
	{
		MethodKind method = MethodKind::lca;
		Splitting splitting = Splitting::tvt;
		std::string integrator = "geometric";  // or "rk4"
		std::string scheme = "optimal";
		int order = 2;
		double dt = 0.01;
		std::size_t n_steps = 1;
		std::size_t stride = 1;
	};

	struct QuantumSpec
	{
		std::vector<Axis> axes;
		double boundary_tolerance = grid_boundary_tolerance;
		std::size_t check_stride = 1;
	};

	struct SpectrumSpec
	{
		std::vector<MethodKind> methods{MethodKind::lha, MethodKind::lca, MethodKind::var};
		double time_factor = 10.0;
		double hwhm = 10.0;
		double omega_min = 0.0;
		double omega_max = 1.0;
		std::optional<QuantumSpec> quantum;
	};

	struct SchemeSpec
	{
		int order = 2;
		std::string name = "optimal";
	};

	struct SweepSpec
	{
		std::vector<double> dt;
		double t_final = 1.0;
		std::vector<SchemeSpec> schemes;
		bool rk4 = false;
	};

	struct ExperimentConfig
	{
		PotentialSpec potential;
		Mat mass;
		double hbar = 1.0;
		InitialSpec initial;
		RunSpec run;
		std::string task = "propagate";
		std::string output = "out";
		std::optional<SpectrumSpec> spectrum;
		std::optional<SweepSpec> sweep;
	};

	// ---------------------------------------------------------------------------
	// Parsing

	namespace detail
	{
		inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where)
		{
			if (!j.is_object())
				throw ConfigError(where + ": expected an object");
			for (const auto& [key, _] : j.items()) {
				bool ok = false;
				for (const char* a : allowed) ok = ok || key == a;
				if (!ok)
					throw ConfigError(where + ": unknown key '" + key + "'");
			}
		}

		inline const json& need(const json& j, const char* key, const std::string& where)
		{
			if (!j.contains(key))
				throw ConfigError(where + ": missing key '" + key + "'");
			return j.at(key);
		}

		inline double number(const json& j, const std::string& where)
		{
			if (!j.is_number())
				throw ConfigError(where + ": expected a number");
			const double v = j.get<double>();
			if (!std::isfinite(v))
				throw ConfigError(where + ": must be finite");
			return v;
		}

		inline std::size_t count(const json& j, const std::string& where)
		{
			if (!j.is_number_integer() || j.get<long long>() < 0)
				throw ConfigError(where + ": expected a nonnegative integer");
			return j.get<std::size_t>();
		}

		inline std::string text(const json& j, const std::string& where)
		{
			if (!j.is_string())
				throw ConfigError(where + ": expected a string");
			return j.get<std::string>();
		}

		inline Vec vector(const json& j, const std::string& where)
		{
			if (!j.is_array() || j.empty())
				throw ConfigError(where + ": expected a nonempty array of numbers");
			Vec v(static_cast<Eigen::Index>(j.size()));
			for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], where);
			return v;
		}

		inline Mat matrix(const json& j, const std::string& where)
		{
			if (!j.is_array() || j.empty())
				throw ConfigError(where + ": expected a nonempty array of rows");
			const auto rows = static_cast<Eigen::Index>(j.size());
			Mat m(rows, rows);
			for (Eigen::Index r = 0; r < rows; ++r) {
				const Vec row = vector(j[static_cast<std::size_t>(r)], where);
				if (row.size() != rows)
					throw ConfigError(where + ": matrix must be square");
				m.row(r) = row.transpose();
			}
			return m;
		}

		inline json to_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

		inline json to_json(const Mat& m)
		{
			json rows = json::array();
			for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vec(m.row(r).transpose())));
			return rows;
		}

		template <typename F>
		auto guarded(const std::string& where, F&& f)
		{
			try {
				return f();
			} catch (const ConfigError&) {
				throw;
			} catch (const std::exception& e) {
				throw ConfigError(where + ": " + e.what());
			}
		}
	}

	inline PotentialSpec parse_potential(const json& j)
	{
		using namespace detail;
		const std::string w = "potential";
		PotentialSpec p;
		p.type = text(need(j, "type", w), w + ".type");
		if (p.type == "coupled_morse") {
			only_keys(j, {"type", "q_eq", "v_eq", "de_prime", "chi_prime", "de", "chi", "exponent_cap"}, w);
			p.q_eq = vector(need(j, "q_eq", w), w + ".q_eq");
			p.v_eq = j.contains("v_eq") ? number(j["v_eq"], w + ".v_eq") : 0.0;
			p.de_prime = number(need(j, "de_prime", w), w + ".de_prime");
			p.chi_prime = vector(need(j, "chi_prime", w), w + ".chi_prime");
			p.de = j.contains("de") ? number(j["de"], w + ".de") : 0.0;
			p.chi = j.contains("chi") ? vector(j["chi"], w + ".chi") : Vec::Zero(p.q_eq.size());
			p.exponent_cap = j.contains("exponent_cap") ? number(j["exponent_cap"], w + ".exponent_cap") : 200.0;
		} else if (p.type == "harmonic") {
			only_keys(j, {"type", "q_eq", "v_eq", "k"}, w);
			p.q_eq = vector(need(j, "q_eq", w), w + ".q_eq");
			p.v_eq = j.contains("v_eq") ? number(j["v_eq"], w + ".v_eq") : 0.0;
			p.k = matrix(need(j, "k", w), w + ".k");
		} else {
			throw ConfigError(w + ".type: expected coupled_morse or harmonic");
		}
		return p;
	}

	inline json to_json(const PotentialSpec& p)
	{
		using detail::to_json;
		json j{{"type", p.type}, {"q_eq", to_json(p.q_eq)}, {"v_eq", p.v_eq}};
		if (p.type == "coupled_morse") {
			j["de_prime"] = p.de_prime;
			j["chi_prime"] = to_json(p.chi_prime);
			j["de"] = p.de;
			j["chi"] = to_json(p.chi);
			j["exponent_cap"] = p.exponent_cap;
		} else {
			j["k"] = to_json(p.k);
		}
		return j;
	}

	inline std::vector<Axis> parse_axes(const json& j, const std::string& w)
	{
		if (!j.is_array() || j.empty())
			throw ConfigError(w + ": expected a nonempty array of axes");
		std::vector<Axis> axes;
		for (const auto& a : j) {
			detail::only_keys(a, {"min", "max", "n"}, w);
			Axis ax{detail::number(detail::need(a, "min", w), w + ".min"), detail::number(detail::need(a, "max", w), w + ".max"),
				detail::count(detail::need(a, "n", w), w + ".n")};
			detail::guarded(w, [&] { validate(ax); return 0; });
			axes.push_back(ax);
		}
		return axes;
	}

	inline ExperimentConfig parse_config(const json& root)
	{
		using namespace detail;
		// A manifest carries the normalized config it was produced from.
		if (root.is_object() && root.contains("config") && root.contains("config_hash"))
			return parse_config(root.at("config"));

		only_keys(root, {"potential", "mass", "hbar", "initial_state", "run", "task", "output", "spectrum", "sweep"}, "config");
		ExperimentConfig c;
		c.potential = parse_potential(need(root, "potential", "config"));
		const auto dim = c.potential.q_eq.size();
		auto same = [&](Eigen::Index n, const std::string& what) {
			if (n != dim)
				throw ConfigError(what + ": expected " + std::to_string(dim) + " entries, got " + std::to_string(n));
		};
		if (c.potential.type == "coupled_morse") {
			same(c.potential.chi_prime.size(), "potential.chi_prime");
			same(c.potential.chi.size(), "potential.chi");
		} else {
			same(c.potential.k.rows(), "potential.k");
		}
		c.mass = root.contains("mass") ? matrix(root["mass"], "mass") : Mat::Identity(dim, dim);
		same(c.mass.rows(), "mass");
		c.hbar = root.contains("hbar") ? number(root["hbar"], "hbar") : 1.0;
		if (!(c.hbar > 0.0))
			throw ConfigError("hbar: must be positive");

		const json& init = need(root, "initial_state", "config");
		only_keys(init, {"q0", "p0", "A0_real", "A0_imag", "ground_state_frequencies", "e1g"}, "initial_state");
		c.initial.q0 = vector(need(init, "q0", "initial_state"), "initial_state.q0");
		same(c.initial.q0.size(), "initial_state.q0");
		c.initial.p0 = init.contains("p0") ? vector(init["p0"], "initial_state.p0") : Vec::Zero(dim);
		same(c.initial.p0.size(), "initial_state.p0");
		const bool has_a = init.contains("A0_imag"), has_g = init.contains("ground_state_frequencies");
		if (has_a == has_g)
			throw ConfigError("initial_state: give exactly one of A0_imag or ground_state_frequencies");
		if (has_a) {
			c.initial.a_imag = vector(init["A0_imag"], "initial_state.A0_imag");
			same(c.initial.a_imag.size(), "initial_state.A0_imag");
			c.initial.a_real = init.contains("A0_real") ? vector(init["A0_real"], "initial_state.A0_real") : Vec::Zero(dim);
			same(c.initial.a_real.size(), "initial_state.A0_real");
		} else {
			if (init.contains("A0_real"))
				throw ConfigError("initial_state: A0_real requires A0_imag");
			c.initial.ground_frequencies = vector(init["ground_state_frequencies"], "initial_state.ground_state_frequencies");
			same(c.initial.ground_frequencies.size(), "initial_state.ground_state_frequencies");
		}
		if (init.contains("e1g"))
			c.initial.e1g = number(init["e1g"], "initial_state.e1g");

		const json& run = need(root, "run", "config");
		only_keys(run, {"method", "splitting", "integrator", "scheme", "order", "dt", "n_steps", "stride"}, "run");
		c.run.method = guarded("run.method", [&] { return parse_method(text(need(run, "method", "run"), "run.method")); });
		if (run.contains("splitting"))
			c.run.splitting = guarded("run.splitting", [&] { return parse_splitting(text(run["splitting"], "run.splitting")); });
		if (run.contains("integrator"))
			c.run.integrator = text(run["integrator"], "run.integrator");
		if (c.run.integrator != "geometric" && c.run.integrator != "rk4")
			throw ConfigError("run.integrator: expected geometric or rk4");
		if (run.contains("scheme"))
			c.run.scheme = text(run["scheme"], "run.scheme");
		if (run.contains("order")) {
			if (!run["order"].is_number_integer())
				throw ConfigError("run.order: expected an integer");
			c.run.order = run["order"].get<int>();
		}
		c.run.dt = number(need(run, "dt", "run"), "run.dt");
		if (c.run.dt == 0.0)
			throw ConfigError("run.dt: must be nonzero");
		c.run.n_steps = count(need(run, "n_steps", "run"), "run.n_steps");
		c.run.stride = run.contains("stride") ? count(run["stride"], "run.stride") : 1;
		if (c.run.stride == 0)
			throw ConfigError("run.stride: must be positive");

		c.task = text(need(root, "task", "config"), "task");
		static const std::set<std::string> tasks{"propagate", "spectrum", "convergence-sweep", "geometry-check", "symplecticity"};
		if (!tasks.contains(c.task))
			throw ConfigError("task: unknown task '" + c.task + "'");
		c.output = root.contains("output") ? text(root["output"], "output") : "out";

		if (root.contains("spectrum")) {
			const json& s = root["spectrum"];
			only_keys(s, {"methods", "time_factor", "hwhm", "omega_min", "omega_max", "quantum"}, "spectrum");
			SpectrumSpec sp;
			if (s.contains("methods")) {
				sp.methods.clear();
				if (!s["methods"].is_array() || s["methods"].empty())
					throw ConfigError("spectrum.methods: expected a nonempty array");
				for (const auto& m : s["methods"])
					sp.methods.push_back(guarded("spectrum.methods", [&] { return parse_method(text(m, "spectrum.methods")); }));
			}
			if (s.contains("time_factor")) sp.time_factor = number(s["time_factor"], "spectrum.time_factor");
			if (s.contains("hwhm")) sp.hwhm = number(s["hwhm"], "spectrum.hwhm");
			sp.omega_min = number(need(s, "omega_min", "spectrum"), "spectrum.omega_min");
			sp.omega_max = number(need(s, "omega_max", "spectrum"), "spectrum.omega_max");
			if (!(sp.time_factor >= 1.0) || !(sp.hwhm > 0.0) || !(sp.omega_max > sp.omega_min))
				throw ConfigError("spectrum: need time_factor >= 1, hwhm > 0 and omega_max > omega_min");
			if (s.contains("quantum")) {
				const json& q = s["quantum"];
				only_keys(q, {"axes", "boundary_tolerance", "check_stride"}, "spectrum.quantum");
				QuantumSpec qs;
				qs.axes = parse_axes(need(q, "axes", "spectrum.quantum"), "spectrum.quantum.axes");
				same(static_cast<Eigen::Index>(qs.axes.size()), "spectrum.quantum.axes");
				if (q.contains("boundary_tolerance"))
					qs.boundary_tolerance = number(q["boundary_tolerance"], "spectrum.quantum.boundary_tolerance");
				if (q.contains("check_stride"))
					qs.check_stride = count(q["check_stride"], "spectrum.quantum.check_stride");
				sp.quantum = qs;
			}
			c.spectrum = sp;
		}
		if (root.contains("sweep")) {
			const json& s = root["sweep"];
			only_keys(s, {"dt", "t_final", "schemes", "rk4"}, "sweep");
			SweepSpec sw;
			const Vec dts = vector(need(s, "dt", "sweep"), "sweep.dt");
			sw.dt.assign(dts.data(), dts.data() + dts.size());
			for (double d : sw.dt)
				if (!(d > 0.0))
					throw ConfigError("sweep.dt: values must be positive");
			sw.t_final = number(need(s, "t_final", "sweep"), "sweep.t_final");
			if (!(sw.t_final > 0.0))
				throw ConfigError("sweep.t_final: must be positive");
			if (s.contains("schemes")) {
				if (!s["schemes"].is_array())
					throw ConfigError("sweep.schemes: expected an array");
				for (const auto& e : s["schemes"]) {
					only_keys(e, {"order", "name"}, "sweep.schemes");
					SchemeSpec sc;
					if (!need(e, "order", "sweep.schemes").is_number_integer())
						throw ConfigError("sweep.schemes.order: expected an integer");
					sc.order = e["order"].get<int>();
					if (e.contains("name")) sc.name = text(e["name"], "sweep.schemes.name");
					sw.schemes.push_back(sc);
				}
			}
			if (s.contains("rk4")) {
				if (!s["rk4"].is_boolean())
					throw ConfigError("sweep.rk4: expected a boolean");
				sw.rk4 = s["rk4"].get<bool>();
			}
			if (sw.schemes.empty() && !sw.rk4)
				throw ConfigError("sweep: list at least one scheme or enable rk4");
			c.sweep = sw;
		}
		if (c.task == "spectrum" && !c.spectrum)
			throw ConfigError("task spectrum requires a spectrum section");
		if (c.task == "convergence-sweep" && !c.sweep)
			throw ConfigError("task convergence-sweep requires a sweep section");
		return c;
	}

	inline json to_json(const ExperimentConfig& c)
	{
		using detail::to_json;
		json init{{"q0", to_json(c.initial.q0)}, {"p0", to_json(c.initial.p0)}};
		if (c.initial.ground_frequencies.size() > 0) {
			init["ground_state_frequencies"] = to_json(c.initial.ground_frequencies);
		} else {
			init["A0_real"] = to_json(c.initial.a_real);
			init["A0_imag"] = to_json(c.initial.a_imag);
		}
		if (c.initial.e1g)
			init["e1g"] = *c.initial.e1g;
		json j{{"potential", to_json(c.potential)},
			{"mass", to_json(c.mass)},
			{"hbar", c.hbar},
			{"initial_state", init},
			{"run",
				{{"method", std::string(to_string(c.run.method))}, {"splitting", std::string(to_string(c.run.splitting))},
					{"integrator", c.run.integrator}, {"scheme", c.run.scheme}, {"order", c.run.order}, {"dt", c.run.dt},
					{"n_steps", c.run.n_steps}, {"stride", c.run.stride}}},
			{"task", c.task},
			{"output", c.output}};
		if (c.spectrum) {
			json methods = json::array();
			for (auto m : c.spectrum->methods) methods.push_back(std::string(to_string(m)));
			json s{{"methods", methods}, {"time_factor", c.spectrum->time_factor}, {"hwhm", c.spectrum->hwhm},
				{"omega_min", c.spectrum->omega_min}, {"omega_max", c.spectrum->omega_max}};
			if (c.spectrum->quantum) {
				json axes = json::array();
				for (const auto& a : c.spectrum->quantum->axes) axes.push_back({{"min", a.min}, {"max", a.max}, {"n", a.n}});
				s["quantum"] = {{"axes", axes}, {"boundary_tolerance", c.spectrum->quantum->boundary_tolerance},
					{"check_stride", c.spectrum->quantum->check_stride}};
			}
			j["spectrum"] = s;
		}
		if (c.sweep) {
			json schemes = json::array();
			for (const auto& s : c.sweep->schemes) schemes.push_back({{"order", s.order}, {"name", s.name}});
			j["sweep"] = {{"dt", c.sweep->dt}, {"t_final", c.sweep->t_final}, {"schemes", schemes}, {"rk4", c.sweep->rk4}};
		}
		return j;
	}

	inline ExperimentConfig load_config(const std::filesystem::path& path)
	{
		std::ifstream in(path);
		if (!in)
			throw ConfigError("cannot open config '" + path.string() + "'");
		json j;
		try {
			j = json::parse(in, nullptr, true, true);
		} catch (const json::parse_error& e) {
			throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
		}
		return parse_config(j);
	}

	// FNV-1a, 64 bit.
	inline std::string fnv1a_hex(const std::string& s)
	{
		std::uint64_t h = 0xcbf29ce484222325ULL;
		for (unsigned char ch : s) {
			h ^= ch;
			h *= 0x100000001b3ULL;
		}
		char buf[17];
		std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
		return buf;
	}

	inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

	// ---------------------------------------------------------------------------
	// Building the model

	using AnyPotential = std::variant<CoupledMorse, HarmonicPotential>;

	inline AnyPotential make_potential(const PotentialSpec& p)
	{
		return detail::guarded("potential", [&]() -> AnyPotential {
			if (p.type == "harmonic")
				return HarmonicPotential(p.q_eq, p.k, p.v_eq);
			return CoupledMorse(p.q_eq, p.v_eq, p.de_prime, p.chi_prime, p.de, p.chi, p.exponent_cap);
		});
	}

	struct InitialCondition
	{
		GaussianState state;
		double e1g = 0.0;
	};

	inline InitialCondition make_initial(const ExperimentConfig& c)
	{
		return detail::guarded("initial_state", [&] {
			const MassMatrix mass(c.mass);
			InitialCondition ic;
			if (c.initial.ground_frequencies.size() > 0) {
				const Vec w2 = c.initial.ground_frequencies.array().square();
				const Mat k = spd_sqrt(mass.matrix) * Mat(w2.asDiagonal()) * spd_sqrt(mass.matrix);
				const auto g = harmonic_ground_state(HarmonicPotential(c.initial.q0, symmetrized(k)), mass, c.hbar);
				ic.state = g.state;
				ic.state.p = c.initial.p0;
				ic.e1g = g.zero_point_energy;
			} else {
				HellerParams h;
				h.q = c.initial.q0;
				h.p = c.initial.p0;
				h.A = CMat::Zero(h.q.size(), h.q.size());
				h.A.diagonal() = c.initial.a_real.cast<cplx>() + cplx(0.0, 1.0) * c.initial.a_imag.cast<cplx>();
				h.hbar = c.hbar;
				h.mass = mass;
				ic.state = from_heller(h);
			}
			if (c.initial.e1g)
				ic.e1g = *c.initial.e1g;
			return ic;
		});
	}

	inline CompositionScheme scheme_from_config(int order, const std::string& name)
	{
		return detail::guarded("scheme", [&] {
			return name == "optimal" ? optimal_scheme(order) : make_scheme(order, parse_scheme_name(name));
		});
	}

	inline StepPlan make_plan(const RunSpec& r, double dt)
	{
		if (r.integrator == "rk4")
			return StepPlan::runge_kutta(r.method, dt);
		return StepPlan::geometric(r.method, r.splitting, scheme_from_config(r.order, r.scheme), dt);
	}

	// ---------------------------------------------------------------------------
	// Output

	inline std::string fmt(double v)
	{
		if (std::isnan(v))
			return "nan";
		char buf[40];
		std::snprintf(buf, sizeof buf, "%.17g", v);
		return buf;
	}

	struct RunResult
	{
		std::vector<std::string> files;                         // relative to the output directory
		std::vector<std::pair<std::string, std::string>> summary;
	};

	class OutputDir
	{
	public:
		explicit OutputDir(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

		const std::filesystem::path& root() const { return root_; }

		std::ofstream open(const std::string& name, RunResult& result, bool binary = false) const
		{
			std::ofstream os(root_ / name, binary ? std::ios::binary : std::ios::out);
			if (!os)
				throw std::runtime_error("cannot write '" + (root_ / name).string() + "'");
			result.files.push_back(name);
			return os;
		}

	private:
		std::filesystem::path root_;
	};

	inline void write_summary(const OutputDir& out, RunResult& r)
	{
		auto os = out.open("summary.csv", r);
		os << "key,value\n";
		for (const auto& [k, v] : r.summary) os << k << ',' << v << '\n';
	}

	// ---------------------------------------------------------------------------
	// Tasks

	namespace detail
	{
		template <PotentialModel Pot>
		void task_propagate(const ExperimentConfig& c, const Pot& pot, const OutputDir& out, RunResult& r)
		{
			const auto ic = make_initial(c);
			const auto plan = make_plan(c.run, c.run.dt);
			const auto rec = propagate(ic.state, plan, pot, c.run.n_steps, c.run.stride);
			std::vector<EnergyReport> reports;
			{
				auto os = out.open("trajectory.csv", r);
				const auto d = ic.state.dim();
				os << "t,E,E_eff,norm_dev";
				for (Eigen::Index j = 0; j < d; ++j) os << ",q" << j + 1;
				for (Eigen::Index j = 0; j < d; ++j) os << ",p" << j + 1;
				os << '\n';
				for (std::size_t k = 0; k < rec.samples.size(); ++k) {
					const auto& s = rec.samples[k];
					const auto e = energy_report(c.run.method, pot, s);
					reports.push_back(e);
					os << fmt(rec.times[k]) << ',' << fmt(e.E) << ',' << fmt(e.E_eff) << ',' << fmt(norm_deviation(s));
					for (Eigen::Index j = 0; j < d; ++j) os << ',' << fmt(s.q(j));
					for (Eigen::Index j = 0; j < d; ++j) os << ',' << fmt(s.p(j));
					os << '\n';
				}
			}
			{
				auto os = out.open("states.dat", r);
				for (std::size_t k = 0; k < rec.samples.size(); ++k) write_state_record(os, rec.times[k], rec.samples[k]);
			}
			r.summary.emplace_back("completed_steps", std::to_string(rec.completed_steps));
			r.summary.emplace_back("failed", rec.failed ? "1" : "0");
			r.summary.emplace_back("potential_evaluations", std::to_string(rec.potential_evaluations));
			r.summary.emplace_back("effective_energy_drift", fmt(effective_energy_drift(reports)));
			r.summary.emplace_back("energy_drift", fmt(energy_drift(reports)));
			r.summary.emplace_back("final_norm_dev", fmt(norm_deviation(rec.final_state)));
			if (rec.failed)
				throw std::range_error(rec.failure);
		}

		template <PotentialModel Pot>
		void task_geometry(const ExperimentConfig& c, const Pot& pot, const OutputDir& out, RunResult& r)
		{
			const auto ic = make_initial(c);
			const auto plan = make_plan(c.run, c.run.dt);
			std::vector<EnergyReport> reports;
			double worst_norm = 0.0;
			const auto rec = propagate(ic.state, plan, pot, c.run.n_steps, c.run.stride,
				{energy_observer(c.run.method, pot, reports),
					[&](double, const GaussianState& s) { worst_norm = std::max(worst_norm, norm_deviation(s)); }});
			if (rec.failed)
				throw std::range_error(rec.failure);
			const double rev = reversibility_defect(ic.state, plan, pot, c.run.n_steps);
			const double conv = convergence_error(ic.state, plan, pot, c.run.n_steps);
			r.summary.emplace_back("dt", fmt(c.run.dt));
			r.summary.emplace_back("max_norm_dev", fmt(worst_norm));
			r.summary.emplace_back("reversibility_defect", fmt(rev));
			r.summary.emplace_back("effective_energy_drift", fmt(effective_energy_drift(reports)));
			r.summary.emplace_back("energy_drift", fmt(energy_drift(reports)));
			r.summary.emplace_back("convergence_error", fmt(conv));
			r.summary.emplace_back("potential_evaluations", std::to_string(rec.potential_evaluations));
			auto os = out.open("geometry.csv", r);
			os << "key,value\n";
			for (const auto& [k, v] : r.summary) os << k << ',' << v << '\n';
		}

		template <PotentialModel Pot>
		void task_symplecticity(const ExperimentConfig& c, const Pot& pot, const OutputDir& out, RunResult& r)
		{
			const auto ic = make_initial(c);
			const auto plan = make_plan(c.run, c.run.dt);
			const auto hist = symplecticity_history(ic.state, plan, pot, c.run.n_steps, c.run.stride);
			auto os = out.open("symplecticity.csv", r);
			os << "t,residual\n";
			for (const auto& [t, v] : hist) os << fmt(t) << ',' << fmt(v) << '\n';
			r.summary.emplace_back("final_residual", fmt(hist.back().second));
		}

		template <PotentialModel Pot>
		void task_convergence(const ExperimentConfig& c, const Pot& pot, const OutputDir& out, RunResult& r, unsigned threads)
		{
			const auto ic = make_initial(c);
			struct Row
			{
				std::string label;
				int order;
				double dt;
				RunSpec run;
				double error = std::nan("");
				std::size_t evaluations = 0;
				std::string status = "ok";
			};
			std::vector<Row> rows;
			std::vector<std::pair<std::string, RunSpec>> variants;
			for (const auto& s : c.sweep->schemes) {
				RunSpec rs = c.run;
				rs.integrator = "geometric";
				rs.order = s.order;
				rs.scheme = s.name;
				const auto scheme = scheme_from_config(s.order, s.name);
				variants.emplace_back(std::string(to_string(scheme.name)) + "_" + std::to_string(s.order), rs);
			}
			if (c.sweep->rk4) {
				RunSpec rs = c.run;
				rs.integrator = "rk4";
				rs.order = 4;
				variants.emplace_back("rk4_4", rs);
			}
			for (const auto& [label, rs] : variants)
				for (double dt : c.sweep->dt) rows.push_back({label, rs.integrator == "rk4" ? 4 : rs.order, dt, rs});

			std::atomic<std::size_t> next{0};
			auto worker = [&] {
				for (std::size_t i; (i = next++) < rows.size();) {
					Row& row = rows[i];
					try {
						const auto n = static_cast<std::size_t>(std::llround(c.sweep->t_final / row.dt));
						const auto plan = make_plan(row.run, row.dt);
						CountingPotential<Pot> counted(pot);
						row.error = convergence_error(ic.state, plan, counted, n);
						row.evaluations = counted.evaluations();
					} catch (const std::exception& e) {
						row.status = std::string("failed: ") + e.what();
					}
				}
			};
			std::vector<std::thread> pool;
			for (unsigned t = 1; t < std::max(1u, threads); ++t) pool.emplace_back(worker);
			worker();
			for (auto& t : pool) t.join();

			auto os = out.open("convergence.csv", r);
			os << "scheme,order,dt,error,potential_evaluations,status\n";
			std::size_t failed = 0;
			for (const auto& row : rows) {
				std::string status = row.status;
				std::replace(status.begin(), status.end(), ',', ';');
				std::replace(status.begin(), status.end(), '\n', ' ');
				failed += row.status != "ok";
				os << row.label << ',' << row.order << ',' << fmt(row.dt) << ',' << fmt(row.error) << ','
				   << row.evaluations << ',' << status << '\n';
			}
			r.summary.emplace_back("rows", std::to_string(rows.size()));
			r.summary.emplace_back("failed_rows", std::to_string(failed));
		}

		inline void write_autocorrelation(const OutputDir& out, RunResult& r, const std::string& name, const Autocorrelation& ac)
		{
			auto os = out.open(name, r);
			os << "t,ReC,ImC\n";
			for (std::size_t k = 0; k < ac.values.size(); ++k)
				os << fmt(ac.time(k)) << ',' << fmt(ac.values[k].real()) << ',' << fmt(ac.values[k].imag()) << '\n';
		}

		inline void write_spectrum(const OutputDir& out, RunResult& r, const std::string& name, const Spectrum& s)
		{
			auto os = out.open(name, r);
			os << "omega,sigma\n";
			for (std::size_t k = 0; k < s.frequencies.size(); ++k)
				os << fmt(s.frequencies[k]) << ',' << fmt(s.intensities[k]) << '\n';
		}

		template <PotentialModel Pot>
		void task_spectrum(const ExperimentConfig& c, const Pot& pot, const OutputDir& out, RunResult& r)
		{
			const auto& sp = *c.spectrum;
			const auto ic = make_initial(c);
			const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(c.run.n_steps) * sp.time_factor));
			const double sample_dt = c.run.dt * static_cast<double>(c.run.stride);
			std::optional<Spectrum> reference;
			if (sp.quantum) {
				auto psi0 = grid_sample_gaussian(to_heller(ic.state), sp.quantum->axes, sp.quantum->boundary_tolerance);
				grid_normalize(psi0);
				GridPropagator prop(psi0, pot, ic.state.mass, c.hbar, c.run.dt, sp.quantum->check_stride,
					sp.quantum->boundary_tolerance);
				Autocorrelation ac{sample_dt, {grid_autocorrelation(psi0, psi0)}, ic.e1g, c.hbar};
				const double e0 = prop.energy();
				double e_dev = 0.0;
				for (std::size_t k = 0; k < n / c.run.stride; ++k) {
					prop.step(c.run.stride);
					ac.values.push_back(grid_autocorrelation(psi0, prop.wavefunction()));
					e_dev = std::max(e_dev, std::abs(prop.energy() - e0));
				}
				write_autocorrelation(out, r, "autocorrelation_quantum.csv", ac);
				reference = spectrum(damp(ac, sp.hwhm), sp.omega_min, sp.omega_max, sp.hwhm);
				write_spectrum(out, r, "spectrum_quantum.csv", *reference);
				r.summary.emplace_back("quantum_energy_deviation", fmt(e_dev));
				r.summary.emplace_back("quantum_final_norm", fmt(grid_norm(prop.wavefunction())));
				r.summary.emplace_back("quantum_max_boundary_amplitude", fmt(prop.max_boundary_amplitude()));
				if (pot.dim() == 1) {
					if constexpr (std::is_same_v<Pot, CoupledMorse>) {
						if (pot.de_cpl() == 0.0) {
							const auto levels = morse_levels(pot, ic.state.mass.matrix(0, 0), c.hbar, 200);
							double worst = 0.0;
							for (double peak : find_peaks(*reference, 0.01)) {
								double best = std::numeric_limits<double>::infinity();
								for (double e : levels) best = std::min(best, std::abs((e - ic.e1g) / c.hbar - peak));
								worst = std::max(worst, best);
							}
							r.summary.emplace_back("quantum_peak_max_offset", fmt(worst));
							r.summary.emplace_back("frequency_spacing", fmt(reference->spacing()));
						}
					}
				}
			}
			for (MethodKind m : sp.methods) {
				RunSpec rs = c.run;
				rs.method = m;
				const auto rec = propagate(ic.state, make_plan(rs, c.run.dt), pot, n, c.run.stride);
				if (rec.failed)
					throw std::range_error(std::string(to_string(m)) + ": " + rec.failure);
				const auto ac = gwd_autocorrelation(rec.samples, ic.state, sample_dt, ic.e1g);
				const auto spec = spectrum(damp(ac, sp.hwhm), sp.omega_min, sp.omega_max, sp.hwhm);
				const std::string name(to_string(m));
				write_autocorrelation(out, r, "autocorrelation_" + name + ".csv", ac);
				write_spectrum(out, r, "spectrum_" + name + ".csv", spec);
				if (reference)
					r.summary.emplace_back("l2_distance_" + name, fmt(spectral_distance(spec, *reference)));
			}
		}
	}

	// Runs the configured task into out_dir and writes summary.csv and
	// manifest.json there.
	inline RunResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir, unsigned threads = 1)
	{
		const OutputDir out(out_dir);
		RunResult r;
		const auto pot = make_potential(c.potential);
		std::visit(
			[&](const auto& p) {
				require_same_dim(p.dim(), c.initial.q0.size(), "initial state");
				if (c.task == "propagate") detail::task_propagate(c, p, out, r);
				else if (c.task == "geometry-check") detail::task_geometry(c, p, out, r);
				else if (c.task == "symplecticity") detail::task_symplecticity(c, p, out, r);
				else if (c.task == "convergence-sweep") detail::task_convergence(c, p, out, r, threads);
				else detail::task_spectrum(c, p, out, r);
			},
			pot);
		write_summary(out, r);
		std::vector<std::string> files = r.files;
		files.push_back("manifest.json");
		std::sort(files.begin(), files.end());
		const json manifest{{"config", to_json(c)}, {"config_hash", config_hash(c)}, {"version", version}, {"files", files}};
		std::ofstream(out.root() / "manifest.json") << manifest.dump(2) << '\n';
		r.files = files;
		return r;
	}

	// Output root: explicit --out, else $GWD_OUTPUT_ROOT/<config output>, else the config output.
	inline std::filesystem::path resolve_output(const ExperimentConfig& c, const std::string& cli_out)
	{
		if (!cli_out.empty())
			return cli_out;
		const std::filesystem::path rel(c.output);
		if (const char* root = std::getenv("GWD_OUTPUT_ROOT"); root && *root && rel.is_relative())
			return std::filesystem::path(root) / rel;
		return rel;
	}

	struct SweepRow
	{
		double value = 0.0;
		std::string status = "ok";
		RunResult result;
	};

	// One independent run per dt value at fixed final time run.dt * run.n_steps;
	// each row writes to row_<i>/ and the table goes to sweep.csv.
	inline std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::vector<double>& values,
		const std::filesystem::path& out_dir, unsigned threads = 1)
	{
		if (values.empty())
			throw ConfigError("sweep: no values given");
		for (std::size_t i = 0; i < values.size(); ++i) {
			if (!(values[i] > 0.0))
				throw ConfigError("sweep: values must be positive");
			if (i > 0 && values[i] == values[i - 1])
				throw ConfigError("sweep: values must be distinct");
		}
		if (!std::is_sorted(values.begin(), values.end()) && !std::is_sorted(values.rbegin(), values.rend()))
			throw ConfigError("sweep: values must be sorted");
		const double t_final = base.run.dt * static_cast<double>(base.run.n_steps);
		std::filesystem::create_directories(out_dir);
		std::vector<SweepRow> rows(values.size());
		std::atomic<std::size_t> next{0};
		auto worker = [&] {
			for (std::size_t i; (i = next++) < rows.size();) {
				rows[i].value = values[i];
				ExperimentConfig c = base;
				c.run.dt = values[i];
				c.run.n_steps = static_cast<std::size_t>(std::llround(t_final / values[i]));
				try {
					rows[i].result = run_experiment(c, out_dir / ("row_" + std::to_string(i)), 1);
				} catch (const std::exception& e) {
					rows[i].status = std::string("failed: ") + e.what();
				}
			}
		};
		std::vector<std::thread> pool;
		for (unsigned t = 1; t < std::max(1u, threads); ++t) pool.emplace_back(worker);
		worker();
		for (auto& t : pool) t.join();

		std::vector<std::string> keys;
		for (const auto& row : rows)
			if (row.status == "ok") {
				for (const auto& [k, _] : row.result.summary) keys.push_back(k);
				break;
			}
		std::ofstream os(out_dir / "sweep.csv");
		os << "row,dt,status";
		for (const auto& k : keys) os << ',' << k;
		os << '\n';
		std::vector<std::string> files{"sweep.csv", "manifest.json"};
		for (std::size_t i = 0; i < rows.size(); ++i) {
			std::string status = rows[i].status;
			std::replace(status.begin(), status.end(), ',', ';');
			std::replace(status.begin(), status.end(), '\n', ' ');
			os << i << ',' << fmt(rows[i].value) << ',' << status;
			for (const auto& k : keys) {
				std::string v = "nan";
				for (const auto& [kk, vv] : rows[i].result.summary)
					if (kk == k) v = vv;
				os << ',' << v;
			}
			os << '\n';
			for (const auto& f : rows[i].result.files) files.push_back("row_" + std::to_string(i) + "/" + f);
		}
		std::sort(files.begin(), files.end());
		const json manifest{{"config", to_json(base)}, {"config_hash", config_hash(base)}, {"version", version},
			{"sweep", {{"parameter", "dt"}, {"values", values}}}, {"files", files}};
		std::ofstream(out_dir / "manifest.json") << manifest.dump(2) << '\n';
		return rows;
	}
}

#endif
