// Batch front end: gwd run --config F [--out DIR] [--threads N]
//                  gwd sweep --config F --param dt --values v1,v2,... [--out DIR] [--threads N]
#include <CLI11.hpp>

#include <gwd/experiment.hpp>

#include <iostream>
#include <thread>

int main(int argc, char** argv)
{
	CLI::App app{"Gaussian wavepacket dynamics experiments"};
	app.require_subcommand(1);

	std::string config, out, param = "dt";
	unsigned threads = 1;
	std::vector<double> values;

	auto* run = app.add_subcommand("run", "run the task of a configuration");
	run->add_option("--config", config, "experiment configuration (JSON) or manifest")->required()->check(CLI::ExistingFile);
	run->add_option("--out", out, "output directory (overrides the config and GWD_OUTPUT_ROOT)");
	run->add_option("--threads", threads, "worker threads for sweeps")->check(CLI::Range(1u, 1024u));

	auto* sweep = app.add_subcommand("sweep", "repeat a run over parameter values at fixed final time");
	sweep->add_option("--config", config, "experiment configuration (JSON) or manifest")->required()->check(CLI::ExistingFile);
	sweep->add_option("--param", param, "swept parameter")->check(CLI::IsMember({"dt"}));
	sweep->add_option("--values", values, "parameter values, sorted")->required()->delimiter(',');
	sweep->add_option("--out", out, "output directory (overrides the config and GWD_OUTPUT_ROOT)");
	sweep->add_option("--threads", threads, "concurrent rows")->check(CLI::Range(1u, 1024u));

	CLI11_PARSE(app, argc, argv);

	try {
		const auto cfg = gwd::load_config(config);
		const auto dir = gwd::resolve_output(cfg, out);
		if (*run) {
			const auto result = gwd::run_experiment(cfg, dir, threads);
			for (const auto& [k, v] : result.summary) std::cout << k << ' ' << v << '\n';
			std::cout << "wrote " << result.files.size() << " files to " << dir.string() << '\n';
		} else {
			const auto rows = gwd::run_sweep(cfg, values, dir, threads);
			int failed = 0;
			for (const auto& r : rows) {
				std::cout << param << '=' << gwd::fmt(r.value) << ' ' << r.status << '\n';
				failed += r.status != "ok";
			}
			std::cout << "wrote " << (dir / "sweep.csv").string() << '\n';
			if (failed == static_cast<int>(rows.size()))
				return 3;
		}
	} catch (const gwd::ConfigError& e) {
		std::cerr << "gwd: configuration error: " << e.what() << '\n';
		return 2;
	} catch (const std::range_error& e) {
		std::cerr << "gwd: trajectory left the potential's valid range: " << e.what() << '\n';
		return 3;
	} catch (const gwd::BoundaryLeakError& e) {
		std::cerr << "gwd: " << e.what() << '\n';
		return 4;
	} catch (const std::exception& e) {
		std::cerr << "gwd: " << e.what() << '\n';
		return 1;
	}
	return 0;
}
