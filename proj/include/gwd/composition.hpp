#ifndef GWD_COMPOSITION_HPP
#define GWD_COMPOSITION_HPP

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gwd
{
	enum class SchemeName { identity2, triple_jump, suzuki, kahan_li6, kahan_li8, sofroniou_spaletta10 };

	inline std::string_view to_string(SchemeName n)
	{
		switch (n) {
			case SchemeName::identity2: return "identity2";
			case SchemeName::triple_jump: return "triple_jump";
			case SchemeName::suzuki: return "suzuki";
			case SchemeName::kahan_li6: return "kahan_li6";
			case SchemeName::kahan_li8: return "kahan_li8";
			case SchemeName::sofroniou_spaletta10: return "sofroniou_spaletta10";
		}
		return "?";
	}

	inline SchemeName parse_scheme_name(std::string_view s)
	{
		if (s == "identity2" || s == "second_order") return SchemeName::identity2;
		if (s == "triple_jump") return SchemeName::triple_jump;
		if (s == "suzuki") return SchemeName::suzuki;
		if (s == "kahan_li6" || s == "kahan_li") return SchemeName::kahan_li6;
		if (s == "kahan_li8") return SchemeName::kahan_li8;
		if (s == "sofroniou_spaletta10" || s == "sofroniou_spaletta") return SchemeName::sofroniou_spaletta10;
		throw std::invalid_argument("unknown composition scheme '" + std::string(s) + "'");
	}

	// A symmetric composition U_order = U_base(gamma_M dt) ... U_base(gamma_1 dt).
	// For the recursive families (triple jump, Suzuki) U_base is the same family
	// one order lower; the optimal schemes compose the second-order step directly.
	struct CompositionScheme
	{
		SchemeName name = SchemeName::identity2;
		int order = 2;
		int base_order = 2;
		std::vector<double> gammas{1.0};

		std::vector<double> partial_sums() const
		{
			std::vector<double> xi;
			double acc = 0.0;
			for (double g : gammas) xi.push_back(acc += g);
			return xi;
		}

		// Number of second-order steps per composed step.
		std::size_t stages() const;
	};

	namespace detail
	{
		inline std::vector<double> mirror(const std::vector<double>& half)
		{
			std::vector<double> g(half);
			for (auto it = half.rbegin() + 1; it != half.rend(); ++it) g.push_back(*it);
			return g;
		}

		// Kahan & Li (1997), order 6, 9 stages.
		inline const std::vector<double> kahan_li6_half{
			0.39216144400731413927925056, 0.33259913678935943859974864, -0.70624617255763935980996482,
			0.08221359629355080023149045, 0.79854399093482996339895035};

		// Kahan & Li (1997), order 8, 17 stages.
		inline const std::vector<double> kahan_li8_half{
			0.13020248308889008087881763, 0.56116298177510838456196441, -0.38947496264484728640807860,
			0.15884190655515560089621075, -0.39590389413323757733623154, 0.18453964097831570709183254,
			0.25837438768632204729397911, 0.29501172360931029887096624, -0.60550853383003451169892108};

		// Sofroniou & Spaletta (2005), order 10, 35 stages.
		inline const std::vector<double> sofroniou_spaletta10_half{
			0.07879572252168641926390768, 0.31309610341510852776481247, 0.02791838323507806610952027,
			-0.22959284159390709415121340, 0.13096206107716486317465686, -0.26973340565451071434460973,
			0.07497334315589143566613711, 0.11199342399981020488957508, 0.36613344954622675119314812,
			-0.39910563013603589787862981, 0.10308739852747107731580277, 0.41143087395589023782070412,
			-0.00486636058313526176219566, -0.39203335370863990644808194, 0.05194250296244964703718290,
			0.05066509075992449633587434, 0.04967437063972987905456880, 0.04931773575959453791768001};
	}

	inline CompositionScheme make_scheme(int order, SchemeName name)
	{
		auto bad = [&]() {
			return std::invalid_argument("unsupported scheme " + std::string(to_string(name)) + " of order "
				+ std::to_string(order));
		};
		CompositionScheme s;
		s.name = name;
		s.order = order;
		switch (name) {
			case SchemeName::identity2:
				if (order != 2) throw bad();
				s.base_order = 2;
				s.gammas = {1.0};
				break;
			case SchemeName::triple_jump:
			case SchemeName::suzuki: {
				if (order < 4 || order % 2 != 0 || order > 10) throw bad();
				const int p = order - 2;
				const double root = 1.0 / (p + 1);
				s.base_order = p;
				if (name == SchemeName::triple_jump) {
					const double g = 1.0 / (2.0 - std::pow(2.0, root));
					s.gammas = {g, 1.0 - 2.0 * g, g};
				} else {
					const double g = 1.0 / (4.0 - std::pow(4.0, root));
					s.gammas = {g, g, 1.0 - 4.0 * g, g, g};
				}
				break;
			}
			case SchemeName::kahan_li6:
				if (order != 6) throw bad();
				s.gammas = detail::mirror(detail::kahan_li6_half);
				break;
			case SchemeName::kahan_li8:
				if (order != 8) throw bad();
				s.gammas = detail::mirror(detail::kahan_li8_half);
				break;
			case SchemeName::sofroniou_spaletta10:
				if (order != 10) throw bad();
				s.gammas = detail::mirror(detail::sofroniou_spaletta10_half);
				break;
		}
		return s;
	}

	// Most efficient known scheme per order: Suzuki (4), Kahan-Li (6, 8),
	// Sofroniou-Spaletta (10).
	inline CompositionScheme optimal_scheme(int order)
	{
		switch (order) {
			case 2: return make_scheme(2, SchemeName::identity2);
			case 4: return make_scheme(4, SchemeName::suzuki);
			case 6: return make_scheme(6, SchemeName::kahan_li6);
			case 8: return make_scheme(8, SchemeName::kahan_li8);
			case 10: return make_scheme(10, SchemeName::sofroniou_spaletta10);
			default: throw std::invalid_argument("no optimal scheme of order " + std::to_string(order));
		}
	}

	// Fully expanded list of second-order step sizes (fractions of dt).
	inline std::vector<double> second_order_weights(const CompositionScheme& s)
	{
		if (s.base_order == 2)
			return s.gammas;
		const auto inner = second_order_weights(make_scheme(s.base_order, s.name));
		std::vector<double> w;
		w.reserve(inner.size() * s.gammas.size());
		for (double g : s.gammas)
			for (double x : inner) w.push_back(g * x);
		return w;
	}

	inline std::size_t CompositionScheme::stages() const { return second_order_weights(*this).size(); }

	enum class Splitting { tvt, vtv };

	inline Splitting parse_splitting(std::string_view s)
	{
		if (s == "tvt") return Splitting::tvt;
		if (s == "vtv") return Splitting::vtv;
		throw std::invalid_argument("unknown splitting '" + std::string(s) + "' (expected tvt or vtv)");
	}

	inline std::string_view to_string(Splitting s) { return s == Splitting::tvt ? "tvt" : "vtv"; }

	enum class FlowKind { kinetic, potential };

	struct Flow
	{
		FlowKind kind;
		double fraction;  // flow time = fraction * dt
	};

	// Elementary flows of one composed step in application order. With `merge`,
	// the outer half-flows of consecutive second-order steps are fused.
	inline std::vector<Flow> flow_sequence(const CompositionScheme& scheme, Splitting splitting, bool merge = true)
	{
		const FlowKind outer = splitting == Splitting::tvt ? FlowKind::kinetic : FlowKind::potential;
		const FlowKind inner = splitting == Splitting::tvt ? FlowKind::potential : FlowKind::kinetic;
		std::vector<Flow> seq;
		for (double w : second_order_weights(scheme)) {
			if (merge && !seq.empty() && seq.back().kind == outer)
				seq.back().fraction += 0.5 * w;
			else
				seq.push_back({outer, 0.5 * w});
			seq.push_back({inner, w});
			seq.push_back({outer, 0.5 * w});
		}
		return seq;
	}
}

#endif
