#ifndef GWD_TENSOR_HPP
#define GWD_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "linalg.hpp"

namespace gwd
{
	// Dense rank-3 tensor over a D-dimensional index set, stored i fastest.
	class Tensor3
	{
	public:
		Tensor3() = default;
		explicit Tensor3(Eigen::Index dim) : dim_(dim), data_(static_cast<std::size_t>(dim * dim * dim), 0.0) {}

		Eigen::Index dim() const { return dim_; }
		double& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) { return data_[idx(i, j, k)]; }
		double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k) const { return data_[idx(i, j, k)]; }

		// out_i = T_ijk M_jk
		Vec contract_last_two(const Mat& m) const
		{
			Vec out = Vec::Zero(dim_);
			for (Eigen::Index k = 0; k < dim_; ++k)
				for (Eigen::Index j = 0; j < dim_; ++j) {
					const double mjk = m(j, k);
					if (mjk == 0.0)
						continue;
					for (Eigen::Index i = 0; i < dim_; ++i)
						out(i) += (*this)(i, j, k) * mjk;
				}
			return out;
		}

		// out_ij = T_ijk v_k
		Mat contract_last(const Vec& v) const
		{
			Mat out = Mat::Zero(dim_, dim_);
			for (Eigen::Index k = 0; k < dim_; ++k)
				for (Eigen::Index j = 0; j < dim_; ++j)
					for (Eigen::Index i = 0; i < dim_; ++i)
						out(i, j) += (*this)(i, j, k) * v(k);
			return out;
		}

		// Largest deviation from total symmetry.
		double asymmetry() const
		{
			double worst = 0.0;
			for (Eigen::Index i = 0; i < dim_; ++i)
				for (Eigen::Index j = 0; j < dim_; ++j)
					for (Eigen::Index k = 0; k < dim_; ++k) {
						const double x = (*this)(i, j, k);
						for (double y : {(*this)(j, i, k), (*this)(i, k, j), (*this)(k, j, i), (*this)(j, k, i), (*this)(k, i, j)})
							worst = std::max(worst, std::abs(x - y));
					}
			return worst;
		}

		Tensor3& operator+=(const Tensor3& o)
		{
			for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
			return *this;
		}

	private:
		std::size_t idx(Eigen::Index i, Eigen::Index j, Eigen::Index k) const
		{
			return static_cast<std::size_t>(i + dim_ * (j + dim_ * k));
		}

		Eigen::Index dim_ = 0;
		std::vector<double> data_;
	};

	class Tensor4
	{
	public:
		Tensor4() = default;
		explicit Tensor4(Eigen::Index dim) : dim_(dim), data_(static_cast<std::size_t>(dim * dim * dim * dim), 0.0) {}

		Eigen::Index dim() const { return dim_; }
		double& operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k, Eigen::Index l) { return data_[idx(i, j, k, l)]; }
		double operator()(Eigen::Index i, Eigen::Index j, Eigen::Index k, Eigen::Index l) const { return data_[idx(i, j, k, l)]; }

		// out_ij = T_ijkl M_kl
		Mat contract_last_two(const Mat& m) const
		{
			Mat out = Mat::Zero(dim_, dim_);
			for (Eigen::Index l = 0; l < dim_; ++l)
				for (Eigen::Index k = 0; k < dim_; ++k)
					for (Eigen::Index j = 0; j < dim_; ++j)
						for (Eigen::Index i = 0; i < dim_; ++i)
							out(i, j) += (*this)(i, j, k, l) * m(k, l);
			return out;
		}

		double asymmetry() const
		{
			double worst = 0.0;
			const auto d = dim_;
			for (Eigen::Index i = 0; i < d; ++i)
				for (Eigen::Index j = 0; j < d; ++j)
					for (Eigen::Index k = 0; k < d; ++k)
						for (Eigen::Index l = 0; l < d; ++l) {
							const double x = (*this)(i, j, k, l);
							// transpositions generate the symmetric group
							for (double y : {(*this)(j, i, k, l), (*this)(i, k, j, l), (*this)(i, j, l, k)})
								worst = std::max(worst, std::abs(x - y));
						}
			return worst;
		}

		Tensor4& operator+=(const Tensor4& o)
		{
			for (std::size_t n = 0; n < data_.size(); ++n) data_[n] += o.data_[n];
			return *this;
		}

	private:
		std::size_t idx(Eigen::Index i, Eigen::Index j, Eigen::Index k, Eigen::Index l) const
		{
			return static_cast<std::size_t>(i + dim_ * (j + dim_ * (k + dim_ * l)));
		}

		Eigen::Index dim_ = 0;
		std::vector<double> data_;
	};
}

#endif
