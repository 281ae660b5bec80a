// Least-squares demodulator used as a test oracle. It rebuilds the pulse
// matrix from the taps (truncated at the frame edges exactly like the
// framer), solves for the symbols and removes the unknown power
// normalization by decision-directed gain estimation.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <span>
#include <vector>

#include "trustbench/siggen.hpp"

namespace oracle {

class LsDemodulator {
public:
    LsDemodulator(std::span<const double> taps, int sps) : sps_(sps) {
        const int n = trustbench::kFrameLength;
        const int nsym = n / sps;
        const int center = static_cast<int>(taps.size()) / 2;
        h_ = Eigen::MatrixXd::Zero(n, nsym);
        for (int k = 0; k < nsym; ++k)
            for (int t = 0; t < static_cast<int>(taps.size()); ++t) {
                const int row = k * sps + t - center;
                if (row >= 0 && row < n) h_(row, k) = taps[t];
            }
        solver_.compute(h_.transpose() * h_);
    }

    std::vector<std::complex<double>> equalize(std::span<const std::complex<double>> frame) const {
        Eigen::VectorXcd y(frame.size());
        for (std::size_t i = 0; i < frame.size(); ++i) y[i] = frame[i];
        const Eigen::VectorXcd rhs = h_.transpose().cast<std::complex<double>>() * y;
        const Eigen::VectorXcd s = solver_.solve(rhs);
        return {s.data(), s.data() + s.size()};
    }

    /// Indices into the constellation's point list, one per symbol.
    std::vector<std::size_t> decide(std::span<const std::complex<double>> frame,
                                    const trustbench::Constellation& c) const {
        const auto s = equalize(frame);
        double p = 0.0;
        for (auto v : s) p += std::norm(v);
        double gain = std::sqrt(p / s.size());
        std::vector<std::size_t> idx(s.size());
        for (int round = 0; round < 4; ++round) {
            std::complex<double> num = 0.0;
            double den = 0.0;
            for (std::size_t k = 0; k < s.size(); ++k) {
                idx[k] = nearest(c, s[k] / gain);
                num += s[k] * std::conj(c.points[idx[k]]);
                den += std::norm(c.points[idx[k]]);
            }
            if (den > 0) gain = num.real() / den;
        }
        return idx;
    }

private:
    static std::size_t nearest(const trustbench::Constellation& c, std::complex<double> z) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < c.points.size(); ++i)
            if (std::norm(z - c.points[i]) < std::norm(z - c.points[best])) best = i;
        return best;
    }

    int sps_;
    Eigen::MatrixXd h_;
    Eigen::LDLT<Eigen::MatrixXd> solver_;
};

} // namespace oracle
