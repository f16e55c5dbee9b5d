#pragma once

#include <random>

#include "delayco/model.hpp"

namespace fixtures {

using delayco::MatrixXd;

inline MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    MatrixXd out(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) out(i, j) = g(rng);
    return out;
}

// Stable-ish plant with B = Bw = Q = R = I and the two-block partition
// {0..n-2} / {n-1}.
struct Instance {
    delayco::PlantModel plant;
    delayco::CpsPartition partition;
    delayco::StructureMasks masks;
    MatrixXd K;
};

inline Instance random_instance(int n, unsigned seed, double gain_scale = 0.3) {
    std::mt19937_64 rng(seed);
    MatrixXd A = gaussian(n, n, rng, 1.0 / std::sqrt(n)) - 1.2 * MatrixXd::Identity(n, n);
    const MatrixXd I = MatrixXd::Identity(n, n);
    delayco::CpsPartition part;
    if (n == 1) {
        part = delayco::CpsPartition::single_block(1, 1);
    } else {
        part.state_blocks.resize(2);
        part.input_blocks.resize(2);
        for (int i = 0; i < n - 1; ++i) {
            part.state_blocks[0].push_back(i);
            part.input_blocks[0].push_back(i);
        }
        part.state_blocks[1] = {n - 1};
        part.input_blocks[1] = {n - 1};
    }
    auto masks = delayco::build_masks(part, n, n);
    MatrixXd K = gaussian(n, n, rng, gain_scale) + 0.5 * I;
    return Instance{delayco::PlantModel(A, I, I, I, I), part, masks, K};
}

}  // namespace fixtures
