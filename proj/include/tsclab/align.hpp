#pragma once

#include <cstdint>
#include <vector>

#include "tsclab/dataset.hpp"
#include "tsclab/net.hpp"

namespace tsclab {

// Per-hidden-layer neuron permutations. perms[l-1][i] is the source index that
// moves to position i in hidden layer l, i.e. permuted activation z'[i] = z[p[i]].
struct PermutationSet {
    std::vector<std::vector<int>> perms;

    void validate(const NetworkSpec& spec) const;
    bool is_identity() const;
};

PermutationSet identity_permutation(const NetworkSpec& spec);
PermutationSet inverse_permutation(const PermutationSet& s);

// One matrix per hidden layer: R_l(i, j) = sum_i standardized activation of
// model A neuron i times standardized activation of model B neuron j, where
// each neuron is standardized by its own dataset mean and epsilon-floored
// standard deviation.
std::vector<Matrix> correlation_matrices(const NetworkSpec& spec, const Weights& w_a,
                                         const Weights& w_b, const Dataset& data);

enum class AssignmentSense { minimize, maximize };

// Optimal linear assignment on a square score matrix; returns a[i] = column
// assigned to row i. Among equally optimal assignments the lexicographically
// smallest one (lowest row, then lowest column) is returned.
std::vector<int> solve_assignment(const Matrix& scores, AssignmentSense sense);

double assignment_value(const Matrix& scores, const std::vector<int>& assign);

// What find_permutation optimises: the L2 distance between paired hidden
// features. Aligning (min) maximises total correlation; un-aligning (max)
// minimises it.
enum class AlignObjective { min_distance, max_distance };

// Alignment search over activation correlations: solves one assignment per
// hidden layer, applying each layer's permutation to the working copy of w_b
// before the next layer's activations are computed.
PermutationSet find_permutation(const NetworkSpec& spec, const Weights& w_a, const Weights& w_b,
                                const Dataset& data, AlignObjective objective);

// Applies the neuron renumbering: rows of W_l and b_l by p_l, columns of
// W_{l+1} by p_l. Pure data movement, hence exactly invertible.
Weights permute_layers(const NetworkSpec& spec, const Weights& w, const PermutationSet& s);

// M_l: summed squared L2 distance between the two models' layer-l features,
// optionally on per-model standardized activations.
double feature_distance(const NetworkSpec& spec, const Weights& w_a, const Weights& w_b,
                        const Dataset& data, int layer, bool standardized = false);

// True when every layer's Frobenius norm (weights and biases) matches between
// the two parameter sets within tol.
bool check_norm_consistency(const NetworkSpec& spec, const Weights& w_a, const Weights& w_b,
                            double tol);

} // namespace tsclab
