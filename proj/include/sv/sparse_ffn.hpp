#pragma once

#include <span>
#include <vector>

#include "sv/kernels.hpp"

namespace sv {

/* Gated FFN weight bundle. w_gate/w_up are (d_f, d) row-major; w_down is
 * stored input-major, (d_f, d), so each hidden channel's output row is
 * contiguous and pruned channels skip whole rows. Also used per expert
 * with d_e in place of d_f. */
struct FfnWeights {
    Matrix w_gate, w_up, w_down;
    std::vector<float> b_gate, b_up, b_down;

    int hidden() const { return w_gate.cols; }
    int channels() const { return w_gate.rows; }
};

struct ChannelSelection {
    std::vector<int> pruned; // S: channels with |h_i| < tau, ascending
    int num_channels = 0;    // d_f

    int active() const { return num_channels - int(pruned.size()); }
    double sparsity() const {
        return num_channels == 0 ? 0.0 : double(pruned.size()) / num_channels;
    }
};

/* S = {i : |h_i| < tau}, strict, so tau=0 prunes nothing. */
ChannelSelection select_channels(std::span<const float> h, float tau);

struct FfnCallRecord {
    int pruned = 0;
    int channels = 0;
};

/* h = silu(W_gate x + b_gate) in full; up/down only on active channels;
 * the full output bias b_down applied once. Counts 2*d*d_f + 4*d*|active|
 * into `cat`. tau <= 0 is the dense path. */
std::vector<float> sparse_ffn_forward(std::span<const float> x, const FfnWeights& w,
                                      float tau, FlopCounter* counter,
                                      FlopCategory cat, FfnCallRecord* record = nullptr);

/* Token- and layer-averaged |S|/d_f over recorded calls. */
double mean_ffn_sparsity(std::span<const FfnCallRecord> records);

} // namespace sv
