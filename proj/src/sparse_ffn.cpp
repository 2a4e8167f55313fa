#include "sv/sparse_ffn.hpp"

#include <cmath>

namespace sv {

ChannelSelection select_channels(std::span<const float> h, float tau) {
    if (tau < 0.0f) throw ConfigError("select_channels: tau must be >= 0");
    ChannelSelection sel;
    sel.num_channels = int(h.size());
    for (int i = 0; i < int(h.size()); ++i)
        if (std::fabs(h[i]) < tau) sel.pruned.push_back(i);
    return sel;
}

std::vector<float> sparse_ffn_forward(std::span<const float> x, const FfnWeights& w,
                                      float tau, FlopCounter* counter,
                                      FlopCategory cat, FfnCallRecord* record) {
    const int d = int(x.size());
    const int df = w.channels();
    if (w.w_gate.cols != d || w.w_up.cols != d || w.w_up.rows != df ||
        w.w_down.rows != df || w.w_down.cols != int(w.b_down.size()))
        throw ConfigError("sparse_ffn_forward: weight shape mismatch");

    std::vector<float> h(df);
    for (int i = 0; i < df; ++i)
        h[i] = silu(float(dot_f32(x.data(), w.w_gate.row(i), d) + double(w.b_gate[i])));

    ChannelSelection sel = select_channels(h, tau > 0.0f ? tau : 0.0f);

    const int dout = w.w_down.cols;
    std::vector<double> acc(dout);
    for (int j = 0; j < dout; ++j) acc[j] = double(w.b_down[j]);

    std::size_t next_pruned = 0;
    int active = 0;
    for (int i = 0; i < df; ++i) {
        if (next_pruned < sel.pruned.size() && sel.pruned[next_pruned] == i) {
            ++next_pruned;
            continue;
        }
        ++active;
        const float u = float(dot_f32(x.data(), w.w_up.row(i), d) + double(w.b_up[i]));
        const double c = double(h[i]) * double(u);
        const float* down = w.w_down.row(i);
        for (int j = 0; j < dout; ++j) acc[j] += c * double(down[j]);
    }

    if (counter) counter->add(cat, 2ull * d * df + 4ull * d * active);
    if (record) {
        record->pruned = int(sel.pruned.size());
        record->channels = df;
    }

    std::vector<float> y(dout);
    for (int j = 0; j < dout; ++j) y[j] = float(acc[j]);
    return y;
}

double mean_ffn_sparsity(std::span<const FfnCallRecord> records) {
    if (records.empty()) throw ConfigError("mean_ffn_sparsity: no FFN calls recorded");
    double sum = 0.0;
    for (const auto& r : records) sum += double(r.pruned) / double(r.channels);
    return sum / double(records.size());
}

} // namespace sv
