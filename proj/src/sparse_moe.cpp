#include "sv/sparse_moe.hpp"

#include <algorithm>
#include <cmath>

namespace sv {

void ThresholdMap::validate() const {
    if (k < 2) throw ConfigError("ThresholdMap: k >= 2 required");
    for (const auto& [layer, beta] : layer_beta) {
        if (beta.empty() || int(beta.size()) > k - 1)
            throw ConfigError("ThresholdMap: beta vector must hold 1..k-1 levels");
        for (double b : beta)
            if (!(b > 0.0 && b < 1.0))
                throw ConfigError("ThresholdMap: beta out of (0,1)");
    }
}

static void check_ascending(std::span<const float> w) {
    for (std::size_t i = 1; i < w.size(); ++i)
        if (w[i] < w[i - 1]) throw LogicError("routing weights not ascending");
}

static double ratio_impl(std::span<const float> w, int count_low) {
    double total = 0.0, low = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        total += double(w[j]);
        if (int(j) < count_low) low += double(w[j]);
    }
    if (total <= 0.0) throw LogicError("calib_ratio: zero weight mass");
    return low / total;
}

double calib_ratio(std::span<const float> w_ascending, int m) {
    const int k = int(w_ascending.size());
    if (m < 1 || m >= k) throw ConfigError("calib_ratio: m must lie in [1,k)");
    check_ascending(w_ascending);
    return ratio_impl(w_ascending, k - m);
}

double calib_ratio_alt(std::span<const float> w_ascending, int m) {
    const int k = int(w_ascending.size());
    if (m < 1 || m >= k) throw ConfigError("calib_ratio_alt: m must lie in [1,k)");
    check_ascending(w_ascending);
    return ratio_impl(w_ascending, m);
}

static double median_inplace(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

ThresholdMap build_threshold_map(
    const std::map<int, std::vector<std::vector<float>>>& stream, int k, int max_m) {
    if (k < 2) throw ConfigError("build_threshold_map: k >= 2 required");
    const int levels = std::min(max_m, k - 1);
    if (levels < 1) throw ConfigError("build_threshold_map: no skip levels requested");

    ThresholdMap map;
    map.k = k;
    for (const auto& [layer, tokens] : stream) {
        if (tokens.empty())
            throw ConfigError("build_threshold_map: empty calibration for a layer");
        std::vector<double> beta(levels);
        for (int m = 1; m <= levels; ++m) {
            std::vector<double> ratios;
            ratios.reserve(tokens.size());
            for (const auto& w : tokens) {
                if (int(w.size()) != k)
                    throw ConfigError("build_threshold_map: weight vector length != k");
                ratios.push_back(calib_ratio(w, m));
            }
            beta[m - 1] = median_inplace(ratios);
        }
        map.layer_beta[layer] = std::move(beta);
        map.calib_tokens = (long long)tokens.size();
    }
    return map;
}

ExpertSelection decide_skip(const RoutedExperts& routed,
                            std::span<const double> beta, int m, SkipRules rules) {
    const int k = int(routed.weights.size());
    if (m < 0 || m >= k) throw ConfigError("decide_skip: m must lie in [0,k)");
    if (m > int(beta.size()))
        throw ConfigError("decide_skip: threshold map lacks requested skip levels");
    check_ascending(routed.weights);

    ExpertSelection sel;
    sel.routed = routed;
    sel.i_star = 0;
    for (int i = 1; i <= m; ++i) {
        const double r = rules.alt_numerator ? calib_ratio_alt(routed.weights, i)
                                             : calib_ratio(routed.weights, i);
        const double threshold = rules.literal_beta_m ? beta[m - 1] : beta[i - 1];
        if (r < threshold) sel.i_star = i;
    }
    return sel;
}

std::vector<float> sparse_moe_forward(std::span<const float> x,
                                      const ExpertSelection& sel,
                                      std::span<const FfnWeights> experts,
                                      float ffn_tau, bool renormalize,
                                      FlopCounter* counter,
                                      std::vector<FfnCallRecord>* ffn_records) {
    const int k = int(sel.routed.ids.size());
    if (sel.i_star < 0 || sel.i_star >= k)
        throw LogicError("sparse_moe_forward: selection would skip every expert");

    double kept_mass = 0.0;
    for (int j = sel.i_star; j < k; ++j) kept_mass += double(sel.routed.weights[j]);

    std::vector<double> acc(x.size(), 0.0);
    for (int j = sel.i_star; j < k; ++j) {
        const int e = sel.routed.ids[j];
        if (e < 0 || e >= int(experts.size()))
            throw LogicError("sparse_moe_forward: expert id out of range");
        FfnCallRecord rec;
        std::vector<float> out = sparse_ffn_forward(x, experts[e], ffn_tau, counter,
                                                    FlopCategory::moe_expert, &rec);
        if (ffn_records) ffn_records->push_back(rec);
        double wj = double(sel.routed.weights[j]);
        if (renormalize) wj /= kept_mass;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += wj * double(out[i]);
    }

    std::vector<float> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = float(acc[i]);
    return y;
}

} // namespace sv
