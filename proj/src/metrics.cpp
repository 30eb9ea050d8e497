#include "zeval/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "zeval/error.hpp"
#include "zeval/rewards.hpp"

namespace zeval {

Score Score::from_counts(const ClaimCounts& counts) { return {response_score(counts), counts}; }

int compare_scores(const Score& a, const Score& b) {
    if (a.ratio && b.ratio) {
        // 0-claim responses score 0, i.e. 0/1.
        const auto den_a = a.ratio->total == 0 ? std::uint64_t{1} : std::uint64_t{a.ratio->total};
        const auto den_b = b.ratio->total == 0 ? std::uint64_t{1} : std::uint64_t{b.ratio->total};
        const auto num_a = a.ratio->total == 0 ? std::uint64_t{0} : std::uint64_t{a.ratio->supported};
        const auto num_b = b.ratio->total == 0 ? std::uint64_t{0} : std::uint64_t{b.ratio->supported};
        const auto lhs = num_a * den_b;
        const auto rhs = num_b * den_a;
        return lhs < rhs ? -1 : (lhs > rhs ? 1 : 0);
    }
    return a.value < b.value ? -1 : (a.value > b.value ? 1 : 0);
}

FaithfulnessAgreement faithfulness_agreement(std::span<const FaithfulnessRecord> records) {
    if (records.empty()) throw ContractError("faithfulness_agreement: no records");
    std::size_t wins = 0;
    std::size_t ties = 0;
    for (const auto& r : records) {
        const int c = compare_scores(r.good, r.poor);
        if (c > 0) ++wins;
        if (c == 0) ++ties;
    }
    const double n = static_cast<double>(records.size());
    FaithfulnessAgreement out;
    out.n = records.size();
    out.best = static_cast<double>(wins + ties) / n;
    out.worst = static_cast<double>(wins) / n;
    out.middle = (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / n;
    return out;
}

int label_to_h(std::string_view label) {
    std::string norm;
    for (char ch : label) {
        if (ch == '_' || ch == '-') ch = ' ';
        norm += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    static const std::array<std::pair<std::string_view, int>, 5> table{{{"significantly worse", -2},
                                                                        {"slightly worse", -1},
                                                                        {"tie", 0},
                                                                        {"slightly better", 1},
                                                                        {"significantly better", 2}}};
    for (const auto& [name, h] : table) {
        if (norm == name) return h;
    }
    throw ContractError("unknown preference label '" + std::string(label) + "'");
}

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ContractError("correlation inputs differ in length");
    if (x.size() < 2) throw ContractError("correlation needs at least two observations");
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw ContractError("pearson: constant input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
        const double mean_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

namespace {

// Pairs tied within each run of equal keys in an already sorted sequence.
template <typename Eq>
std::uint64_t tied_pairs(std::size_t n, Eq equal_to_previous) {
    std::uint64_t total = 0;
    std::uint64_t run = 1;
    for (std::size_t i = 1; i < n; ++i) {
        if (equal_to_previous(i)) {
            ++run;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    return total + run * (run - 1) / 2;
}

// Counts inversions of v while merge-sorting it.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
    std::size_t i = lo;
    std::size_t j = mid;
    std::size_t k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += mid - i;
            buf[k++] = v[j++];
        } else {
            buf[k++] = v[i++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

}  // namespace

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y);
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });

    const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
    const std::uint64_t ties_x = tied_pairs(n, [&](std::size_t i) { return x[idx[i]] == x[idx[i - 1]]; });
    const std::uint64_t ties_xy = tied_pairs(
        n, [&](std::size_t i) { return x[idx[i]] == x[idx[i - 1]] && y[idx[i]] == y[idx[i - 1]]; });

    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[idx[i]];
    std::vector<double> buf(n);
    const std::uint64_t discordant = merge_count(ys, buf, 0, n);
    const std::uint64_t ties_y = tied_pairs(n, [&](std::size_t i) { return ys[i] == ys[i - 1]; });

    const auto concordant_minus_discordant = static_cast<double>(n0) - static_cast<double>(ties_x) -
                                             static_cast<double>(ties_y) + static_cast<double>(ties_xy) -
                                             2.0 * static_cast<double>(discordant);
    const double denom = std::sqrt(static_cast<double>(n0 - ties_x) * static_cast<double>(n0 - ties_y));
    if (denom == 0.0) throw ContractError("kendall: constant input");
    return std::clamp(concordant_minus_discordant / denom, -1.0, 1.0);
}

Correlations correctness_correlations(std::span<const CorrectnessRecord> records) {
    if (records.size() < 3) throw ContractError("correctness correlations need at least 3 records");
    std::vector<double> h;
    std::vector<double> e;
    h.reserve(records.size());
    e.reserve(records.size());
    for (const auto& r : records) {
        h.push_back(static_cast<double>(r.h));
        e.push_back(r.e_raw);
    }
    if (std::adjacent_find(h.begin(), h.end(), std::not_equal_to<>()) == h.end()) {
        throw ContractError("correctness correlations undefined: every human label h is the same");
    }
    if (std::adjacent_find(e.begin(), e.end(), std::not_equal_to<>()) == e.end()) {
        throw ContractError("correctness correlations undefined: every evaluator difference e is the same");
    }
    return {pearson(h, e), spearman(h, e), kendall_tau_b(h, e)};
}

double significance_test(std::span<const double> a, std::span<const double> b, std::size_t iterations,
                         std::uint64_t seed) {
    if (a.size() != b.size()) throw ContractError("significance_test: score lists differ in length");
    if (a.size() < 2) throw ContractError("significance_test: need at least two pairs");
    if (iterations == 0) throw ContractError("significance_test: iterations must be positive");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const double observed = std::abs(std::accumulate(diff.begin(), diff.end(), 0.0));
    // Sums are compared rather than means; the tolerance absorbs summation-order noise.
    const double tolerance = 1e-12 * std::max(1.0, observed);

    std::mt19937_64 rng(seed);
    std::size_t at_least = 0;
    for (std::size_t it = 0; it < iterations; ++it) {
        double sum = 0.0;
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < diff.size(); ++i) {
            if (i % 64 == 0) bits = rng();
            sum += (bits & 1U) ? diff[i] : -diff[i];
            bits >>= 1U;
        }
        if (std::abs(sum) >= observed - tolerance) ++at_least;
    }
    return static_cast<double>(at_least + 1) / static_cast<double>(iterations + 1);
}

nlohmann::json to_json(const FaithfulnessAgreement& agreement) {
    return {{"best", agreement.best}, {"middle", agreement.middle}, {"worst", agreement.worst}, {"n", agreement.n}};
}

nlohmann::json to_json(const Correlations& correlations) {
    return {{"pearson", correlations.pearson}, {"spearman", correlations.spearman}, {"kendall", correlations.kendall}};
}

}  // namespace zeval
