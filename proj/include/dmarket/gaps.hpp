#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmarket/csv.hpp"
#include "dmarket/error.hpp"
#include "dmarket/graph.hpp"
#include "dmarket/market_data.hpp"
#include "dmarket/stats.hpp"

namespace dmarket {

// Receiver rank minus sender rank.
inline double desirability_gap(double sender_rank, double receiver_rank) {
    auto ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!ok(sender_rank) || !ok(receiver_rank)) throw InputError("scaled ranks must lie in [0, 1]");
    return receiver_rank - sender_rank;
}

struct GapRecord {
    std::string sender_id;
    std::string receiver_id;
    Sex sender_sex = Sex::male;
    double sender_rank = 0;
    double receiver_rank = 0;
    double gap = 0;
    bool replied = false;
    int word_count = 0;
    double positive_fraction = 0;
};

// One record per initiating first contact whose endpoints were both ranked.
inline std::vector<GapRecord> make_gap_records(const MarketDataset& ds, const DesirabilityTable& t) {
    auto idx = t.index();
    std::vector<GapRecord> out;
    for (const auto& fc : ds.first_contacts) {
        if (!fc.initiation) continue;
        auto s = idx.find(fc.message.sender_id);
        auto r = idx.find(fc.message.receiver_id);
        if (s == idx.end() || r == idx.end()) continue;
        GapRecord g;
        g.sender_id = fc.message.sender_id;
        g.receiver_id = fc.message.receiver_id;
        g.sender_sex = t.sex.at(s->second);
        g.sender_rank = t.scaled_rank.at(s->second);
        g.receiver_rank = t.scaled_rank.at(r->second);
        g.gap = desirability_gap(g.sender_rank, g.receiver_rank);
        g.replied = fc.replied;
        g.word_count = fc.message.word_count.value_or(0);
        const int pos = fc.message.positive_word_count.value_or(0);
        g.positive_fraction = static_cast<double>(pos) / std::max(g.word_count, 1);
        out.push_back(std::move(g));
    }
    return out;
}

struct UserGapProfile {
    std::string user_id;
    double median_gap = 0;
    double mean_gap = 0;
    double iqr_gap = 0;
    std::size_t n_contacted = 0;
};

// Per-sender summaries, in order of each sender's first record.
inline std::vector<UserGapProfile> user_gap_profiles(const std::vector<GapRecord>& gaps) {
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> values;
    for (const auto& g : gaps) {
        auto [it, fresh] = slot.emplace(g.sender_id, ids.size());
        if (fresh) {
            ids.push_back(g.sender_id);
            values.emplace_back();
        }
        values[it->second].push_back(g.gap);
    }
    std::vector<UserGapProfile> out(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        auto& v = values[k];
        std::sort(v.begin(), v.end());
        out[k].user_id = ids[k];
        out[k].median_gap = stats::percentile_sorted(v, 0.5);
        out[k].mean_gap = stats::mean(v);
        out[k].iqr_gap = stats::iqr_sorted(v);
        out[k].n_contacted = v.size();
    }
    return out;
}

struct BinnedCurve {
    std::vector<double> bin_centers;
    std::vector<double> values;
    std::vector<std::size_t> counts;
    std::vector<double> standard_errors;
    std::size_t omitted = 0; // observations in bins dropped for low counts

    std::size_t size() const { return bin_centers.size(); }
};

inline csv::Writer curve_csv(const BinnedCurve& c) {
    csv::Writer w({"bin_center", "value", "count", "standard_error"});
    for (std::size_t i = 0; i < c.size(); ++i)
        w.add(c.bin_centers[i], c.values[i], c.counts[i], c.standard_errors[i]);
    return w;
}

inline csv::Writer profiles_csv(const std::vector<UserGapProfile>& profiles) {
    csv::Writer w({"user_id", "median_gap", "mean_gap", "iqr_gap", "n_contacted"});
    for (const auto& p : profiles) w.add(p.user_id, p.median_gap, p.mean_gap, p.iqr_gap, p.n_contacted);
    return w;
}

struct BinningOptions {
    int n_bins = 20;
    std::size_t min_count = 50;
};

namespace detail {

// Equal-width bins over [min(x), max(x)]; the top edge belongs to the last bin.
struct Bins {
    double lo = 0, width = 0;
    int n = 1;
    std::vector<int> of; // bin of each observation

    double center(int b) const { return width == 0 ? lo : lo + (b + 0.5) * width; }
};

inline Bins assign_bins(const std::vector<double>& x, int n_bins) {
    if (n_bins < 1) throw InputError("number of bins must be positive");
    Bins b;
    b.n = n_bins;
    b.of.resize(x.size());
    if (x.empty()) return b;
    auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    b.lo = *mn;
    b.width = (*mx - *mn) / n_bins;
    for (std::size_t i = 0; i < x.size(); ++i) {
        int k = b.width == 0 ? 0 : static_cast<int>(std::floor((x[i] - b.lo) / b.width));
        b.of[i] = std::clamp(k, 0, n_bins - 1);
    }
    return b;
}

// Per-bin mean and standard error of `y`; `binomial` switches the error to
// sqrt(p(1-p)/n).
inline BinnedCurve bin_means(const std::vector<double>& x, const std::vector<double>& y,
                             const BinningOptions& opt, bool binomial) {
    auto bins = assign_bins(x, opt.n_bins);
    std::vector<std::vector<double>> members(static_cast<std::size_t>(bins.n));
    for (std::size_t i = 0; i < x.size(); ++i) members[bins.of[i]].push_back(y[i]);
    BinnedCurve c;
    for (int b = 0; b < bins.n; ++b) {
        const auto& m = members[b];
        if (m.empty()) continue;
        if (m.size() < opt.min_count) {
            c.omitted += m.size();
            continue;
        }
        const double mean = stats::mean(m);
        const double n = static_cast<double>(m.size());
        const double se = binomial ? std::sqrt(mean * (1.0 - mean) / n) : std::sqrt(stats::variance(m) / n);
        c.bin_centers.push_back(bins.center(b));
        c.values.push_back(mean);
        c.counts.push_back(m.size());
        c.standard_errors.push_back(se);
    }
    return c;
}

} // namespace detail

// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5), falling back to
// the sd when the IQR vanishes.
inline double silverman_bandwidth(std::vector<double> v) {
    if (v.size() < 2) throw InputError("bandwidth needs at least two values");
    std::sort(v.begin(), v.end());
    const double sd = std::sqrt(stats::variance(v));
    const double iqr = stats::iqr_sorted(v) / 1.34;
    double spread = std::min(sd, iqr);
    if (spread <= 0) spread = sd;
    return 0.9 * spread * std::pow(static_cast<double>(v.size()), -0.2);
}

struct DensityOptions {
    std::optional<double> bandwidth; // Silverman when empty
    int grid_points = 201;
};

// Gaussian kernel density on a uniform grid over [-1, 1]. Each kernel is
// renormalised to unit trapezoid mass on the grid, so mass near the support
// edges is reflected back inside rather than lost. The bandwidth never drops
// below one grid step.
inline BinnedCurve gap_density(const std::vector<double>& values, const DensityOptions& opt = {}) {
    if (values.size() < 2) throw InputError("density needs at least two values");
    if (opt.grid_points < 3) throw InputError("density grid needs at least three points");
    const int m = opt.grid_points;
    const double step = 2.0 / (m - 1);
    double h = opt.bandwidth ? *opt.bandwidth : silverman_bandwidth(values);
    if (!(h > 0)) {
        if (opt.bandwidth) throw InputError("bandwidth must be positive");
        h = step;
    }
    h = std::max(h, step);

    BinnedCurve c;
    c.bin_centers.resize(m);
    for (int k = 0; k < m; ++k) c.bin_centers[k] = -1.0 + k * step;
    c.values.assign(m, 0.0);
    c.counts.assign(m, 0);
    c.standard_errors.assign(m, 0.0);

    std::vector<double> kernel(m);
    const double inv_n = 1.0 / static_cast<double>(values.size());
    for (double v : values) {
        double mass = 0;
        for (int k = 0; k < m; ++k) {
            const double u = (c.bin_centers[k] - v) / h;
            kernel[k] = std::exp(-0.5 * u * u);
            mass += (k == 0 || k == m - 1) ? 0.5 * kernel[k] : kernel[k];
        }
        mass *= step;
        for (int k = 0; k < m; ++k) c.values[k] += kernel[k] * inv_n / mass;
        const int nearest = std::clamp(static_cast<int>(std::lround((v + 1.0) / step)), 0, m - 1);
        ++c.counts[nearest];
    }
    // pointwise standard error of a KDE: sqrt(f R(K) / (n h)), R(K) = 1/(2 sqrt(pi))
    const double rk = 0.5 / std::sqrt(std::numbers::pi);
    for (int k = 0; k < m; ++k)
        c.standard_errors[k] = std::sqrt(std::max(c.values[k], 0.0) * rk * inv_n / h);
    return c;
}

inline double trapezoid(const BinnedCurve& c) {
    double s = 0;
    for (std::size_t k = 1; k < c.size(); ++k)
        s += 0.5 * (c.values[k] + c.values[k - 1]) * (c.bin_centers[k] - c.bin_centers[k - 1]);
    return s;
}

inline BinnedCurve reply_rate_by_gap(const std::vector<GapRecord>& gaps, const BinningOptions& opt = {}) {
    std::vector<double> x, y;
    x.reserve(gaps.size());
    y.reserve(gaps.size());
    for (const auto& g : gaps) {
        x.push_back(g.gap);
        y.push_back(g.replied ? 1.0 : 0.0);
    }
    return detail::bin_means(x, y, opt, true);
}

inline BinnedCurve volume_by_gap(const std::vector<UserGapProfile>& profiles, const BinningOptions& opt = {}) {
    std::vector<double> x, y;
    for (const auto& p : profiles) {
        x.push_back(p.mean_gap);
        y.push_back(static_cast<double>(p.n_contacted));
    }
    return detail::bin_means(x, y, opt, false);
}

// IQR of contacted partners binned by mean gap. With `control_volume`, the
// IQR is first residualised on log(n_contacted) by least squares and the
// grand mean added back.
inline BinnedCurve iqr_by_gap(const std::vector<UserGapProfile>& profiles, const BinningOptions& opt = {},
                              bool control_volume = true) {
    std::vector<double> x, y, lv;
    for (const auto& p : profiles) {
        x.push_back(p.mean_gap);
        y.push_back(p.iqr_gap);
        lv.push_back(std::log(static_cast<double>(p.n_contacted)));
    }
    if (control_volume && !y.empty()) {
        const double my = stats::mean(y), ml = stats::mean(lv);
        double sll = 0, sly = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            sll += (lv[i] - ml) * (lv[i] - ml);
            sly += (lv[i] - ml) * (y[i] - my);
        }
        const double slope = sll > 0 ? sly / sll : 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] -= slope * (lv[i] - ml);
    }
    return detail::bin_means(x, y, opt, false);
}

// Pearson correlation between sender and receiver ranks over first contacts.
inline double sender_receiver_correlation(const std::vector<GapRecord>& gaps, const DesirabilityTable& t) {
    if (gaps.size() < 2) throw InputError("correlation needs at least two records");
    auto idx = t.index();
    std::vector<double> s, r;
    s.reserve(gaps.size());
    r.reserve(gaps.size());
    for (const auto& g : gaps) {
        s.push_back(t.scaled_rank.at(idx.at(g.sender_id)));
        r.push_back(t.scaled_rank.at(idx.at(g.receiver_id)));
    }
    return stats::pearson(s, r);
}

inline csv::Writer gaps_csv(const std::vector<GapRecord>& gaps) {
    csv::Writer w({"sender_id", "receiver_id", "sender_sex", "sender_rank", "receiver_rank", "gap", "replied",
                   "word_count", "positive_fraction"});
    for (const auto& g : gaps)
        w.add(g.sender_id, g.receiver_id, to_string(g.sender_sex), g.sender_rank, g.receiver_rank, g.gap,
              g.replied, g.word_count, g.positive_fraction);
    return w;
}

} // namespace dmarket
