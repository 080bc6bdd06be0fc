#include "nearwave/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <random>
#include <thread>

#include "nearwave/errors.hpp"

namespace nearwave::stats {

RehDistribution::RehDistribution(int window_days) : w_(window_days) {
    if (window_days < 2) throw Error("null distribution needs a window of at least 2 days");
}

double RehDistribution::pmf(int t) const {
    if (t < 1 || t > w_) return 0.0;
    return 2.0 * double(w_ - t) / double(denom());
}

std::int64_t RehDistribution::bin_mass_num(int a, int b) const {
    a = std::max(a, 1);
    b = std::min(b, w_);
    if (b < a) return 0;
    return std::int64_t(b - a + 1) * (2 * std::int64_t(w_) - a - b);
}

double RehDistribution::bin_mass(int a, int b) const {
    return double(bin_mass_num(a, b)) / double(denom());
}

PanelHistogram bin_panel(std::span<const pairs::LatentPair> pairs_in, int window_days,
                         int bin_days, std::size_t min_pairs) {
    if (window_days < 2) throw Error("panel window must span at least 2 days");
    if (bin_days < 1) throw Error("panel bin width must be positive");

    const RehDistribution reh(window_days);
    const int nbins = (window_days + bin_days - 1) / bin_days;

    PanelHistogram panel;
    panel.window_days = window_days;
    panel.bin_days = bin_days;
    panel.pair_count = pairs_in.size();
    panel.sufficiency = pairs::pair_sufficiency(pairs_in.size(), min_pairs);
    panel.bins.resize(std::size_t(nbins));
    for (int i = 0; i < nbins; ++i) {
        PanelBin& bin = panel.bins[std::size_t(i)];
        bin.first_day = i * bin_days + 1;
        bin.last_day = std::min((i + 1) * bin_days, window_days);
        bin.count = 0;
        bin.observed = 0.0;
        bin.expected = reh.bin_mass(bin.first_day, bin.last_day);
    }

    for (const pairs::LatentPair& p : pairs_in) {
        if (p.latent_days < 1 || p.latent_days >= window_days)
            throw Error("latent time " + std::to_string(p.latent_days) +
                        " outside a window of " + std::to_string(window_days) + " days");
        panel.bins[std::size_t((p.latent_days - 1) / bin_days)].count++;
    }
    if (!pairs_in.empty())
        for (PanelBin& bin : panel.bins)
            bin.observed = double(bin.count) / double(pairs_in.size());
    return panel;
}

EntropySeries kld(const PanelHistogram& panel, bool force) {
    if (panel.pair_count == 0) throw InsufficientDataError("empty panel: no pairs to score");
    if (!force && !panel.is_sufficient())
        throw InsufficientDataError("insufficient panel: " + std::to_string(panel.pair_count) +
                                    " pairs");
    EntropySeries series;
    series.terms.reserve(panel.bins.size());
    for (const PanelBin& bin : panel.bins) {
        double e = 0.0;
        if (bin.observed > 0.0) {
            if (bin.expected <= 0.0) throw Error("observed mass in a zero-probability bin");
            e = bin.observed * std::log(bin.observed / bin.expected);
        }
        series.terms.push_back(e);
        series.kld += e;
    }
    return series;
}

std::string to_string(Strength s) {
    switch (s) {
    case Strength::strong: return "strong";
    case Strength::intermediate: return "intermediate";
    case Strength::weak: return "weak";
    }
    return "weak";
}

Strength classify_correlation(double r) {
    const double a = std::fabs(r);
    if (a >= 0.66) return Strength::strong;
    if (a > 0.33) return Strength::intermediate;
    return Strength::weak;
}

std::string CorrelationResult::label() const {
    return to_string(strength) + (anti ? " anti-correlation" : " correlation");
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error("correlation series length mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw Error("correlation needs at least 2 points");

    bool x_flat = true, y_flat = true;
    for (std::size_t i = 1; i < n; ++i) {
        x_flat = x_flat && x[i] == x[0];
        y_flat = y_flat && y[i] == y[0];
    }
    if (x_flat || y_flat) return std::nullopt;

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationResult reaction_correlation(const PanelHistogram& panel_ab,
                                       const PanelHistogram& panel_ba, bool force) {
    if (panel_ab.window_days != panel_ba.window_days || panel_ab.bin_days != panel_ba.bin_days ||
        panel_ab.bins.size() != panel_ba.bins.size())
        throw Error("panel binning mismatch");

    const EntropySeries ea = kld(panel_ab, force);
    const EntropySeries eb = kld(panel_ba, force);

    CorrelationResult res;
    res.n_bins = ea.terms.size();
    const std::optional<double> r = pearson(ea.terms, eb.terms);
    if (!r) {
        res.degenerate = true;
        return res;
    }
    res.r = *r;
    res.strength = classify_correlation(*r);
    res.anti = *r < 0.0;
    return res;
}

namespace {

// Lentz evaluation of the continued fraction in the incomplete beta.
double beta_cont_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-12;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    throw Error("incomplete beta continued fraction did not converge");
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta needs positive shape parameters");
    if (std::isnan(x)) throw Error("incomplete beta argument is NaN");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cont_fraction(a, b, x) / a;
    return 1.0 - front * beta_cont_fraction(b, a, 1.0 - x) / b;
}

double student_t_p_two_sided(double t, double dof) {
    if (!(dof > 0.0)) throw Error("t distribution needs positive degrees of freedom");
    if (std::isnan(t)) throw Error("t statistic is NaN");
    if (std::isinf(t)) return 0.0;
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

double correlation_p_value(double r, std::size_t n) {
    if (n < 3) throw Error("p-value needs at least 3 points");
    const double r2 = r * r;
    if (r2 >= 1.0) return 0.0;
    const double dof = double(n - 2);
    const double t = r * std::sqrt(dof / (1.0 - r2));
    return student_t_p_two_sided(t, dof);
}

std::vector<ScanRow> kld_distance_scan(const catalog::ClassifiedCatalog& cat,
                                       const std::string& class_label,
                                       std::span<const double> distances_km,
                                       const ScanOptions& opt, const geo::EarthModel& earth) {
    if (opt.window_weeks < 1 || opt.bin_weeks < 1 || opt.samples < 1 ||
        opt.windows_per_sample < 1)
        throw Error("scan options must be positive");
    if (distances_km.empty()) throw Error("empty distance grid");
    if (!cat.has_class(class_label)) throw Error("unknown class label: " + class_label);

    const int era_weeks = int((cat.era_to - cat.era_from + 1) / 7);
    const int span_weeks =
        opt.span_weeks > 0 ? std::min(opt.span_weeks, era_weeks) : era_weeks;
    const int series_weeks = opt.window_weeks * opt.windows_per_sample;
    if (span_weeks < series_weeks)
        throw InsufficientDataError("era too short for the scan: need " +
                                    std::to_string(series_weeks) + " weeks, have " +
                                    std::to_string(span_weeks));

    const int max_offset = span_weeks - series_weeks;
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<int> pick(0, max_offset);
    std::vector<int> offsets(std::size_t(opt.samples));
    for (int& o : offsets) o = pick(rng);

    struct Cell {
        std::vector<double> klds;
        std::size_t pair_count = 0;
    };
    const std::size_t nd = distances_km.size();
    std::vector<Cell> cells(std::size_t(opt.samples) * nd);

    auto run_task = [&](std::size_t task) {
        const std::size_t si = task / nd, di = task % nd;
        pairs::WindowSpec ws;
        ws.start = cat.era_from + Day(offsets[si]) * 7;
        ws.window_weeks = opt.window_weeks;
        ws.window_count = opt.windows_per_sample;
        pairs::PairFilter filter;
        filter.source_class = class_label;
        filter.target_class = class_label;
        filter.band = pairs::DistanceBand::within(distances_km[di]);
        const std::vector<pairs::LatentPair> ps = pairs::enumerate_pairs(cat, ws, filter, {}, earth);

        Cell& cell = cells[task];
        cell.pair_count = ps.size();
        const int w_days = opt.window_weeks * 7;
        for (int w = 0; w < opt.windows_per_sample; ++w) {
            std::vector<pairs::LatentPair> sub;
            for (const pairs::LatentPair& p : ps)
                if (p.window == w) sub.push_back(p);
            if (sub.empty()) continue;
            const PanelHistogram panel = bin_panel(sub, w_days, opt.bin_weeks * 7, opt.min_pairs);
            cell.klds.push_back(kld(panel, true).kld);
        }
    };

    const std::size_t ntask = cells.size();
    const int threads = std::max(1, opt.threads);
    if (threads == 1 || ntask < 2) {
        for (std::size_t t = 0; t < ntask; ++t) run_task(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr first_error;
        std::mutex err_mtx;
        auto worker = [&] {
            for (;;) {
                const std::size_t t = next.fetch_add(1);
                if (t >= ntask) return;
                try {
                    run_task(t);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mtx);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        const int nworker = std::min<std::size_t>(std::size_t(threads), ntask);
        for (int i = 0; i < nworker; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::vector<ScanRow> rows(nd);
    for (std::size_t di = 0; di < nd; ++di) {
        ScanRow& row = rows[di];
        row.distance_km = distances_km[di];
        std::vector<double> vals;
        for (int si = 0; si < opt.samples; ++si) {
            const Cell& cell = cells[std::size_t(si) * nd + di];
            row.pair_total += cell.pair_count;
            vals.insert(vals.end(), cell.klds.begin(), cell.klds.end());
        }
        row.windows_used = vals.size();
        if (vals.empty()) continue;
        double sum = 0.0;
        for (double v : vals) sum += v;
        row.mean_kld = sum / double(vals.size());
        if (vals.size() > 1) {
            double ss = 0.0;
            for (double v : vals) {
                const double d = v - row.mean_kld;
                ss += d * d;
            }
            row.std_kld = std::sqrt(ss / double(vals.size() - 1));
        }
    }
    return rows;
}

WaveFit wave_regression(std::span<const WavePoint> points) {
    if (points.size() < 3)
        throw InsufficientDataError("wave regression needs at least 3 points, have " +
                                    std::to_string(points.size()));
    const std::size_t n = points.size();

    bool x_flat = true, y_flat = true;
    for (std::size_t i = 1; i < n; ++i) {
        x_flat = x_flat && points[i].years == points[0].years;
        y_flat = y_flat && points[i].distance_km == points[0].distance_km;
    }
    if (x_flat) throw Error("wave regression needs time variance across first attacks");

    double mx = 0.0, my = 0.0;
    for (const WavePoint& p : points) {
        mx += p.years;
        my += p.distance_km;
    }
    mx /= double(n);
    my /= double(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (const WavePoint& p : points) {
        const double dx = p.years - mx, dy = p.distance_km - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }

    WaveFit fit;
    fit.n = n;
    fit.slope_km_per_year = sxy / sxx;
    fit.intercept_km = my - fit.slope_km_per_year * mx;
    if (y_flat || syy <= 0.0) {
        fit.r = 0.0;
        fit.p_value = 1.0;
        return fit;
    }
    fit.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    fit.p_value = correlation_p_value(fit.r, n);
    return fit;
}

} // namespace nearwave::stats
