#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nearwave/catalog.hpp"
#include "nearwave/geo.hpp"
#include "nearwave/pairs.hpp"

namespace nearwave::stats {

// Null distribution over the latent time t (in days) between a random pair of
// events falling inside one observation window of `window_days` days:
//   P(t) = 2(w - t) / (w(w - 1)),  t in [1, w].
// Nonincreasing, P(w) = 0, and the total mass telescopes to exactly 1.
class RehDistribution {
public:
    explicit RehDistribution(int window_days);

    int window_days() const { return w_; }
    double pmf(int t) const;

    // Mass over latent days [a, b] (inclusive, clipped to [1, w]) as an exact
    // rational: numerator (b - a + 1)(2w - a - b), shared denominator w(w - 1).
    std::int64_t bin_mass_num(int a, int b) const;
    std::int64_t denom() const { return std::int64_t(w_) * (w_ - 1); }
    double bin_mass(int a, int b) const;

private:
    int w_;
};

struct PanelBin {
    int first_day; // inclusive latent-day span of the bin
    int last_day;
    std::size_t count;
    double observed; // empirical bin probability p-hat
    double expected; // null bin probability from RehDistribution
};

// Latent-time histogram for one (source class, target class, band) panel.
// Bin i covers days [(i-1)*bin_days + 1, i*bin_days]; the trailing bin is
// truncated at window_days so the expected masses still sum to 1.
struct PanelHistogram {
    int window_days = 0;
    int bin_days = 0;
    std::size_t pair_count = 0;
    pairs::Sufficiency sufficiency = pairs::Sufficiency::insufficient;
    std::vector<PanelBin> bins;

    bool is_sufficient() const { return sufficiency == pairs::Sufficiency::sufficient; }
};

// Bins pair latent times and attaches the null masses. Pairs must satisfy
// 1 <= latent_days < window_days. Zero pairs yields a flagged empty histogram
// (all observed probabilities zero) that downstream ops reject.
PanelHistogram bin_panel(std::span<const pairs::LatentPair> pairs_in, int window_days,
                         int bin_days, std::size_t min_pairs = pairs::default_min_pairs);

// Per-bin divergence contributions E_i = p-hat_i ln(p-hat_i / p_i) with the
// 0 ln 0 = 0 convention, plus their sum.
struct EntropySeries {
    double kld = 0.0;
    std::vector<double> terms;
};

// Throws InsufficientDataError for an insufficient panel unless `force`;
// a zero-pair panel is rejected even when forced.
EntropySeries kld(const PanelHistogram& panel, bool force = false);

enum class Strength { strong, intermediate, weak };

std::string to_string(Strength s);

// |r| >= 0.66 strong; 0.33 < |r| < 0.66 intermediate; |r| <= 0.33 weak.
Strength classify_correlation(double r);

struct CorrelationResult {
    std::optional<double> r; // empty when either series has zero variance
    Strength strength = Strength::weak;
    bool anti = false;       // negative r
    bool degenerate = false; // zero-variance input, classified weak
    std::size_t n_bins = 0;

    std::string label() const; // e.g. "strong anti-correlation"
};

// Pearson r of two equal-length series; empty when either side has zero
// variance. Throws on length mismatch or n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// Correlates the per-bin divergence series of an A->B panel against the
// matching B->A panel. Panels must share window_days, bin_days, and bin count.
CorrelationResult reaction_correlation(const PanelHistogram& panel_ab,
                                       const PanelHistogram& panel_ba, bool force = false);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation,
// relative tolerance 1e-10.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of the t statistic with `dof` degrees of freedom.
double student_t_p_two_sided(double t, double dof);

// Two-sided p-value for a Pearson r over n points (t with n - 2 dof).
double correlation_p_value(double r, std::size_t n);

struct ScanOptions {
    int window_weeks = 44;
    int bin_weeks = 2;
    int span_weeks = 0; // 0: use the whole catalog era
    int samples = 10;
    int windows_per_sample = 4;
    std::uint64_t seed = 1;
    std::size_t min_pairs = pairs::default_min_pairs;
    int threads = 1;
};

struct ScanRow {
    double distance_km = 0.0;
    double mean_kld = 0.0;
    double std_kld = 0.0;        // sample std over per-window values, 0 when n < 2
    std::size_t windows_used = 0; // (sample, window) cells with at least one pair
    std::size_t pair_total = 0;
};

// KLD-versus-distance profile for one class: draws `samples` start offsets
// (whole weeks, uniform with replacement, seeded), lays `windows_per_sample`
// consecutive windows per sample, and reports mean and sample std of the
// forced per-window KLD at each distance ceiling. Offsets are shared across
// the distance grid; windows with zero pairs are skipped.
std::vector<ScanRow> kld_distance_scan(const catalog::ClassifiedCatalog& cat,
                                       const std::string& class_label,
                                       std::span<const double> distances_km,
                                       const ScanOptions& opt, const geo::EarthModel& earth = {});

struct WavePoint {
    double years = 0.0; // time of first attack, in years from an arbitrary origin
    double distance_km = 0.0;
};

struct WaveFit {
    double slope_km_per_year = 0.0;
    double intercept_km = 0.0;
    double r = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

// Ordinary least squares of distance on time plus the Pearson r and its
// two-sided p-value. Needs at least 3 points and nonzero time variance.
WaveFit wave_regression(std::span<const WavePoint> points);

} // namespace nearwave::stats
