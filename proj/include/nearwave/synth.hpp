#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nearwave/catalog.hpp"
#include "nearwave/dates.hpp"
#include "nearwave/geo.hpp"

namespace nearwave::synth {

// Closed date range, both ends inclusive.
struct DateSpan {
    Day from = 0;
    Day to = 0;
    long days() const { return long(to) - long(from) + 1; }
};

// Spherical cap: all points within radius_km of center.
struct CapRegion {
    geo::GeoPoint center{0.0, 0.0};
    double radius_km = 100.0;
};

// Homogeneous Poisson catalog: event count ~ Poisson(rate * span days),
// dates uniform over the span, locations uniform over the cap.
struct PoissonSpec {
    double rate = 1.0; // events/day
    CapRegion region;
    DateSpan span;
    std::string class_label = "A";
    std::string id_prefix = "P";
    std::optional<double> casualty_mean; // Poisson casualties when set
};

std::vector<catalog::Event> gen_poisson(const PoissonSpec& spec, std::uint64_t seed);

// Multi-class self-exciting catalog. Background events arrive Poisson(mu[c])
// per day; an event of class c spawns Poisson(alpha[c][c']) offspring of
// class c', each delayed by lag_days[c][c'] plus an exponential(tau_days)
// draw rounded up to at least one day, and displaced by an isotropic
// Gaussian(sigma_km) step on the sphere. Offspring past the span are
// truncated. The branching matrix must be subcritical.
struct ExcitationSpec {
    std::vector<std::string> class_labels;
    std::vector<double> mu;                    // background rate per class, events/day
    std::vector<std::vector<double>> alpha;    // expected offspring counts, source x target
    std::vector<std::vector<double>> tau_days; // exponential delay means
    std::vector<std::vector<double>> lag_days; // fixed delay floors; empty means all zero
    double sigma_km = 5.0;
    CapRegion region;
    DateSpan span;
    std::string id_prefix = "S";
    std::optional<double> casualty_mean;
};

std::vector<catalog::Event> gen_excited(const ExcitationSpec& spec, std::uint64_t seed);

// Largest-eigenvalue estimate of a nonnegative square matrix (power
// iteration); the subcriticality check for ExcitationSpec.
double branching_spectral_radius(const std::vector<std::vector<double>>& alpha);

} // namespace nearwave::synth
