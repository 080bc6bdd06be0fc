#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace nearwave {

// Calendar dates at day resolution, stored as days since 1970-01-01.
// All latent times in the pipeline are differences of these.
using Day = std::int32_t;

// Parses strict ISO-8601 "YYYY-MM-DD". Throws Error on malformed or
// impossible dates (e.g. 2015-02-30).
Day parse_iso_date(std::string_view text);

std::string format_iso_date(Day day);

} // namespace nearwave
