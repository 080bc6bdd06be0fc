#include "nearwave/dates.hpp"

#include <charconv>
#include <chrono>

#include "nearwave/errors.hpp"

namespace nearwave {

namespace {

int parse_int_field(std::string_view text, std::size_t pos, std::size_t len) {
    if (pos + len > text.size()) throw Error("date too short: '" + std::string(text) + "'");
    int value = 0;
    const char* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len)
        throw Error("malformed date: '" + std::string(text) + "'");
    return value;
}

} // namespace

Day parse_iso_date(std::string_view text) {
    // Trim surrounding whitespace; spreadsheet exports often pad fields.
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);

    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        throw Error("malformed date (want YYYY-MM-DD): '" + std::string(text) + "'");

    const int y = parse_int_field(text, 0, 4);
    const int m = parse_int_field(text, 5, 2);
    const int d = parse_int_field(text, 8, 2);

    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{unsigned(m)},
                                          std::chrono::day{unsigned(d)}};
    if (!ymd.ok()) throw Error("impossible calendar date: '" + std::string(text) + "'");
    return static_cast<Day>(std::chrono::sys_days{ymd}.time_since_epoch().count());
}

std::string format_iso_date(Day day) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

} // namespace nearwave
