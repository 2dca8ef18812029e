#include "dw/value.hpp"

#include "dw/error.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

namespace dw {

namespace {

Decimal::Int pow10(int exponent)
{
    Decimal::Int result = 1;
    for (int i = 0; i < exponent; ++i)
        result *= 10;
    return result;
}

bool all_digits(std::string_view s)
{
    if (s.empty())
        return false;
    for (char c : s)
        if (c < '0' || c > '9')
            return false;
    return true;
}

template <typename T>
std::optional<T> parse_number(std::string_view s)
{
    T out{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        return std::nullopt;
    return out;
}

} // namespace

Decimal::Decimal(Int mantissa, int scale) : mantissa_(std::move(mantissa)), scale_(scale)
{
    if (scale_ < 0) {
        mantissa_ *= pow10(-scale_);
        scale_ = 0;
    }
    normalize();
}

void Decimal::normalize()
{
    if (mantissa_.is_zero()) {
        scale_ = 0;
        return;
    }
    while (scale_ > 0 && mantissa_ % 10 == 0) {
        mantissa_ /= 10;
        --scale_;
    }
}

std::optional<Decimal> Decimal::parse(std::string_view text)
{
    bool negative = false;
    if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    int exponent = 0;
    if (auto e = text.find_first_of("eE"); e != std::string_view::npos) {
        auto exp_text = text.substr(e + 1);
        if (!exp_text.empty() && exp_text.front() == '+')
            exp_text.remove_prefix(1);
        auto parsed = parse_number<int>(exp_text);
        if (!parsed || *parsed > 1000 || *parsed < -1000)
            return std::nullopt;
        exponent = *parsed;
        text = text.substr(0, e);
    }
    std::string_view whole = text;
    std::string_view fraction;
    if (auto dot = text.find('.'); dot != std::string_view::npos) {
        whole = text.substr(0, dot);
        fraction = text.substr(dot + 1);
        if (!all_digits(fraction))
            return std::nullopt;
    }
    if (!all_digits(whole))
        return std::nullopt;
    if (whole.empty() && fraction.empty())
        return std::nullopt;
    // cpp_int reads a leading 0 as an octal prefix.
    std::string digits = std::string(whole) + std::string(fraction);
    digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
    Int mantissa(digits);
    if (negative)
        mantissa = -mantissa;
    return Decimal(std::move(mantissa), static_cast<int>(fraction.size()) - exponent);
}

std::optional<std::int64_t> Decimal::to_int64() const
{
    if (scale_ != 0)
        return std::nullopt;
    if (mantissa_ > std::numeric_limits<std::int64_t>::max() || mantissa_ < std::numeric_limits<std::int64_t>::min())
        return std::nullopt;
    return mantissa_.convert_to<std::int64_t>();
}

std::string Decimal::to_string() const
{
    bool negative = mantissa_.sign() < 0;
    std::string digits = (negative ? Int(-mantissa_) : mantissa_).str();
    if (scale_ > 0) {
        if (static_cast<int>(digits.size()) <= scale_)
            digits.insert(0, static_cast<std::size_t>(scale_) - digits.size() + 1, '0');
        digits.insert(digits.size() - static_cast<std::size_t>(scale_), 1, '.');
    }
    return negative ? "-" + digits : digits;
}

Decimal operator+(const Decimal& a, const Decimal& b)
{
    int scale = std::max(a.scale_, b.scale_);
    return Decimal(a.mantissa_ * pow10(scale - a.scale_) + b.mantissa_ * pow10(scale - b.scale_), scale);
}

Decimal operator-(const Decimal& a, const Decimal& b)
{
    return a + (-b);
}

Decimal operator*(const Decimal& a, const Decimal& b)
{
    return Decimal(a.mantissa_ * b.mantissa_, a.scale_ + b.scale_);
}

Decimal Decimal::divide(const Decimal& dividend, const Decimal& divisor)
{
    if (divisor.is_zero())
        throw Error(ErrorKind::DivisionByZero, "division by zero");
    // dividend / divisor = (a * 10^bs) / (b * 10^as); scale the numerator by 10^kDivisionScale.
    Int numerator = dividend.mantissa_ * pow10(divisor.scale_ + kDivisionScale);
    Int denominator = divisor.mantissa_ * pow10(dividend.scale_);
    if (denominator.sign() < 0) {
        numerator = -numerator;
        denominator = -denominator;
    }
    Int quotient = numerator / denominator;
    Int remainder = numerator % denominator;
    if (!remainder.is_zero()) {
        Int twice = abs(remainder) * 2;
        int direction = numerator.sign() < 0 ? -1 : 1;
        if (twice > denominator || (twice == denominator && quotient % 2 != 0))
            quotient += direction;
    }
    return Decimal(std::move(quotient), kDivisionScale);
}

std::strong_ordering operator<=>(const Decimal& a, const Decimal& b)
{
    int scale = std::max(a.scale_, b.scale_);
    Decimal::Int left = a.mantissa_ * pow10(scale - a.scale_);
    Decimal::Int right = b.mantissa_ * pow10(scale - b.scale_);
    if (left < right)
        return std::strong_ordering::less;
    if (left > right)
        return std::strong_ordering::greater;
    return std::strong_ordering::equal;
}

Date Date::from_ymd(int year, unsigned month, unsigned day)
{
    using namespace std::chrono;
    sys_days d{year_month_day{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}}};
    return Date{static_cast<std::int32_t>(d.time_since_epoch().count())};
}

std::optional<Date> Date::parse(std::string_view text)
{
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        return std::nullopt;
    auto y = parse_number<int>(text.substr(0, 4));
    auto m = parse_number<unsigned>(text.substr(5, 2));
    auto d = parse_number<unsigned>(text.substr(8, 2));
    if (!y || !m || !d || !all_digits(text.substr(0, 4)))
        return std::nullopt;
    std::chrono::year_month_day ymd{std::chrono::year{*y}, std::chrono::month{*m}, std::chrono::day{*d}};
    if (!ymd.ok())
        return std::nullopt;
    return from_ymd(*y, *m, *d);
}

namespace {

std::chrono::year_month_day to_ymd(Date d)
{
    return std::chrono::year_month_day{std::chrono::sys_days{std::chrono::days{d.days}}};
}

} // namespace

int Date::year() const
{
    return static_cast<int>(to_ymd(*this).year());
}

unsigned Date::month() const
{
    return static_cast<unsigned>(to_ymd(*this).month());
}

unsigned Date::day() const
{
    return static_cast<unsigned>(to_ymd(*this).day());
}

unsigned Date::weekday() const
{
    return std::chrono::weekday{std::chrono::sys_days{std::chrono::days{days}}}.c_encoding();
}

std::string Date::to_string() const
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
}

std::optional<Timestamp> Timestamp::parse(std::string_view text)
{
    auto date = Date::parse(text.substr(0, std::min<std::size_t>(10, text.size())));
    if (!date)
        return std::nullopt;
    if (text.size() == 10)
        return from_date(*date);
    if ((text.size() != 16 && text.size() != 19) || (text[10] != 'T' && text[10] != ' ') || text[13] != ':')
        return std::nullopt;
    auto hour = parse_number<int>(text.substr(11, 2));
    auto minute = parse_number<int>(text.substr(14, 2));
    if (!hour || !minute || *hour > 23 || *minute > 59)
        return std::nullopt;
    if (text.size() == 19 && (text[16] != ':' || text.substr(17, 2) != "00"))
        return std::nullopt;
    return Timestamp{from_date(*date).minutes + *hour * 60 + *minute};
}

Date Timestamp::date() const
{
    auto days = minutes >= 0 ? minutes / 1440 : -((-minutes + 1439) / 1440);
    return Date{static_cast<std::int32_t>(days)};
}

std::string Timestamp::to_string() const
{
    Date d = date();
    auto rest = minutes - std::int64_t{d.days} * 1440;
    if (rest == 0)
        return d.to_string();
    char buf[8];
    std::snprintf(buf, sizeof buf, "T%02d:%02d", static_cast<int>(rest / 60), static_cast<int>(rest % 60));
    return d.to_string() + buf;
}

bool operator==(const TupleValue& a, const TupleValue& b)
{
    return a.names == b.names && a.values == b.values;
}

Decimal Value::to_decimal() const
{
    if (auto* i = std::get_if<std::int64_t>(&data))
        return Decimal(*i);
    return std::get<Decimal>(data);
}

std::string Value::to_display() const
{
    struct Visitor {
        std::string operator()(std::monostate) const { return "null"; }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(const Decimal& d) const { return d.to_string(); }
        std::string operator()(const std::string& s) const { return "'" + s + "'"; }
        std::string operator()(Date d) const { return d.to_string(); }
        std::string operator()(const TupleValue& t) const
        {
            std::string out = "(";
            for (std::size_t i = 0; i < t.values.size(); ++i) {
                if (i)
                    out += ", ";
                out += t.names[i] + ": " + t.values[i].to_display();
            }
            return out + ")";
        }
        std::string operator()(const ListValue& l) const
        {
            std::string out = "[";
            for (std::size_t i = 0; i < l.size(); ++i) {
                if (i)
                    out += ", ";
                out += l[i].to_display();
            }
            return out + "]";
        }
    };
    return std::visit(Visitor{}, data);
}

bool value_less(const Value& a, const Value& b)
{
    if (a.data.index() != b.data.index())
        return a.data.index() < b.data.index();
    struct Visitor {
        const Value& rhs;
        bool operator()(std::monostate) const { return false; }
        bool operator()(bool x) const { return x < rhs.as<bool>(); }
        bool operator()(std::int64_t x) const { return x < rhs.as<std::int64_t>(); }
        bool operator()(const Decimal& x) const { return x < rhs.as<Decimal>(); }
        bool operator()(const std::string& x) const { return x < rhs.as<std::string>(); }
        bool operator()(Date x) const { return x < rhs.as<Date>(); }
        bool operator()(const TupleValue& x) const
        {
            const auto& y = rhs.as<TupleValue>();
            if (x.names != y.names)
                return x.names < y.names;
            return std::lexicographical_compare(x.values.begin(), x.values.end(), y.values.begin(), y.values.end(),
                                                value_less);
        }
        bool operator()(const ListValue& x) const
        {
            const auto& y = rhs.as<ListValue>();
            return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end(), value_less);
        }
    };
    return std::visit(Visitor{b}, a.data);
}

} // namespace dw
