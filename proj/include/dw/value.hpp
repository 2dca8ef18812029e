#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace dw {

/// Exact decimal number: `mantissa * 10^-scale`, kept normalized (no trailing zero digits
/// in the fraction, scale >= 0). Addition, subtraction and multiplication are exact;
/// division rounds half-to-even at `kDivisionScale` fractional digits.
class Decimal {
public:
    using Int = boost::multiprecision::cpp_int;

    static constexpr int kDivisionScale = 18;

    Decimal() = default;
    Decimal(Int mantissa, int scale);
    explicit Decimal(std::int64_t value) : mantissa_(value) {}

    /// Accepts `[-]digits[.digits][e[-]digits]`. Returns nullopt on anything else.
    static std::optional<Decimal> parse(std::string_view text);

    const Int& mantissa() const noexcept { return mantissa_; }
    int scale() const noexcept { return scale_; }
    bool is_zero() const { return mantissa_.is_zero(); }
    bool is_integer() const noexcept { return scale_ == 0; }
    std::optional<std::int64_t> to_int64() const;

    /// Canonical text: no exponent, no trailing fractional zeros, "-" only when negative.
    std::string to_string() const;

    friend Decimal operator+(const Decimal& a, const Decimal& b);
    friend Decimal operator-(const Decimal& a, const Decimal& b);
    friend Decimal operator*(const Decimal& a, const Decimal& b);
    Decimal operator-() const { return Decimal(-mantissa_, scale_); }

    /// Throws Error(DivisionByZero) when `divisor` is zero.
    static Decimal divide(const Decimal& dividend, const Decimal& divisor);

    friend bool operator==(const Decimal& a, const Decimal& b) = default;
    friend std::strong_ordering operator<=>(const Decimal& a, const Decimal& b);

private:
    void normalize();

    Int mantissa_ = 0;
    int scale_ = 0;
};

/// Civil calendar date, stored as days since 1970-01-01.
struct Date {
    std::int32_t days = 0;

    static Date from_ymd(int year, unsigned month, unsigned day);
    /// Strict `YYYY-MM-DD`.
    static std::optional<Date> parse(std::string_view text);

    int year() const;
    unsigned month() const;
    unsigned day() const;
    /// 0 = Sunday ... 6 = Saturday.
    unsigned weekday() const;
    std::string to_string() const;

    friend auto operator<=>(const Date&, const Date&) = default;
};

/// Extraction instant at minute resolution, minutes since 1970-01-01T00:00.
struct Timestamp {
    std::int64_t minutes = 0;

    static Timestamp from_date(Date d) { return Timestamp{std::int64_t{d.days} * 1440}; }
    /// `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM` or `YYYY-MM-DDTHH:MM:SS` (seconds must be 00).
    static std::optional<Timestamp> parse(std::string_view text);

    Date date() const;
    /// Date only when the instant falls on midnight, otherwise `YYYY-MM-DDTHH:MM`.
    std::string to_string() const;

    friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

struct Value;

/// Named components in declaration order.
struct TupleValue {
    std::vector<std::string> names;
    std::vector<Value> values;

    friend bool operator==(const TupleValue& a, const TupleValue& b);
};

using ListValue = std::vector<Value>;

/// A dynamically typed attribute value. `std::monostate` is the absent value.
struct Value {
    using Storage =
        std::variant<std::monostate, bool, std::int64_t, Decimal, std::string, Date, TupleValue, ListValue>;

    Storage data;

    Value() = default;
    Value(bool b) : data(b) {}
    Value(std::int64_t i) : data(i) {}
    Value(int i) : data(std::int64_t{i}) {}
    Value(Decimal d) : data(std::move(d)) {}
    Value(std::string s) : data(std::move(s)) {}
    Value(const char* s) : data(std::string(s)) {}
    Value(Date d) : data(d) {}
    Value(TupleValue t) : data(std::move(t)) {}
    Value(ListValue l) : data(std::move(l)) {}

    bool is_null() const noexcept { return std::holds_alternative<std::monostate>(data); }
    bool is_numeric() const noexcept
    {
        return std::holds_alternative<std::int64_t>(data) || std::holds_alternative<Decimal>(data);
    }
    template <typename T>
    bool is() const noexcept
    {
        return std::holds_alternative<T>(data);
    }
    template <typename T>
    const T& as() const
    {
        return std::get<T>(data);
    }

    /// Numeric value as a decimal; precondition is_numeric().
    Decimal to_decimal() const;

    /// Human-readable rendering used in diagnostics and formula literals.
    std::string to_display() const;

    friend bool operator==(const Value& a, const Value& b) = default;
};

/// Total order over values (by alternative, then by content). Used for deterministic
/// containers; not the comparison semantics of the expression engine.
bool value_less(const Value& a, const Value& b);

struct ValueLess {
    bool operator()(const Value& a, const Value& b) const { return value_less(a, b); }
};

} // namespace dw
