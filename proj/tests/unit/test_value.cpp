#include "doctest.h"

#include "support/generators.hpp"
#include "support/oracles.hpp"

#include "dw/error.hpp"
#include "dw/schema_io.hpp"
#include "dw/value.hpp"

using namespace dwtest;
using dw::Decimal;

namespace {

Rational to_rational(const Decimal& d)
{
    return Rational(d.mantissa()) / Rational(boost::multiprecision::pow(Decimal::Int(10), d.scale()));
}

Decimal dec(const char* text)
{
    auto d = Decimal::parse(text);
    REQUIRE(d);
    return *d;
}

} // namespace

TEST_CASE("decimal parsing keeps every digit")
{
    CHECK(dec("0.65") == Decimal(65, 2));
    CHECK(dec("42.30") == Decimal(423, 1));
    CHECK(dec("007") == Decimal(7));
    CHECK(dec("-0.05") == Decimal(-5, 2));
    CHECK(dec("1.5e2") == Decimal(150));
    CHECK(dec("25e-3") == Decimal(25, 3));
    CHECK(dec("0") == Decimal(0));
    CHECK(dec("-0.0").to_string() == "0");
    for (const char* bad : {"", ".", "1.", ".5", "1,5", "abc", "1e", "--1", "0x10"})
        CHECK_MESSAGE(!Decimal::parse(bad), bad);
}

TEST_CASE("decimal text round-trips and arithmetic is exact")
{
    Rng rng(11);
    for (int i = 0; i < 2000; ++i) {
        auto a = random_decimal(rng).as<Decimal>();
        auto b = random_decimal(rng).as<Decimal>();
        CHECK(dec(a.to_string().c_str()) == a);
        CHECK(to_rational(a + b) == to_rational(a) + to_rational(b));
        CHECK(to_rational(a - b) == to_rational(a) - to_rational(b));
        CHECK(to_rational(a * b) == to_rational(a) * to_rational(b));
        CHECK(((a <=> b) < 0) == (to_rational(a) < to_rational(b)));
        if (!b.is_zero())
            CHECK(to_rational(Decimal::divide(a, b)) == round_half_even(to_rational(a) / to_rational(b), 18));
    }
}

TEST_CASE("decimal division rounds half to even")
{
    CHECK(Decimal::divide(Decimal(1), Decimal(3)).to_string() == "0.333333333333333333");
    CHECK(Decimal::divide(Decimal(2), Decimal(3)).to_string() == "0.666666666666666667");
    CHECK(Decimal::divide(Decimal(1), Decimal(8)).to_string() == "0.125");
    CHECK(Decimal::divide(Decimal(5, 19), Decimal(1)).to_string() == "0");
    CHECK(Decimal::divide(Decimal(15, 19), Decimal(1)).to_string() == "0.000000000000000002");
    CHECK_THROWS_AS(Decimal::divide(Decimal(1), Decimal(0)), dw::Error);
}

TEST_CASE("dates agree with the month-walking calendar")
{
    Rng rng(12);
    for (int i = 0; i < 3000; ++i) {
        auto d = random_date(rng);
        auto ymd = civil(d);
        CHECK(d.year() == ymd.year);
        CHECK(static_cast<int>(d.month()) == ymd.month);
        CHECK(static_cast<int>(d.day()) == ymd.day);
        CHECK(static_cast<int>(d.weekday()) == weekday_sakamoto(ymd.year, ymd.month, ymd.day));
        CHECK(dw::Date::from_ymd(ymd.year, ymd.month, ymd.day) == d);
        CHECK(dw::Date::parse(d.to_string()) == d);
    }
}

TEST_CASE("1998-11-15 is a Sunday")
{
    auto d = dw::Date::parse("1998-11-15");
    REQUIRE(d);
    CHECK(d->weekday() == 0);
    CHECK(d->month() == 11);
    CHECK(d->year() == 1998);
}

TEST_CASE("strict date and timestamp syntax")
{
    for (const char* bad : {"1998-02-29", "1998-13-01", "1998-1-01", "98-01-01", "1998-01-01x", ""})
        CHECK_MESSAGE(!dw::Date::parse(bad), bad);
    CHECK(dw::Date::parse("2000-02-29"));
    auto t = dw::Timestamp::parse("1998-12-01T13:45");
    REQUIRE(t);
    CHECK(t->to_string() == "1998-12-01T13:45");
    CHECK(t->date() == dw::Date::from_ymd(1998, 12, 1));
    CHECK(dw::Timestamp::parse("1998-12-01")->to_string() == "1998-12-01");
    CHECK(!dw::Timestamp::parse("1998-12-01T13:45:10"));
    CHECK(dw::Timestamp::parse("1998-12-01T13:45:00") == t);
}

TEST_CASE("values serialize without losing digits")
{
    auto type = dw::AttributeType::simple(dw::TypeKind::Decimal);
    auto v = dw::value_from_json(dw::json("17.50"), type);
    CHECK(v == dw::Value(dec("17.5")));
    CHECK(dw::value_to_json(v) == dw::json("17.5"));
    CHECK_THROWS_AS(dw::value_from_json(dw::json("x"), type), dw::Error);

    auto tuple = dw::AttributeType::tuple({{"rue", dw::AttributeType::simple(dw::TypeKind::String)},
                                           {"ville", dw::AttributeType::simple(dw::TypeKind::String)}});
    auto t = dw::value_from_json(dw::json{{"rue", "1 rue X"}, {"ville", "Albi"}}, tuple);
    CHECK(dw::conforms(t, tuple));
    CHECK(dw::value_to_json(t) == dw::json{{"rue", "1 rue X"}, {"ville", "Albi"}});

    auto list = dw::AttributeType::list_of(dw::AttributeType::simple(dw::TypeKind::Integer));
    CHECK(dw::value_to_json(dw::value_from_json(dw::json{3, 1, 2}, list)) == dw::json{3, 1, 2});
    CHECK(dw::conforms(dw::Value{}, list));
}
