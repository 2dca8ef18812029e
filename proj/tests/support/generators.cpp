#include "generators.hpp"

#include <map>

namespace dwtest {

using dw::AttributeType;
using dw::Expr;
using dw::Op;
using dw::TypeKind;
using dw::Value;

namespace {

AttributeType random_simple_type(Rng& rng)
{
    static const std::vector<TypeKind> kinds{TypeKind::String, TypeKind::Integer, TypeKind::Decimal,
                                             TypeKind::Boolean, TypeKind::Date};
    return AttributeType::simple(rng.pick(kinds));
}

dw::Cardinality random_end(Rng& rng)
{
    return {static_cast<std::uint32_t>(rng.range(0, 1)), rng.chance(0.5)};
}

} // namespace

dw::SchemaGraph random_schema(Rng& rng, const SchemaShape& shape)
{
    dw::SchemaGraph g;
    int n = static_cast<int>(rng.range(shape.min_classes, shape.max_classes));
    for (int i = 0; i < n; ++i) {
        dw::ClassDef c;
        c.name = "K" + std::to_string(i);
        int attrs = static_cast<int>(rng.range(1, 3));
        for (int a = 0; a < attrs; ++a) {
            dw::Attribute attr{"k" + std::to_string(i) + "_a" + std::to_string(a), random_simple_type(rng)};
            if (shape.tuple_attributes && rng.chance(0.15))
                attr.type = AttributeType::tuple({{"x", random_simple_type(rng)}, {"y", random_simple_type(rng)}});
            c.attributes.push_back(attr);
        }
        g.classes.push_back(c);
    }
    int next_link = 0;
    auto link_name = [&] { return "L" + std::to_string(next_link++); };
    for (int i = 1; i < n; ++i)
        if (rng.chance(shape.inheritance)) {
            int super = static_cast<int>(rng.range(0, i - 1));
            g.links.push_back({link_name(), dw::LinkKind::Inheritance, g.classes[i].name, g.classes[super].name, {}});
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i != j && rng.chance(shape.composition))
                g.links.push_back({link_name(), dw::LinkKind::Composition, g.classes[i].name, g.classes[j].name,
                                   dw::LinkCardinality{random_end(rng), random_end(rng)}});
            if (rng.chance(shape.association))
                g.links.push_back({link_name(), dw::LinkKind::Association, g.classes[i].name, g.classes[j].name,
                                   dw::LinkCardinality{random_end(rng), random_end(rng)}});
        }
    return g;
}

// ---------------------------------------------------------------------------------------
// Trees

dw::Value random_decimal(Rng& rng)
{
    int scale = static_cast<int>(rng.range(0, 3));
    return Value(dw::Decimal(dw::Decimal::Int(rng.range(-2000, 2000)), scale));
}

dw::Date random_date(Rng& rng)
{
    // 1900-01-01 .. 2100-12-31
    return dw::Date{static_cast<std::int32_t>(rng.range(-25567, 47846))};
}

namespace {

enum class Want { Num, Bool, Str, Date };

Want random_want(Rng& rng)
{
    static const std::vector<Want> all{Want::Num, Want::Bool, Want::Str, Want::Date};
    return rng.pick(all);
}

Expr leaf(Rng& rng, Want want, const TreeVocabulary& v)
{
    static const std::vector<std::string> words{"Toulouse", "Albi", "Muret", ""};
    bool ref = rng.chance(0.5);
    switch (want) {
    case Want::Num:
        if (ref)
            return Expr::ref(rng.chance(0.5) ? rng.pick(v.ints) : rng.pick(v.decimals));
        if (rng.chance(0.5))
            return Expr::lit(Value(std::int64_t{rng.range(-20, 20)}));
        return Expr::lit(random_decimal(rng));
    case Want::Bool:
        return ref ? Expr::ref(rng.pick(v.booleans)) : Expr::lit(Value(rng.chance(0.5)));
    case Want::Str:
        return ref ? Expr::ref(rng.pick(v.strings)) : Expr::lit(Value(rng.pick(words)));
    case Want::Date:
        return ref ? Expr::ref(rng.pick(v.dates)) : Expr::lit(Value(random_date(rng)));
    }
    return Expr::lit(Value(true));
}

Expr node(Rng& rng, Want want, int depth, const TreeVocabulary& v)
{
    if (rng.chance(0.08))
        want = random_want(rng);  // deliberately ill-typed position
    if (depth == 0 || rng.chance(0.25))
        return leaf(rng, want, v);
    auto sub = [&](Want w) { return node(rng, w, depth - 1, v); };
    switch (want) {
    case Want::Num: {
        int choice = static_cast<int>(rng.range(0, 9));
        if (choice < 5) {
            static const std::vector<Op> ops{Op::Add, Op::Subtract, Op::Multiply, Op::Divide};
            return Expr::make(rng.pick(ops), {sub(Want::Num), sub(Want::Num)});
        }
        if (choice < 8) {
            static const std::vector<Op> ops{Op::Sum, Op::Average, Op::Count, Op::Min, Op::Max};
            Op op = rng.pick(ops);
            std::string path = rng.chance(0.5) ? v.multi_int : v.multi_dec;
            if (op == Op::Count && rng.chance(0.3))
                path = rng.chance(0.5) ? v.multi_str : v.multi_date;
            return Expr::make(op, {Expr::ref(path)});
        }
        static const std::vector<Op> parts{Op::Month, Op::Quarter, Op::Year};
        return Expr::make(rng.pick(parts), {sub(Want::Date)});
    }
    case Want::Bool: {
        int choice = static_cast<int>(rng.range(0, 5));
        if (choice == 0)
            return Expr::make(Op::Not, {sub(Want::Bool)});
        if (choice <= 2) {
            std::vector<Expr> kids;
            int n = static_cast<int>(rng.range(2, 3));
            for (int i = 0; i < n; ++i)
                kids.push_back(sub(Want::Bool));
            return Expr::make(rng.chance(0.5) ? Op::And : Op::Or, std::move(kids));
        }
        static const std::vector<Op> cmp{Op::Equal, Op::Greater, Op::Less};
        static const std::vector<Want> operands{Want::Num, Want::Num, Want::Str, Want::Date, Want::Bool};
        Want w = rng.pick(operands);
        Op op = rng.pick(cmp);
        return Expr::make(op, {sub(w), sub(w)});
    }
    case Want::Str:
        if (rng.chance(0.5))
            return Expr::make(Op::DayLabel, {sub(Want::Date)});
        return Expr::make(rng.chance(0.5) ? Op::Min : Op::Max, {Expr::ref(v.multi_str)});
    case Want::Date:
        return Expr::make(rng.chance(0.5) ? Op::Min : Op::Max, {Expr::ref(v.multi_date)});
    }
    return leaf(rng, want, v);
}

template <typename F>
std::vector<Value> scalar(Rng& rng, F make)
{
    if (rng.chance(0.07))
        return {};
    return {make()};
}

template <typename F>
std::vector<Value> multi(Rng& rng, F make)
{
    std::vector<Value> out;
    int n = static_cast<int>(rng.range(0, 4));
    for (int i = 0; i < n; ++i)
        out.push_back(rng.chance(0.1) ? Value{} : make());
    return out;
}

} // namespace

Expr random_tree(Rng& rng, int max_depth, const TreeVocabulary& vocab)
{
    return node(rng, random_want(rng), max_depth, vocab);
}

dw::Binding random_binding(Rng& rng, const TreeVocabulary& v)
{
    static const std::vector<std::string> words{"Toulouse", "Albi", "Muret", ""};
    dw::Binding b;
    auto small_int = [&] { return Value(std::int64_t{rng.range(-20, 20)}); };
    for (const auto& r : v.ints)
        b[r] = scalar(rng, small_int);
    for (const auto& r : v.decimals)
        b[r] = scalar(rng, [&] { return random_decimal(rng); });
    for (const auto& r : v.strings)
        b[r] = scalar(rng, [&] { return Value(rng.pick(words)); });
    for (const auto& r : v.dates)
        b[r] = scalar(rng, [&] { return Value(random_date(rng)); });
    for (const auto& r : v.booleans)
        b[r] = scalar(rng, [&] { return Value(rng.chance(0.5)); });
    b[v.multi_int] = multi(rng, small_int);
    b[v.multi_dec] = multi(rng, [&] { return rng.chance(0.3) ? small_int() : random_decimal(rng); });
    b[v.multi_str] = multi(rng, [&] { return Value(rng.pick(words)); });
    b[v.multi_date] = multi(rng, [&] { return Value(random_date(rng)); });
    return b;
}

// ---------------------------------------------------------------------------------------
// Relations

std::vector<dw::Row> random_relation(Rng& rng, std::vector<std::string>& columns, int max_columns, int max_rows)
{
    int ncols = static_cast<int>(rng.range(1, max_columns));
    int nrows = static_cast<int>(rng.range(1, max_rows));
    columns.clear();
    for (int c = 0; c < ncols; ++c)
        columns.push_back("c" + std::to_string(c));

    // Each column is either free (small random domain) or a random function of an earlier one.
    struct Spec {
        int source = -1;
        std::int64_t domain = 1;
        std::map<Value, Value, dw::ValueLess> table;
        bool text = false;
    };
    std::vector<Spec> specs(ncols);
    for (int c = 0; c < ncols; ++c) {
        specs[c].domain = rng.range(1, 8);
        specs[c].text = rng.chance(0.3);
        if (c > 0 && rng.chance(0.5))
            specs[c].source = static_cast<int>(rng.range(0, c - 1));
    }
    auto make = [&](const Spec& s, std::int64_t x) {
        return s.text ? Value("v" + std::to_string(x)) : Value(x);
    };
    std::vector<dw::Row> rows;
    for (int r = 0; r < nrows; ++r) {
        dw::Row row;
        for (int c = 0; c < ncols; ++c) {
            auto& s = specs[c];
            if (s.source < 0) {
                row[columns[c]] = make(s, rng.range(0, s.domain - 1));
                continue;
            }
            const Value& key = row[columns[s.source]];
            auto it = s.table.find(key);
            if (it == s.table.end())
                it = s.table.emplace(key, make(s, rng.range(0, s.domain - 1))).first;
            row[columns[c]] = it->second;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace dwtest
