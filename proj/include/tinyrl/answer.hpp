#pragma once

// Exact math-answer parsing and rule-based outcome reward.
//
// Accepted grammar (documented in README): signed integers with optional
// comma thousands separators, plain fractions a/b, \frac{a}{b} and
// \dfrac{a}{b}, finite decimals, surrounding $...$ and \boxed{...}
// wrappers. Anything else that is a single whitespace-free token becomes a
// symbolic atom compared by exact text. All numeric comparison is exact
// rational arithmetic; no floating point is involved.

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "tinyrl/errors.hpp"

namespace tinyrl {

using BigInt = boost::multiprecision::cpp_int;

enum class AnswerKind { Integer, Rational, Decimal, SymbolicAtom };

struct AnswerExpr {
    AnswerKind kind = AnswerKind::Integer;
    BigInt numerator = 0;
    BigInt denominator = 1;  // >= 1, gcd(|num|, den) == 1
    std::string atom;        // normalized token, SymbolicAtom only
    std::string raw;

    bool numeric() const { return kind != AnswerKind::SymbolicAtom; }
};

enum class VerifyStatus {
    Equivalent,
    NotEquivalent,
    UnparseablePrediction,
    UnparseableTruth,
};

struct VerifyOutcome {
    VerifyStatus status = VerifyStatus::NotEquivalent;
    int reward = -1;  // 1 iff status == Equivalent
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Base-10 digit string -> integer. cpp_int's own string constructor treats
// a leading zero as an octal prefix, so accumulate explicitly.
inline BigInt from_digits(std::string_view digits) {
    BigInt v = 0;
    for (char c : digits) v = v * 10 + (c - '0');
    return v;
}

// Index one past the '}' matching the '{' at `open`, or npos.
inline std::size_t match_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        else if (s[i] == '}') {
            --depth;
            if (depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

// Strips $...$ and \boxed{...} wrappers until a fixpoint.
inline std::string_view strip_wrappers(std::string_view s) {
    for (;;) {
        s = trim(s);
        if (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
            s.remove_prefix(1);
            s.remove_suffix(1);
            continue;
        }
        constexpr std::string_view kBoxed = "\\boxed{";
        if (s.size() > kBoxed.size() && s.substr(0, kBoxed.size()) == kBoxed) {
            std::size_t end = match_brace(s, kBoxed.size() - 1);
            if (end == s.size()) {
                s = s.substr(kBoxed.size(), s.size() - kBoxed.size() - 1);
                continue;
            }
        }
        return s;
    }
}

// Signed digit string with optional comma separators -> integer.
// Commas are stripped; they must sit strictly between digits.
inline std::optional<BigInt> parse_integer_token(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string digits;
    std::size_t i = 0;
    bool negative = false;
    if (s[0] == '+' || s[0] == '-') {
        negative = (s[0] == '-');
        i = 1;
    }
    bool prev_digit = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (c >= '0' && c <= '9') {
            digits.push_back(c);
            prev_digit = true;
        } else if (c == ',') {
            if (!prev_digit || i + 1 >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i + 1])))
                return std::nullopt;
            prev_digit = false;
        } else {
            return std::nullopt;
        }
    }
    if (digits.empty()) return std::nullopt;
    BigInt v = from_digits(digits);
    return negative ? -v : v;
}

struct RationalValue {
    BigInt num;
    BigInt den;  // > 0, reduced
    bool from_decimal = false;
};

inline void reduce(BigInt& num, BigInt& den) {
    if (den < 0) {
        num = -num;
        den = -den;
    }
    BigInt g = boost::multiprecision::gcd(num < 0 ? BigInt(-num) : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    if (num == 0) den = 1;
}

// Integer or finite decimal literal (commas allowed in the integer part).
inline std::optional<RationalValue> parse_numeric_literal(std::string_view s) {
    std::size_t dot = s.find('.');
    if (dot == std::string_view::npos) {
        auto v = parse_integer_token(s);
        if (!v) return std::nullopt;
        return RationalValue{*v, 1, false};
    }
    if (s.find('.', dot + 1) != std::string_view::npos) return std::nullopt;
    std::string_view int_part = s.substr(0, dot);
    std::string_view frac_part = s.substr(dot + 1);
    if (frac_part.empty()) return std::nullopt;
    for (char c : frac_part)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;

    bool negative = false;
    if (!int_part.empty() && (int_part[0] == '+' || int_part[0] == '-')) {
        negative = (int_part[0] == '-');
        int_part.remove_prefix(1);
    }
    BigInt whole = 0;
    if (!int_part.empty()) {
        auto w = parse_integer_token(int_part);
        if (!w) return std::nullopt;
        whole = *w;
    }
    BigInt den = 1;
    for (std::size_t i = 0; i < frac_part.size(); ++i) den *= 10;
    BigInt num = whole * den + from_digits(frac_part);
    if (negative) num = -num;
    reduce(num, den);
    return RationalValue{num, den, true};
}

// \frac{A}{B} / \dfrac{A}{B}; consumes the whole string or fails.
inline std::optional<std::pair<std::string_view, std::string_view>> split_latex_frac(std::string_view s) {
    constexpr std::string_view kFrac = "\\frac";
    constexpr std::string_view kDfrac = "\\dfrac";
    std::string_view rest;
    if (s.substr(0, kFrac.size()) == kFrac) rest = s.substr(kFrac.size());
    else if (s.substr(0, kDfrac.size()) == kDfrac) rest = s.substr(kDfrac.size());
    else return std::nullopt;
    if (rest.empty() || rest.front() != '{') return std::nullopt;
    std::size_t end_a = match_brace(rest, 0);
    if (end_a == std::string_view::npos) return std::nullopt;
    std::string_view a = rest.substr(1, end_a - 2);
    rest = rest.substr(end_a);
    if (rest.empty() || rest.front() != '{') return std::nullopt;
    std::size_t end_b = match_brace(rest, 0);
    if (end_b != rest.size()) return std::nullopt;
    std::string_view b = rest.substr(1, end_b - 2);
    return std::make_pair(a, b);
}

inline bool looks_like_latex(std::string_view s) {
    return s.find("\\frac") != std::string_view::npos ||
           s.find("\\dfrac") != std::string_view::npos ||
           s.find("\\boxed") != std::string_view::npos ||
           s.find('{') != std::string_view::npos ||
           s.find('}') != std::string_view::npos;
}

inline bool has_internal_space(std::string_view s) {
    for (char c : s)
        if (std::isspace(static_cast<unsigned char>(c))) return true;
    return false;
}

}  // namespace detail

inline AnswerExpr parse_answer(std::string_view text) {
    std::string_view trimmed = detail::trim(text);
    if (trimmed.empty()) throw ParseError("parse_answer: empty answer text");

    std::string_view body = detail::strip_wrappers(trimmed);
    if (body.empty()) throw ParseError("parse_answer: empty after unwrapping");

    AnswerExpr out;
    out.raw = std::string(text);

    auto finish_numeric = [&](detail::RationalValue v) {
        out.numerator = std::move(v.num);
        out.denominator = std::move(v.den);
        if (out.denominator == 1) out.kind = AnswerKind::Integer;
        else out.kind = v.from_decimal ? AnswerKind::Decimal : AnswerKind::Rational;
        return out;
    };

    if (auto frac = detail::split_latex_frac(body)) {
        auto num = detail::parse_numeric_literal(detail::trim(frac->first));
        auto den = detail::parse_numeric_literal(detail::trim(frac->second));
        if (!num || !den) throw ParseError("parse_answer: non-numeric \\frac argument");
        // a/b with rational a, b: (an/ad) / (bn/bd) = an*bd / (ad*bn)
        BigInt n = num->num * den->den;
        BigInt d = num->den * den->num;
        if (d == 0) throw ParseError("parse_answer: zero denominator");
        detail::reduce(n, d);
        return finish_numeric({n, d, false});
    }

    if (std::size_t slash = body.find('/'); slash != std::string_view::npos &&
                                            body.find('/', slash + 1) == std::string_view::npos) {
        auto num = detail::parse_numeric_literal(detail::trim(body.substr(0, slash)));
        auto den = detail::parse_numeric_literal(detail::trim(body.substr(slash + 1)));
        if (num && den) {
            BigInt n = num->num * den->den;
            BigInt d = num->den * den->num;
            if (d == 0) throw ParseError("parse_answer: zero denominator");
            detail::reduce(n, d);
            return finish_numeric({n, d, false});
        }
    }

    if (auto lit = detail::parse_numeric_literal(body)) return finish_numeric(*lit);

    if (detail::has_internal_space(body))
        throw ParseError("parse_answer: multi-token non-numeric answer");
    if (detail::looks_like_latex(body))
        throw ParseError("parse_answer: malformed LaTeX");

    out.kind = AnswerKind::SymbolicAtom;
    out.atom = std::string(body);
    return out;
}

inline std::optional<AnswerExpr> try_parse_answer(std::string_view text) {
    try {
        return parse_answer(text);
    } catch (const ParseError&) {
        return std::nullopt;
    }
}

inline bool is_equivalent(const AnswerExpr& a, const AnswerExpr& b) {
    if (a.numeric() && b.numeric())
        return a.numerator == b.numerator && a.denominator == b.denominator;
    if (!a.numeric() && !b.numeric()) return a.atom == b.atom;
    return false;
}

inline VerifyOutcome reward(std::string_view pred_text, std::string_view truth_text) {
    auto truth = try_parse_answer(truth_text);
    if (!truth)
        throw GroundTruthUnparseable("reward: ground truth does not parse: '" +
                                     std::string(truth_text) + "'");
    auto pred = try_parse_answer(pred_text);
    if (!pred) return {VerifyStatus::UnparseablePrediction, -1};
    if (is_equivalent(*pred, *truth)) return {VerifyStatus::Equivalent, 1};
    return {VerifyStatus::NotEquivalent, -1};
}

// Last \boxed{...} content if present and well-formed, else the last
// whitespace-delimited token. Empty input yields "".
inline std::string extract_final_answer(std::string_view response_text) {
    constexpr std::string_view kBoxed = "\\boxed{";
    std::size_t pos = response_text.rfind(kBoxed);
    if (pos != std::string_view::npos) {
        std::size_t open = pos + kBoxed.size() - 1;
        std::size_t end = detail::match_brace(response_text.substr(open), 0);
        if (end != std::string_view::npos) {
            return std::string(response_text.substr(open + 1, end - 2));
        }
    }
    std::string_view t = detail::trim(response_text);
    if (t.empty()) return "";
    std::size_t last_space = std::string_view::npos;
    for (std::size_t i = t.size(); i-- > 0;) {
        if (std::isspace(static_cast<unsigned char>(t[i]))) {
            last_space = i;
            break;
        }
    }
    return std::string(last_space == std::string_view::npos ? t : t.substr(last_space + 1));
}

inline const char* to_string(VerifyStatus s) {
    switch (s) {
        case VerifyStatus::Equivalent: return "equivalent";
        case VerifyStatus::NotEquivalent: return "not-equivalent";
        case VerifyStatus::UnparseablePrediction: return "unparseable-prediction";
        case VerifyStatus::UnparseableTruth: return "unparseable-truth";
    }
    return "?";
}

}  // namespace tinyrl
