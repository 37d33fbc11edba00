#include "somnoscope/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace somnoscope {

Summary aggregate(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("cannot aggregate an empty trial set");
    const auto n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    Summary s;
    s.mean = sum / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    double c = 1.0;
    double d = 1.0 - (a + b) * x / (a + 1.0);
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double f = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        f *= d * c;
        num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + num / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        f *= delta;
        if (std::abs(delta - 1.0) < eps) return f;
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge");
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete beta needs a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("incomplete beta needs x in [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("t distribution needs df > 0");
    if (std::isnan(t)) return t;
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = df / (df + t * t);
    const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

TTestResult one_sided_t_test(std::span<const double> a, std::span<const double> b, double alpha) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("t-test needs at least 2 values per group");
    const Summary sa = aggregate(a), sb = aggregate(b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double va = sa.std * sa.std / na, vb = sb.std * sb.std / nb;
    const double se2 = va + vb;
    TTestResult r;
    const double diff = sa.mean - sb.mean;
    if (se2 == 0.0) {
        if (diff == 0.0) throw std::invalid_argument("t-test undefined: both groups constant with equal means");
        r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.df = na + nb - 2.0;
        r.p = diff > 0 ? 0.0 : 1.0;
    } else {
        r.t = diff / std::sqrt(se2);
        r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
        r.p = 1.0 - student_t_cdf(r.t, r.df);
    }
    r.significant = r.p < alpha;
    return r;
}

} // namespace somnoscope
