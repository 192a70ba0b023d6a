#include "whai/stats.hpp"

#include "whai/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace whai {

namespace {

// Order-independent, compensated sum.
double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double sum = 0.0;
    double c = 0.0;
    for (double x : v) {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x)) {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    return sum + c;
}

double mean_of(const std::vector<double>& v) { return sorted_sum(v) / static_cast<double>(v.size()); }

double squared_deviations(const std::vector<double>& v, double mean) {
    std::vector<double> d;
    d.reserve(v.size());
    for (double x : v) {
        d.push_back((x - mean) * (x - mean));
    }
    return sorted_sum(std::move(d));
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) {
        d = kTiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) {
            d = kTiny;
        }
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) {
            c = kTiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) <= kEps) {
            return h;
        }
    }
    throw Error("incomplete beta continued fraction did not converge");
}

}  // namespace

GroupSummary summarize(const std::vector<double>& values) {
    if (values.empty()) {
        throw Error("cannot summarize an empty group");
    }
    GroupSummary s;
    s.n = values.size();
    s.mean = mean_of(values);
    if (s.n > 1) {
        s.sd = std::sqrt(squared_deviations(values, s.mean) / static_cast<double>(s.n - 1));
    }
    return s;
}

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) {
        throw Error("incomplete beta needs positive shape parameters");
    }
    if (x <= 0.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_upper_tail(double f, double d1, double d2) {
    if (std::isinf(f)) {
        return 0.0;
    }
    if (f <= 0.0) {
        return 1.0;
    }
    return regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

double t_two_tailed(double t, double df) {
    if (std::isinf(t)) {
        return 0.0;
    }
    if (t == 0.0) {
        return 1.0;
    }
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) {
        throw Error("one-way ANOVA needs at least two groups");
    }
    std::vector<double> all;
    for (const auto& g : groups) {
        if (g.size() < 2) {
            throw Error("one-way ANOVA needs at least two values per group");
        }
        all.insert(all.end(), g.begin(), g.end());
    }
    const double grand = mean_of(all);
    std::vector<double> between_terms;
    std::vector<double> within_terms;
    for (const auto& g : groups) {
        const double m = mean_of(g);
        between_terms.push_back(static_cast<double>(g.size()) * (m - grand) * (m - grand));
        within_terms.push_back(squared_deviations(g, m));
    }
    const double ssb = sorted_sum(between_terms);
    const double ssw = sorted_sum(within_terms);
    AnovaResult r;
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(all.size() - groups.size());
    // Means that agree to rounding count as identical.
    const double scale = std::max(1.0, std::fabs(grand));
    const bool no_between = ssb <= 1e-24 * scale * scale * static_cast<double>(all.size());
    if (no_between) {
        r.f = 0.0;
        r.p = 1.0;
        return r;
    }
    if (ssw == 0.0) {
        r.f = std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    r.f = (ssb / r.df_between) / (ssw / r.df_within);
    r.p = f_upper_tail(r.f, r.df_between, r.df_within);
    return r;
}

TTestResult t_test_unpaired(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw Error("unpaired t-test needs at least two values per sample");
    }
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    TTestResult r;
    r.df = static_cast<int>(a.size() + b.size() - 2);
    const double pooled = (squared_deviations(a, ma) + squared_deviations(b, mb)) / r.df;
    const double diff = ma - mb;
    const double scale = std::max({1.0, std::fabs(ma), std::fabs(mb)});
    if (std::fabs(diff) <= 1e-12 * scale) {
        r.t = 0.0;
        r.p = 1.0;
        return r;
    }
    if (pooled == 0.0) {
        r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    r.t = diff / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.p = t_two_tailed(r.t, r.df);
    return r;
}

}  // namespace whai
