#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace whai {

struct GroupSummary {
    double mean = 0.0;
    /// Sample standard deviation (n - 1); absent for a single value.
    std::optional<double> sd;
    std::size_t n = 0;
};

/// Throws Error on an empty sample. Independent of input order.
GroupSummary summarize(const std::vector<double>& values);

struct AnovaResult {
    double f = 0.0;
    double p = 1.0;
    int df_between = 0;
    int df_within = 0;
};

/// Needs >= 2 groups of >= 2 values. No variance at all gives F = 0, p = 1;
/// zero within-group variance with separated means gives F = inf, p = 0.
AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    int df = 0;
};

/// Pooled-variance Student's t, two-tailed. Needs >= 2 values per sample.
TTestResult t_test_unpaired(const std::vector<double>& a, const std::vector<double>& b);

/// I_x(a, b) by continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
/// P(F > f) for F(d1, d2).
double f_upper_tail(double f, double d1, double d2);
/// P(|T| > |t|) for Student's t with `df` degrees of freedom.
double t_two_tailed(double t, double df);

}  // namespace whai
