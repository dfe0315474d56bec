#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>

namespace modlab {

/// Point or vector in R^d, d <= 3. Unused trailing components are zero, so
/// dot products and norms need no dimension argument.
using Vec = std::array<double, 3>;
/// d x d matrix stored as rows of a 3 x 3 array, zero-padded like Vec.
using Mat = std::array<Vec, 3>;

inline constexpr double kPi = std::numbers::pi;

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec operator-(const Vec& a) { return {-a[0], -a[1], -a[2]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline Vec& operator+=(Vec& a, const Vec& b)
{
    a[0] += b[0];
    a[1] += b[1];
    a[2] += b[2];
    return a;
}

/// Copy the first d entries of x into a zero-padded Vec.
inline Vec to_vec(std::span<const double> x)
{
    Vec v{0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < x.size() && i < 3; ++i) v[i] = x[i];
    return v;
}

/// Surface area of the unit sphere S^{d-1} in R^d.
inline double sphere_area(int d) { return 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d); }

//---------------------------------------------------------------------------//
// Errors. Every failure mode named by the module contracts has its own type
// so callers (and tests) can discriminate without parsing messages.
//---------------------------------------------------------------------------//
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

#define MODLAB_DEFINE_ERROR(Name)                                                                  \
    class Name : public Error {                                                                    \
      public:                                                                                      \
        using Error::Error;                                                                        \
    }

MODLAB_DEFINE_ERROR(ZeroPoint);
MODLAB_DEFINE_ERROR(DimensionMismatch);
MODLAB_DEFINE_ERROR(InvalidArgument);
MODLAB_DEFINE_ERROR(QuadratureFailure);
MODLAB_DEFINE_ERROR(InsufficientPoints);
MODLAB_DEFINE_ERROR(InvalidExponents);
MODLAB_DEFINE_ERROR(InvalidAlpha);
MODLAB_DEFINE_ERROR(TailTruncationError);
MODLAB_DEFINE_ERROR(BoxTooSmall);
MODLAB_DEFINE_ERROR(OutOfTable);
MODLAB_DEFINE_ERROR(ResolutionError);
MODLAB_DEFINE_ERROR(NonFinite);
MODLAB_DEFINE_ERROR(MassLeak);
MODLAB_DEFINE_ERROR(BlowUp);
MODLAB_DEFINE_ERROR(InvalidZeta);
MODLAB_DEFINE_ERROR(QuadratureTooCoarse);
MODLAB_DEFINE_ERROR(ConfigError);

#undef MODLAB_DEFINE_ERROR

} // namespace modlab
