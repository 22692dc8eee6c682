#pragma once

#include <string>

#include "mflow/rng.hpp"

namespace mflow {

/// Input-bias distribution: an even density with compact support [-B, B].
///
/// Two families are provided: Uniform(B) and a Gaussian restricted to
/// [-B, B] and renormalized (TruncGauss). Both expose the density, the
/// second moment E[B^2] in closed form, and seeded sampling.
struct BiasDensity {
    enum class Kind { Uniform, TruncGauss };

    Kind kind = Kind::Uniform;
    double B = 1.0;       // support half-width, > 0
    double sigma = 1.0;   // TruncGauss only, > 0

    static BiasDensity uniform(double B);
    static BiasDensity trunc_gauss(double sigma, double B);

    double pdf(double b) const;
    double mean_square() const;  // E[B^2]
    double sample(Rng& rng) const;

    std::string to_string() const;
    static BiasDensity parse(const std::string& text);
};

}  // namespace mflow
