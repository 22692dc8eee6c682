#include "mflow/density.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mflow {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kSqrt2Pi = 2.5066282746310005024;
}  // namespace

BiasDensity BiasDensity::uniform(double B) {
    if (!(B > 0.0)) throw std::invalid_argument("BiasDensity: B must be > 0");
    BiasDensity d;
    d.kind = Kind::Uniform;
    d.B = B;
    return d;
}

BiasDensity BiasDensity::trunc_gauss(double sigma, double B) {
    if (!(B > 0.0)) throw std::invalid_argument("BiasDensity: B must be > 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("BiasDensity: sigma must be > 0");
    BiasDensity d;
    d.kind = Kind::TruncGauss;
    d.B = B;
    d.sigma = sigma;
    return d;
}

double BiasDensity::pdf(double b) const {
    if (b < -B || b > B) return 0.0;
    if (kind == Kind::Uniform) return 1.0 / (2.0 * B);
    const double z = std::erf(B / (sigma * kSqrt2));  // mass of N(0, sigma^2) on [-B, B]
    return std::exp(-b * b / (2.0 * sigma * sigma)) / (sigma * kSqrt2Pi * z);
}

double BiasDensity::mean_square() const {
    if (kind == Kind::Uniform) return B * B / 3.0;
    // E[B^2] of a centered normal truncated to [-B, B]:
    //   sigma^2 * (1 - sqrt(2/pi) * (B/sigma) * exp(-B^2 / (2 sigma^2)) / erf(B/(sigma sqrt 2)))
    const double r = B / sigma;
    const double z = std::erf(r / kSqrt2);
    return sigma * sigma * (1.0 - std::sqrt(2.0 / M_PI) * r * std::exp(-r * r / 2.0) / z);
}

double BiasDensity::sample(Rng& rng) const {
    if (kind == Kind::Uniform) return rng.uniform(-B, B);
    // rejection against the untruncated Gaussian
    for (;;) {
        const double z = sigma * rng.normal();
        if (z >= -B && z <= B) return z;
    }
}

std::string BiasDensity::to_string() const {
    std::ostringstream os;
    if (kind == Kind::Uniform) {
        os << "uniform:B=" << B;
    } else {
        os << "truncgauss:sigma=" << sigma << ",B=" << B;
    }
    return os.str();
}

namespace {

double parse_kv(const std::string& body, const std::string& key) {
    const std::string tag = key + "=";
    const auto pos = body.find(tag);
    if (pos == std::string::npos)
        throw std::invalid_argument("BiasDensity: missing '" + key + "=' in '" + body + "'");
    std::size_t end = body.find(',', pos);
    if (end == std::string::npos) end = body.size();
    return std::stod(body.substr(pos + tag.size(), end - pos - tag.size()));
}

}  // namespace

BiasDensity BiasDensity::parse(const std::string& text) {
    if (text.rfind("uniform:", 0) == 0) {
        return uniform(parse_kv(text.substr(8), "B"));
    }
    if (text.rfind("truncgauss:", 0) == 0) {
        const std::string body = text.substr(11);
        return trunc_gauss(parse_kv(body, "sigma"), parse_kv(body, "B"));
    }
    throw std::invalid_argument(
        "BiasDensity: expected 'uniform:B=<real>' or 'truncgauss:sigma=<real>,B=<real>', got '" + text + "'");
}

}  // namespace mflow
