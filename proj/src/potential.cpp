#include "mflow/potential.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mflow {

namespace {

// |x|^q with fast paths for the exponents the experiments actually use
inline double pow_abs(double x, double q) {
    const double a = std::fabs(x);
    if (q == 2.0) return a * a;
    if (q == 3.0) return a * a * a;
    if (q == 4.0) return (a * a) * (a * a);
    if (q == 1.0) return a;
    if (q == 0.0) return 1.0;
    return std::pow(a, q);
}

double parse_kv(const std::string& body, const std::string& key) {
    const std::string tag = key + "=";
    const auto pos = body.find(tag);
    if (pos == std::string::npos)
        throw std::invalid_argument("Potential: missing '" + key + "=' in '" + body + "'");
    std::size_t end = body.find(',', pos);
    if (end == std::string::npos) end = body.size();
    return std::stod(body.substr(pos + tag.size(), end - pos - tag.size()));
}

}  // namespace

Potential Potential::quadratic(Mode mode) {
    Potential pot;
    pot.kind = Kind::Quadratic;
    pot.mode = mode;
    return pot;
}

Potential Potential::power_plus_quad(double p, double omega, Mode mode) {
    if (!(p >= 2.0))
        throw std::invalid_argument("Potential: PowerPlusQuad requires p >= 2 (trainable family)");
    if (!(omega >= 0.0))
        throw std::invalid_argument("Potential: PowerPlusQuad requires omega >= 0");
    Potential pot;
    pot.kind = Kind::PowerPlusQuad;
    pot.mode = mode;
    pot.p = p;
    pot.omega = omega;
    return pot;
}

Potential Potential::hypentropy(double beta, Mode mode) {
    if (!(beta > 0.0)) throw std::invalid_argument("Potential: Hypentropy requires beta > 0");
    Potential pot;
    pot.kind = Kind::Hypentropy;
    pot.mode = mode;
    pot.beta = beta;
    return pot;
}

std::string Potential::to_string() const {
    std::ostringstream os;
    if (scaled()) os << "scaled:";
    switch (kind) {
        case Kind::Quadratic: os << "quadratic"; break;
        case Kind::PowerPlusQuad: os << "pow:p=" << p << ",omega=" << omega; break;
        case Kind::Hypentropy: os << "hypentropy:beta=" << beta; break;
    }
    return os.str();
}

Potential Potential::parse(const std::string& text) {
    std::string body = text;
    Mode mode = Mode::Unscaled;
    if (body.rfind("scaled:", 0) == 0) {
        mode = Mode::Scaled;
        body = body.substr(7);
    }
    if (body == "quadratic") return quadratic(mode);
    if (body.rfind("pow:", 0) == 0) {
        const std::string kv = body.substr(4);
        return power_plus_quad(parse_kv(kv, "p"), parse_kv(kv, "omega"), mode);
    }
    if (body.rfind("hypentropy:", 0) == 0) {
        return hypentropy(parse_kv(body.substr(11), "beta"), mode);
    }
    throw std::invalid_argument(
        "Potential: expected 'quadratic', 'pow:p=<real>,omega=<real>' or "
        "'hypentropy:beta=<real>' (optionally prefixed 'scaled:'), got '" + text + "'");
}

double phi_eval(const Potential& pot, double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("phi_eval: non-finite input");
    switch (pot.kind) {
        case Potential::Kind::Quadratic:
            return x * x;
        case Potential::Kind::PowerPlusQuad:
            return pow_abs(x, pot.p) + pot.omega * x * x;
        case Potential::Kind::Hypentropy:
            return x * std::asinh(x / pot.beta) - std::sqrt(x * x + pot.beta * pot.beta);
    }
    return 0.0;
}

double phi_grad(const Potential& pot, double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("phi_grad: non-finite input");
    switch (pot.kind) {
        case Potential::Kind::Quadratic:
            return 2.0 * x;
        case Potential::Kind::PowerPlusQuad: {
            const double s = (x > 0.0) - (x < 0.0);
            return pot.p * pow_abs(x, pot.p - 1.0) * s + 2.0 * pot.omega * x;
        }
        case Potential::Kind::Hypentropy:
            return std::asinh(x / pot.beta);
    }
    return 0.0;
}

double phi_hess(const Potential& pot, double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("phi_hess: non-finite input");
    switch (pot.kind) {
        case Potential::Kind::Quadratic:
            return 2.0;
        case Potential::Kind::PowerPlusQuad:
            return pot.p * (pot.p - 1.0) * pow_abs(x, pot.p - 2.0) + 2.0 * pot.omega;
        case Potential::Kind::Hypentropy:
            return 1.0 / std::sqrt(x * x + pot.beta * pot.beta);
    }
    return 0.0;
}

double bregman(const Potential& pot, double x, double y) {
    return phi_eval(pot, x) - phi_eval(pot, y) - phi_grad(pot, y) * (x - y);
}

double inverse_grad(const Potential& pot, double y) {
    if (!std::isfinite(y)) throw std::invalid_argument("inverse_grad: non-finite target");
    const double tol = 1e-12 * std::max(1.0, std::fabs(y));

    // phi' is odd and increasing for every built-in family, so bracket around 0
    double lo = -1.0, hi = 1.0;
    int doublings = 0;
    while (phi_grad(pot, lo) > y) {
        lo *= 2.0;
        if (++doublings > 200)
            throw std::runtime_error("inverse_grad: bracket expansion failed after 200 doublings (lower side)");
    }
    while (phi_grad(pot, hi) < y) {
        hi *= 2.0;
        if (++doublings > 200)
            throw std::runtime_error("inverse_grad: bracket expansion failed after 200 doublings (upper side)");
    }

    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double g = phi_grad(pot, x);
        if (std::fabs(g - y) <= tol) return x;
        if (g < y) lo = x; else hi = x;
        const double h = phi_hess(pot, x);
        double next = (h > 0.0) ? x - (g - y) / h : x;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // Newton left the bracket
        x = next;
    }
    if (std::fabs(phi_grad(pot, x) - y) <= tol) return x;
    throw std::runtime_error("inverse_grad: no convergence to 1e-12 tolerance");
}

Eigen::VectorXd hessian_diag(const Potential& pot, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& anchor, int n) {
    Eigen::VectorXd out;
    hessian_diag_into(pot, theta, anchor, n, out);
    return out;
}

void hessian_diag_into(const Potential& pot, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& anchor, int n, Eigen::VectorXd& out) {
    if (theta.size() != anchor.size())
        throw std::invalid_argument("hessian_diag: theta and anchor length mismatch");
    const double s = pot.scaled() ? static_cast<double>(n) : 1.0;
    out.resize(theta.size());
    switch (pot.kind) {
        case Potential::Kind::Quadratic:
            out.setConstant(2.0);
            break;
        case Potential::Kind::PowerPlusQuad: {
            const double c = pot.p * (pot.p - 1.0);
            const double w2 = 2.0 * pot.omega;
            const auto z = (s * (theta - anchor).array()).abs();
            if (pot.p == 2.0) out.setConstant(2.0 + w2);
            else if (pot.p == 3.0) out = (c * z + w2).matrix();
            else if (pot.p == 4.0) out = (c * z.square() + w2).matrix();
            else out = (c * z.pow(pot.p - 2.0) + w2).matrix();
            break;
        }
        case Potential::Kind::Hypentropy: {
            const auto z = s * (theta - anchor).array();
            out = (z.square() + pot.beta * pot.beta).sqrt().inverse().matrix();
            break;
        }
    }
}

}  // namespace mflow
