#include "mflow/network.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mflow {

Dataset Dataset::from_1d(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("Dataset: xs and ys length mismatch");
    Dataset d;
    d.X = xs;
    d.y = ys;
    return d;
}

void Dataset::require_distinct() const {
    for (int i = 0; i < size(); ++i)
        for (int j = i + 1; j < size(); ++j)
            if ((X.row(i) - X.row(j)).norm() == 0.0)
                throw std::invalid_argument("Dataset: duplicate input points at rows " +
                                            std::to_string(i) + " and " + std::to_string(j));
}

Eigen::VectorXd NetParams::flatten() const {
    const int n = width(), d = dim();
    Eigen::VectorXd theta(param_count());
    for (int k = 0; k < n; ++k) theta.segment(k * d, d) = W.row(k).transpose();
    theta.segment(n * d, n) = b;
    theta.segment(n * d + n, n) = a;
    theta(n * d + 2 * n) = d_out;
    return theta;
}

Eigen::VectorXd NetParams::flatten_anchor() const {
    NetParams tmp;
    tmp.W = W0;
    tmp.b = b0;
    tmp.a = a0;
    tmp.d_out = d_out0;
    return tmp.flatten();
}

void NetParams::unflatten(const Eigen::VectorXd& theta) {
    const int n = width(), d = dim();
    if (theta.size() != param_count()) throw std::invalid_argument("unflatten: size mismatch");
    for (int k = 0; k < n; ++k) W.row(k) = theta.segment(k * d, d).transpose();
    b = theta.segment(n * d, n);
    a = theta.segment(n * d + n, n);
    d_out = theta(n * d + 2 * n);
}

NetParams init_params(int n, int d, const InitSpec& spec, Activation activation) {
    if (n < 1 || d < 1) throw std::invalid_argument("init_params: need n >= 1 and d >= 1");
    Rng rng(spec.seed);

    NetParams net;
    net.activation = activation;
    net.W.resize(n, d);
    if (d == 1) {
        for (int k = 0; k < n; ++k) net.W(k, 0) = rng.sign();
    } else {
        for (int k = 0; k < n; ++k) {
            Eigen::VectorXd g(d);
            double norm2;
            do {
                for (int r = 0; r < d; ++r) g(r) = rng.normal();
                norm2 = g.squaredNorm();
            } while (norm2 == 0.0);
            net.W.row(k) = g.transpose() / std::sqrt(norm2);
        }
    }

    net.b.resize(n);
    for (int k = 0; k < n; ++k) net.b(k) = spec.bias_density.sample(rng);

    net.a.resize(n);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < n; ++k) {
        const double z = rng.normal();  // always drawn, keeps the stream aligned
        net.a(k) = spec.a_scale == 0.0 ? 0.0 : spec.a_scale * z * inv_sqrt_n;
    }
    net.d_out = spec.d_init;

    net.W0 = net.W;
    net.b0 = net.b;
    net.a0 = net.a;
    net.d_out0 = net.d_out;
    return net;
}

double forward(const NetParams& net, const Eigen::VectorXd& x) {
    if (x.size() != net.dim()) throw std::invalid_argument("forward: input dimension mismatch");
    const Eigen::VectorXd pre = net.W * x - net.b;
    double out = net.d_out;
    for (int k = 0; k < net.width(); ++k) out += net.a(k) * activate(net.activation, pre(k));
    return out;
}

double forward1(const NetParams& net, double x) {
    Eigen::VectorXd v(1);
    v(0) = x;
    return forward(net, v);
}

Eigen::VectorXd forward_all(const NetParams& net, const Eigen::MatrixXd& X) {
    const int m = static_cast<int>(X.rows());
    Eigen::VectorXd out(m);
    for (int i = 0; i < m; ++i) out(i) = forward(net, X.row(i).transpose());
    return out;
}

Eigen::MatrixXd jacobian(const NetParams& net, const Dataset& data) {
    const int n = net.width(), d = net.dim(), m = data.size();
    Eigen::MatrixXd J(m, net.param_count());
    for (int i = 0; i < m; ++i) {
        const Eigen::VectorXd x = data.X.row(i).transpose();
        const Eigen::VectorXd pre = net.W * x - net.b;
        for (int k = 0; k < n; ++k) {
            const double s = activate(net.activation, pre(k));
            const double sp = activate_grad(net.activation, pre(k));
            J.block(i, k * d, 1, d) = net.a(k) * sp * x.transpose();
            J(i, n * d + k) = -net.a(k) * sp;
            J(i, n * d + n + k) = s;
        }
        J(i, n * d + 2 * n) = 1.0;
    }
    return J;
}

double loss(const NetParams& net, const Dataset& data) {
    const Eigen::VectorXd r = forward_all(net, data.X) - data.y;
    return r.squaredNorm() / (2.0 * data.size());
}

Eigen::VectorXd loss_grad(const NetParams& net, const Dataset& data) {
    const Eigen::VectorXd r = forward_all(net, data.X) - data.y;
    return jacobian(net, data).transpose() * r / data.size();
}

std::string params_to_csv(const NetParams& net) {
    const Eigen::VectorXd theta = net.flatten();
    const int n = net.width(), d = net.dim();
    std::ostringstream os;
    os << "index,block,value\n";
    char buf[64];
    for (int k = 0; k < theta.size(); ++k) {
        const char* block = "W";
        if (k >= n * d + 2 * n) block = "d";
        else if (k >= n * d + n) block = "a";
        else if (k >= n * d) block = "b";
        std::snprintf(buf, sizeof(buf), "%.17g", theta(k));
        os << k << ',' << block << ',' << buf << '\n';
    }
    return os.str();
}

}  // namespace mflow
