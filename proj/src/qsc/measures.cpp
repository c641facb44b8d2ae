#include "qsc/measures.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace qsc {

namespace {

// Gauss-Legendre by Newton iteration on P_n.
void compute_gl(int n, std::vector<double>& xs, std::vector<double>& ws) {
    xs.resize(n);
    ws.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (x * p1 - p0) / (x * x - 1.0);
            double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) {
                p0 = 1.0;
                p1 = x;
                for (int k = 2; k <= n; ++k) {
                    double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
                break;
            }
        }
        xs[i] = x;
    }
}

std::mutex gl_mu;
std::map<int, std::pair<std::vector<double>, std::vector<double>>> gl_cache;

const std::pair<std::vector<double>, std::vector<double>>& gl_pair(int n) {
    std::scoped_lock lk(gl_mu);
    auto it = gl_cache.find(n);
    if (it == gl_cache.end()) {
        std::pair<std::vector<double>, std::vector<double>> p;
        compute_gl(n, p.first, p.second);
        it = gl_cache.emplace(n, std::move(p)).first;
    }
    return it->second;
}

}  // namespace

const std::vector<double>& gl_nodes(int n) { return gl_pair(n).first; }
const std::vector<double>& gl_weights(int n) { return gl_pair(n).second; }

}  // namespace qsc
