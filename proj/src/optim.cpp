#include "stackdetect/optim.hpp"

#include <algorithm>
#include <stdexcept>

namespace stackdetect {

std::vector<double> platt_targets(std::span<const Label> labels) {
    double pos = 0.0;
    double neg = 0.0;
    for (Label l : labels) (l == Label::AI ? pos : neg) += 1.0;
    const double hi = (pos + 1.0) / (pos + 2.0);
    const double lo = 1.0 / (neg + 2.0);
    std::vector<double> t;
    t.reserve(labels.size());
    for (Label l : labels) t.push_back(l == Label::AI ? hi : lo);
    return t;
}

namespace {

double objective(std::span<const double> xc, std::span<const double> t, double slope, double icpt, double l2) {
    double loss = 0.0;
    for (std::size_t i = 0; i < xc.size(); ++i) loss += logistic_loss(slope * xc[i] + icpt, t[i]);
    return loss / static_cast<double>(xc.size()) + 0.5 * l2 * slope * slope;
}

}  // namespace

LogisticMap fit_logistic_1d(std::span<const double> x, std::span<const double> targets, double slope_l2,
                            int max_iter) {
    if (x.size() != targets.size()) throw std::invalid_argument("fit_logistic_1d: size mismatch");
    if (x.empty()) throw ValidationError("fit_logistic_1d: no data");
    for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("fit_logistic_1d: non-finite input");
    }
    const double n = static_cast<double>(x.size());

    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    std::vector<double> xc(x.size());
    bool constant = true;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xc[i] = x[i] - mean;
        if (xc[i] != 0.0) constant = false;
    }

    double tbar = 0.0;
    for (double t : targets) tbar += t;
    tbar = std::clamp(tbar / n, 1e-12, 1.0 - 1e-12);
    const double prior_logit = std::log(tbar / (1.0 - tbar));
    if (constant) return {0.0, prior_logit};

    double slope = 0.0;
    double icpt = prior_logit;
    double f = objective(xc, targets, slope, icpt, slope_l2);
    for (int it = 0; it < max_iter; ++it) {
        double gs = 0.0, gc = 0.0, hss = 0.0, hsc = 0.0, hcc = 0.0;
        for (std::size_t i = 0; i < xc.size(); ++i) {
            const double p = sigmoid(slope * xc[i] + icpt);
            const double r = p - targets[i];
            const double w = std::max(p * (1.0 - p), 1e-16);
            gs += r * xc[i];
            gc += r;
            hss += w * xc[i] * xc[i];
            hsc += w * xc[i];
            hcc += w;
        }
        gs = gs / n + slope_l2 * slope;
        gc /= n;
        hss = hss / n + slope_l2 + 1e-12;
        hsc /= n;
        hcc = hcc / n + 1e-12;
        if (std::abs(gs) < 1e-12 && std::abs(gc) < 1e-12) break;

        const double det = hss * hcc - hsc * hsc;
        double ds, dc;
        if (det > 0.0) {
            ds = -(hcc * gs - hsc * gc) / det;
            dc = -(hss * gc - hsc * gs) / det;
        } else {
            ds = -gs;
            dc = -gc;
        }

        // Backtracking on the objective; Newton directions here are always descent directions.
        double step = 1.0;
        double fnew = f;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            fnew = objective(xc, targets, slope + step * ds, icpt + step * dc, slope_l2);
            if (fnew <= f + 1e-4 * step * (gs * ds + gc * dc)) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
        slope += step * ds;
        icpt += step * dc;
        const bool converged = std::abs(f - fnew) <= 1e-15 * std::max(1.0, std::abs(f));
        f = fnew;
        if (converged) break;
    }
    return {slope, icpt - slope * mean};
}

}  // namespace stackdetect
