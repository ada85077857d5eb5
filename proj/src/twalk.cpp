#include "epifit/twalk.hpp"

#include "epifit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace epifit {

namespace {

constexpr double kWalkAw = 1.5;
constexpr double kTraverseAt = 6.0;
// Cumulative move probabilities: walk, traverse, blow, hop.
constexpr double kCumWalk = 0.4918;
constexpr double kCumTraverse = 0.9836;
constexpr double kCumBlow = 0.9918;

constexpr double kInf = std::numeric_limits<double>::infinity();

// -log density of a spherical normal restricted to the phi coordinates.
double gauss_energy(const Vector& h, const Vector& centre, const std::vector<Eigen::Index>& phi, double scale) {
    double ss = 0;
    for (auto i : phi) ss += (h(i) - centre(i)) * (h(i) - centre(i));
    const auto n = static_cast<double>(phi.size());
    return n / 2.0 * std::log(2.0 * std::numbers::pi) + n * std::log(scale) + 0.5 * ss / (scale * scale);
}

double max_phi_distance(const Vector& a, const Vector& b, const std::vector<Eigen::Index>& phi) {
    double s = 0;
    for (auto i : phi) s = std::max(s, std::abs(a(i) - b(i)));
    return s;
}

}  // namespace

TWalk::TWalk(Energy energy, Vector lower, Vector upper, const Vector& x0, const Vector& xp0,
             std::uint64_t seed)
    : energy_(std::move(energy)), lower_(std::move(lower)), upper_(std::move(upper)), x_(x0), xp_(xp0),
      rng_(seed) {
    const auto n = x_.size();
    if (n == 0) throw InvalidArgument("t-walk needs at least one coordinate");
    if (xp_.size() != n || lower_.size() != n || upper_.size() != n)
        throw InvalidArgument("t-walk initial points and bounds differ in dimension");
    for (Eigen::Index i = 0; i < n; ++i)
        if (x_(i) == xp_(i)) throw InvalidArgument("t-walk initial points must differ in every coordinate");
    for (Eigen::Index i = 0; i < n; ++i)
        if (x_(i) < lower_(i) || x_(i) > upper_(i) || xp_(i) < lower_(i) || xp_(i) > upper_(i))
            throw InvalidArgument("t-walk initial points must lie inside the box");
    u_ = this->energy(x_);
    up_ = this->energy(xp_);
    if (!std::isfinite(u_) && !std::isfinite(up_))
        throw InvalidArgument("t-walk target is not finite at either initial point");
    if (!std::isfinite(u_) || !std::isfinite(up_))
        throw InvalidArgument("t-walk target is not finite at one of the initial points");
    pphi_ = std::min<double>(static_cast<double>(n), 4.0) / static_cast<double>(n);
}

double TWalk::energy(const Vector& v) const {
    try {
        const double e = energy_(v);
        return std::isnan(e) ? kInf : e;
    } catch (const Error&) {
        return kInf;
    }
}

bool TWalk::in_support(const Vector& y, const Vector& other) const {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!(y(i) >= lower_(i) && y(i) <= upper_(i))) return false;
        if (y(i) == other(i)) return false;
    }
    return true;
}

double TWalk::simbeta() {
    const double at = kTraverseAt;
    if (unif_(rng_) < (at - 1.0) / (2.0 * at)) return std::pow(unif_(rng_), 1.0 / (at + 1.0));
    return std::pow(unif_(rng_), 1.0 / (1.0 - at));
}

void TWalk::record() {
    if (n_recorded_ == static_cast<std::size_t>(xs_.rows())) {
        const auto grow = std::max<Eigen::Index>(1024, xs_.rows());
        xs_.conservativeResize(xs_.rows() + grow, x_.size());
        xps_.conservativeResize(xps_.rows() + grow, x_.size());
        us_.conservativeResize(us_.size() + grow);
    }
    const auto r = static_cast<Eigen::Index>(n_recorded_);
    xs_.row(r) = x_.transpose();
    xps_.row(r) = xp_.transpose();
    us_(r) = -u_;
    ++n_recorded_;
}

void TWalk::run(std::size_t n_steps) {
    const auto n = x_.size();
    std::vector<Eigen::Index> phi;
    phi.reserve(static_cast<std::size_t>(n));
    for (std::size_t step = 0; step < n_steps; ++step) {
        const double ker = unif_(rng_);
        const bool move_x = unif_(rng_) < 0.5;
        // `mv` is the point that moves, `st` the one that stays.
        Vector& mv = move_x ? x_ : xp_;
        const Vector& st = move_x ? xp_ : x_;
        double& u_mv = move_x ? u_ : up_;

        phi.clear();
        for (Eigen::Index i = 0; i < n; ++i)
            if (unif_(rng_) < pphi_) phi.push_back(i);

        Vector y = mv;
        double log_extra = 0.0;  // log proposal-ratio correction
        bool valid = !phi.empty();

        if (ker < kCumWalk) {
            for (auto i : phi) {
                const double uu = unif_(rng_);
                const double z = kWalkAw / (1.0 + kWalkAw) * (kWalkAw * uu * uu + 2.0 * uu - 1.0);
                y(i) = mv(i) + (mv(i) - st(i)) * z;
            }
        } else if (ker < kCumTraverse) {
            const double beta = simbeta();
            for (auto i : phi) y(i) = st(i) + beta * (st(i) - mv(i));
            if (valid) log_extra = (static_cast<double>(phi.size()) - 2.0) * std::log(beta);
        } else if (ker < kCumBlow) {
            const double sigma = max_phi_distance(st, mv, phi);
            if (valid && sigma > 0) {
                for (auto i : phi) y(i) = st(i) + sigma * normal_(rng_);
                const double g_fwd = gauss_energy(y, st, phi, sigma);
                const double sigma_back = max_phi_distance(st, y, phi);
                const double g_rev = sigma_back > 0 ? gauss_energy(mv, st, phi, sigma_back) : kInf;
                log_extra = g_fwd - g_rev;
            } else {
                valid = false;
            }
        } else {
            const double sigma = max_phi_distance(st, mv, phi);
            if (valid && sigma > 0) {
                for (auto i : phi) y(i) = mv(i) + sigma / 3.0 * normal_(rng_);
                const double g_fwd = gauss_energy(y, mv, phi, sigma / 3.0);
                const double sigma_back = max_phi_distance(st, y, phi);
                const double g_rev = sigma_back > 0 ? gauss_energy(mv, y, phi, sigma_back / 3.0) : kInf;
                log_extra = g_fwd - g_rev;
            } else {
                valid = false;
            }
        }

        if (valid && in_support(y, st)) {
            const double u_y = energy(y);
            if (std::isfinite(u_y)) {
                const double log_a = (u_mv - u_y) + log_extra;
                if (log_a >= 0.0 || std::log(unif_(rng_)) < log_a) {
                    mv = y;
                    u_mv = u_y;
                    ++accepted_;
                }
            }
        }
        record();
    }
}

Vector TWalk::psrf_last(std::size_t window) const {
    if (window > n_recorded_) throw InvalidArgument("PSRF window longer than the chain");
    const auto start = static_cast<Eigen::Index>(n_recorded_ - window);
    const auto w = static_cast<Eigen::Index>(window);
    return psrf(xs_.middleRows(start, w), xps_.middleRows(start, w));
}

McmcChain TWalk::chain() const {
    McmcChain c;
    const auto n = static_cast<Eigen::Index>(n_recorded_);
    c.states = xs_.topRows(n);
    c.partner_states = xps_.topRows(n);
    c.log_posterior = us_.head(n);
    c.acceptance_rate = n_recorded_ ? static_cast<double>(accepted_) / static_cast<double>(n_recorded_) : 0.0;
    return c;
}

McmcChain twalk_sample(const Objective& neg_log_posterior, const ParameterSpace& space, std::size_t n_steps,
                       std::uint64_t seed, const std::pair<Vector, Vector>& init_pair) {
    space.validate();
    TWalk walker(neg_log_posterior, space.free_lower(), space.free_upper(), init_pair.first, init_pair.second, seed);
    walker.run(n_steps);
    McmcChain c = walker.chain();
    if (c.steps() >= 4) {
        try {
            c.psrf = chain_psrf(c, c.steps() / 2);
        } catch (const PsrfUndefined&) {
            c.psrf = Vector();
        }
    }
    return c;
}

Vector psrf(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("PSRF windows differ in shape");
    const auto n = a.rows();
    if (n < 2) throw InvalidArgument("PSRF needs at least two draws per chain");
    const double nd = static_cast<double>(n);
    Vector out(a.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double ma = a.col(j).mean();
        const double mb = b.col(j).mean();
        const double sa = (a.col(j).array() - ma).square().sum() / (nd - 1.0);
        const double sb = (b.col(j).array() - mb).square().sum() / (nd - 1.0);
        const double w = 0.5 * (sa + sb);
        if (!(w > 0)) throw PsrfUndefined("zero within-chain variance in column " + std::to_string(j));
        const double grand = 0.5 * (ma + mb);
        const double b_between = nd * ((ma - grand) * (ma - grand) + (mb - grand) * (mb - grand));  // m - 1 = 1
        const double v = (nd - 1.0) / nd * w + b_between / nd;
        out(j) = std::sqrt(v / w);
    }
    return out;
}

Vector chain_psrf(const McmcChain& chain, std::size_t window) {
    const auto n = static_cast<Eigen::Index>(chain.steps());
    const auto w = static_cast<Eigen::Index>(window);
    if (w > n) throw InvalidArgument("PSRF window longer than the chain");
    return psrf(chain.states.bottomRows(w), chain.partner_states.bottomRows(w));
}

std::vector<std::size_t> thin_indices(std::size_t length, std::size_t n_keep, std::size_t skip) {
    if (n_keep == 0 || skip == 0) throw InvalidArgument("thinning needs n_keep >= 1 and skip >= 1");
    if (length < n_keep * skip)
        throw InvalidArgument("chain of length " + std::to_string(length) + " is shorter than n_keep*skip = " +
                              std::to_string(n_keep * skip));
    std::vector<std::size_t> idx(n_keep);
    for (std::size_t i = 0; i < n_keep; ++i) idx[n_keep - 1 - i] = length - 1 - i * skip;
    return idx;
}

Matrix thin_chain(const Matrix& states, std::size_t n_keep, std::size_t skip) {
    const auto idx = thin_indices(static_cast<std::size_t>(states.rows()), n_keep, skip);
    Matrix out(static_cast<Eigen::Index>(idx.size()), states.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = states.row(static_cast<Eigen::Index>(idx[i]));
    return out;
}

}  // namespace epifit
