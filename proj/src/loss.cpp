#include "epifit/loss.hpp"

#include "epifit/error.hpp"

#include <cmath>

namespace epifit {

ObjectiveKind parse_objective_kind(const std::string& name) {
    if (name == "log_sq") return ObjectiveKind::log_sq;
    if (name == "rel_sq") return ObjectiveKind::rel_sq;
    if (name == "neg_log_likelihood") return ObjectiveKind::neg_log_likelihood;
    if (name == "neg_log_posterior") return ObjectiveKind::neg_log_posterior;
    throw InvalidArgument("unknown objective kind '" + name + "'");
}

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::log_sq: return "log_sq";
        case ObjectiveKind::rel_sq: return "rel_sq";
        case ObjectiveKind::neg_log_likelihood: return "neg_log_likelihood";
        case ObjectiveKind::neg_log_posterior: return "neg_log_posterior";
    }
    return "?";
}

DataTransform parse_data_transform(const std::string& name) {
    if (name == "levels") return DataTransform::levels;
    if (name == "increments") return DataTransform::increments;
    throw InvalidArgument("unknown data transform '" + name + "' (expected levels or increments)");
}

std::string to_string(DataTransform t) {
    return t == DataTransform::levels ? "levels" : "increments";
}

PriorSpec PriorSpec::from_bounds(const Vector& lower, const Vector& upper) {
    if (lower.size() != upper.size()) throw InvalidArgument("prior bounds differ in length");
    for (Eigen::Index j = 0; j < lower.size(); ++j)
        if (!(upper(j) > lower(j))) throw InvalidArgument("prior needs ub > lb for every parameter");
    return PriorSpec{(lower + upper) / 2.0, (upper - lower) / 6.0};
}

double PriorSpec::neg_log_prior(const Vector& theta) const {
    if (theta.size() != mean.size()) throw InvalidArgument("prior and parameter vector differ in length");
    return (((theta - mean).array() / stddev.array()).square() / 2.0).sum();
}

TimeSeries TrainingWindow::apply(const TimeSeries& series) const {
    const double t_end = t_init + t_train;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < series.times.size(); ++i) {
        const double t = series.times[i];
        if (t >= t_init - 1e-9 && t <= t_end + 1e-9) keep.push_back(static_cast<Eigen::Index>(i));
    }
    TimeSeries out;
    out.values.resize(static_cast<Eigen::Index>(keep.size()), series.values.cols());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        out.times.push_back(series.times[static_cast<std::size_t>(keep[r])]);
        out.values.row(static_cast<Eigen::Index>(r)) = series.values.row(keep[r]);
    }
    return out;
}

namespace {

void check_aligned(const Vector& data, const Vector& model) {
    if (data.size() != model.size())
        throw InvalidArgument("data and model series differ in length");
}

}  // namespace

double log_sq_loss(const Vector& data, const Vector& model) {
    check_aligned(data, model);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (!(data(i) > 0)) throw ObjectiveUndefined(static_cast<std::size_t>(i), "nonpositive data value");
        if (!(model(i) > 0)) throw ObjectiveUndefined(static_cast<std::size_t>(i), "nonpositive model value");
        const double r = std::log(data(i)) - std::log(model(i));
        sum += r * r;
    }
    return sum;
}

double rel_sq_loss(const Vector& data, const Vector& model) {
    check_aligned(data, model);
    double sum = 0.0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (model(i) == 0.0 || !std::isfinite(model(i)))
            throw ObjectiveUndefined(static_cast<std::size_t>(i), "zero model value");
        const double r = data(i) / model(i) - 1.0;
        sum += r * r;
    }
    return sum;
}

double neg_log_likelihood(const Vector& data, const Vector& model, double sigma_L) {
    check_aligned(data, model);
    if (!(sigma_L > 0)) throw InvalidArgument("sigma_L must be positive");
    double log_sum = 0.0;
    for (Eigen::Index i = 0; i < model.size(); ++i) {
        if (!(model(i) > 0)) throw ObjectiveUndefined(static_cast<std::size_t>(i), "nonpositive model value");
        log_sum += std::log(model(i));
    }
    const auto n = static_cast<double>(data.size());
    return n * std::log(sigma_L) + log_sum + rel_sq_loss(data, model) / (2.0 * sigma_L * sigma_L);
}

double neg_log_posterior(const Vector& data, const Vector& model, double sigma_L, const Vector& theta,
                         const PriorSpec& prior) {
    return neg_log_likelihood(data, model, sigma_L) + prior.neg_log_prior(theta);
}

TimeSeries increments_view(const TimeSeries& series) {
    if (series.size() < 2) throw InvalidArgument("increments need at least two points");
    TimeSeries out;
    out.times.assign(series.times.begin() + 1, series.times.end());
    const Eigen::Index n = series.values.rows();
    out.values = series.values.bottomRows(n - 1) - series.values.topRows(n - 1);
    return out;
}

ObjectiveValue evaluate_objective(const ObjectiveSpec& spec, const TimeSeries& data,
                                  const TimeSeries& model, double sigma_L, const Vector& theta,
                                  const PriorSpec* prior) {
    if (data.values.cols() != 1 || model.values.cols() != 1)
        throw InvalidArgument("objectives compare single-column series");
    if (data.size() != model.size()) throw InvalidArgument("data and model windows differ in length");

    Vector d = data.values.col(0);
    Vector m = model.values.col(0);
    ObjectiveValue result;
    if (spec.data_transform == DataTransform::increments) {
        const Vector dd = increments_view(data).values.col(0);
        const Vector dm = increments_view(model).values.col(0);
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < dm.size(); ++i) {
            if (std::abs(dm(i)) < zero_increment_threshold)
                ++result.excluded;
            else
                keep.push_back(i);
        }
        d.resize(static_cast<Eigen::Index>(keep.size()));
        m.resize(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t k = 0; k < keep.size(); ++k) {
            d(static_cast<Eigen::Index>(k)) = dd(keep[k]);
            m(static_cast<Eigen::Index>(k)) = dm(keep[k]);
        }
    }

    switch (spec.kind) {
        case ObjectiveKind::log_sq: result.value = log_sq_loss(d, m); break;
        case ObjectiveKind::rel_sq: result.value = rel_sq_loss(d, m); break;
        case ObjectiveKind::neg_log_likelihood: result.value = neg_log_likelihood(d, m, sigma_L); break;
        case ObjectiveKind::neg_log_posterior:
            if (prior == nullptr) throw InvalidArgument("posterior objective needs a prior");
            result.value = neg_log_posterior(d, m, sigma_L, theta, *prior);
            break;
    }
    return result;
}

}  // namespace epifit
