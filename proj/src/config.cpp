#include "epifit/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace epifit {

namespace {

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

struct Reader {
    std::string source;

    [[noreturn]] void fail(const YAML::Node& node, const std::string& what) const {
        throw ConfigError(source, line_of(node), what);
    }

    void require_map(const YAML::Node& node, const std::string& field) const {
        if (!node.IsMap()) fail(node, "'" + field + "' must be a mapping");
    }

    void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) const {
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) {
                std::string list;
                for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
                fail(kv.first, "unknown key '" + key + "' in " + section + " (allowed: " + list + ")");
            }
        }
    }

    template <class T>
    T scalar(const YAML::Node& node, const std::string& field) const {
        if (!node.IsScalar()) fail(node, "'" + field + "' must be a scalar");
        try {
            return node.as<T>();
        } catch (const YAML::Exception&) {
            fail(node, "'" + field + "' has an invalid value '" + node.Scalar() + "'");
        }
    }

    double number(const YAML::Node& node, const std::string& field) const {
        const double v = scalar<double>(node, field);
        if (!std::isfinite(v)) fail(node, "'" + field + "' must be finite");
        return v;
    }

    std::size_t count(const YAML::Node& node, const std::string& field) const {
        const auto v = scalar<long long>(node, field);
        if (v < 0) fail(node, "'" + field + "' must be nonnegative");
        return static_cast<std::size_t>(v);
    }

    template <class F>
    auto parse_enum(const YAML::Node& node, const std::string& field, F parse) const {
        const auto text = scalar<std::string>(node, field);
        try {
            return parse(text);
        } catch (const InvalidArgument& e) {
            fail(node, "'" + field + "': " + e.what());
        }
    }

    NoiseSpec noise(const YAML::Node& node, const std::string& field, NoiseStructure default_structure) const {
        require_map(node, field);
        check_keys(node, field, {"structure", "sigma", "seed"});
        NoiseSpec spec;
        spec.structure = default_structure;
        if (node["structure"]) spec.structure = parse_enum(node["structure"], field + ".structure", parse_noise_structure);
        if (node["sigma"]) spec.sigma = number(node["sigma"], field + ".sigma");
        if (node["seed"]) spec.seed = scalar<std::uint64_t>(node["seed"], field + ".seed");
        if (spec.sigma < 0) fail(node["sigma"], "'" + field + ".sigma' must be >= 0");
        return spec;
    }
};

Vector reference_quantities(ModelKind kind, double population) {
    switch (kind) {
        case ModelKind::seir: {
            SeirParams p = seir_reference();
            p.N = population;
            return to_quantities(p);
        }
        case ModelKind::fourtha: return to_quantities(fourtha_reference());
        case ModelKind::eaihrd: return Vector();
    }
    return Vector();
}

}  // namespace

ModelDef ExperimentConfig::make_model() const {
    ModelDef m = epifit::make_model(model, population);
    if (non_observable) m.hidden = m.state_index(*non_observable);
    return m;
}

void ExperimentConfig::validate() const {
    auto line = [&](const std::string& key) {
        const auto it = key_lines.find(key);
        return it == key_lines.end() ? 0 : it->second;
    };
    if (!(horizon > 0)) throw ConfigError(source, line("horizon"), "horizon must be positive");
    if (!(t_train > 0)) throw ConfigError(source, line("t_train"), "t_train must be positive");
    if (t_train > horizon) {
        std::ostringstream msg;
        msg << "t_train (" << t_train << ") must not exceed horizon (" << horizon << ")";
        throw ConfigError(source, line("t_train"), msg.str());
    }
    if (k == 0) throw ConfigError(source, line("k"), "k must be at least 1");
    if (estimators.empty()) throw ConfigError(source, line("estimators"), "estimators must list at least one estimator");
    if (restarts == 0) throw ConfigError(source, line("restarts"), "restarts must be at least 1");
    if (mcmc.n_keep == 0 || mcmc.skip == 0)
        throw ConfigError(source, line("mcmc"), "mcmc.n_keep and mcmc.skip must be at least 1");
    if (mcmc.max_steps < mcmc.n_keep * mcmc.skip)
        throw ConfigError(source, line("mcmc"), "mcmc.max_steps must be at least mcmc.n_keep * mcmc.skip");
    if (!(mcmc.psrf_threshold > 1.0)) throw ConfigError(source, line("mcmc"), "mcmc.psrf_threshold must exceed 1");
    if (!(sigma_L_lower > 0 && sigma_L_lower < sigma_L_upper))
        throw ConfigError(source, line("sigma_L"), "sigma_L bounds need 0 < lower < upper");
    if (model == ModelKind::seir && !(population > 0))
        throw ConfigError(source, line("population"), "population must be positive");

    const ModelDef m = make_model();
    if (exact_params.size() != static_cast<Eigen::Index>(m.n_quantities()))
        throw ConfigError(source, line("exact_params"), "exact_params must give every model quantity");
    try {
        space.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(source, line("space"), e.what());
    }
    for (std::size_t i = 0; i < space.size(); ++i) {
        if (space.fixed[i]) continue;
        const auto k_ = static_cast<Eigen::Index>(i);
        const double v = exact_params(k_);
        if (v < space.lower(k_) || v > space.upper(k_)) {
            std::ostringstream msg;
            msg << "exact_params." << space.names[i] << " = " << v << " lies outside space." << space.names[i]
                << " [" << space.lower(k_) << ", " << space.upper(k_) << "]";
            throw ConfigError(source, line("exact_params"), msg.str());
        }
    }
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
    Reader rd{source};
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source, e.mark.line + 1, e.msg);
    }
    if (!root.IsMap()) throw ConfigError(source, line_of(root), "config must be a mapping of sections");
    rd.check_keys(root, "config",
                  {"model", "population", "exact_params", "space", "data_noise", "bootstrap_noise", "estimators",
                   "t_train", "horizon", "k", "mcmc", "outputs", "seed", "objective", "restarts",
                   "replicate_restarts", "non_observable", "sigma_L"});

    ExperimentConfig cfg;
    cfg.source = source;
    for (const auto& kv : root) cfg.key_lines[kv.first.as<std::string>()] = line_of(kv.first);

    if (!root["model"]) throw ConfigError(source, 1, "missing required key 'model'");
    cfg.model = rd.parse_enum(root["model"], "model", parse_model_kind);
    if (root["population"]) cfg.population = rd.number(root["population"], "population");

    const bool seir = cfg.model == ModelKind::seir;
    const NoiseStructure default_structure = seir ? NoiseStructure::level : NoiseStructure::increment;
    cfg.data_transform = seir ? DataTransform::levels : DataTransform::increments;
    cfg.horizon = seir ? 60.0 : 180.0;
    cfg.data_noise.structure = cfg.bootstrap_noise.structure = default_structure;

    const ModelDef model = epifit::make_model(cfg.model, cfg.population);
    const auto nq = model.n_quantities();

    // Exact parameters: reference values unless overridden.
    cfg.exact_params = reference_quantities(cfg.model, cfg.population);
    std::vector<bool> given(nq, cfg.exact_params.size() == static_cast<Eigen::Index>(nq));
    if (!given[0]) cfg.exact_params = Vector::Zero(static_cast<Eigen::Index>(nq));
    if (const auto node = root["exact_params"]) {
        rd.require_map(node, "exact_params");
        rd.check_keys(node, "exact_params", std::set<std::string>(model.quantity_names.begin(), model.quantity_names.end()));
        for (const auto& kv : node) {
            const auto name = kv.first.as<std::string>();
            const auto i = model.quantity_index(name);
            cfg.exact_params(static_cast<Eigen::Index>(i)) = rd.number(kv.second, "exact_params." + name);
            given[i] = true;
        }
    }
    for (std::size_t i = 0; i < nq; ++i)
        if (!given[i])
            throw ConfigError(source, cfg.key_lines.count("exact_params") ? cfg.key_lines["exact_params"] : 1,
                              "exact_params is missing '" + model.quantity_names[i] + "'");

    // Search space: listed quantities are free or pinned; the rest are pinned at their exact value.
    for (std::size_t i = 0; i < nq; ++i) {
        const double v = cfg.exact_params(static_cast<Eigen::Index>(i));
        cfg.space.add(model.quantity_names[i], v, v, v);
    }
    if (const auto node = root["space"]) {
        rd.require_map(node, "space");
        rd.check_keys(node, "space", std::set<std::string>(model.quantity_names.begin(), model.quantity_names.end()));
        for (const auto& kv : node) {
            const auto name = kv.first.as<std::string>();
            const auto i = model.quantity_index(name);
            const auto k_ = static_cast<Eigen::Index>(i);
            const std::string field = "space." + name;
            const YAML::Node& e = kv.second;
            if (e.IsScalar()) {
                if (e.Scalar() != "fixed") rd.fail(e, "'" + field + "' must be a mapping or 'fixed'");
                continue;
            }
            rd.require_map(e, field);
            rd.check_keys(e, field, {"lower", "upper", "fixed", "transform"});
            if (e["fixed"]) {
                if (e["lower"] || e["upper"]) rd.fail(e, "'" + field + "' cannot be both fixed and bounded");
                const double v = rd.number(e["fixed"], field + ".fixed");
                cfg.space.lower(k_) = cfg.space.upper(k_) = v;
                cfg.space.fixed[i] = v;
                continue;
            }
            if (!e["lower"] || !e["upper"]) rd.fail(e, "'" + field + "' needs both lower and upper");
            cfg.space.lower(k_) = rd.number(e["lower"], field + ".lower");
            cfg.space.upper(k_) = rd.number(e["upper"], field + ".upper");
            if (!(cfg.space.lower(k_) < cfg.space.upper(k_))) rd.fail(e, "'" + field + "' needs lower < upper");
            cfg.space.fixed[i] = std::nullopt;
            cfg.space.transform[i] = ParameterSpace::auto_transform(cfg.space.lower(k_), cfg.space.upper(k_));
            if (e["transform"]) {
                const auto t = rd.scalar<std::string>(e["transform"], field + ".transform");
                if (t == "log") {
                    if (!(cfg.space.lower(k_) > 0)) rd.fail(e["transform"], "'" + field + "' log transform needs lower > 0");
                    cfg.space.transform[i] = Transform::log;
                } else if (t == "linear") {
                    cfg.space.transform[i] = Transform::linear;
                } else {
                    rd.fail(e["transform"], "'" + field + ".transform' must be 'linear' or 'log'");
                }
            }
        }
    }
    // A pinned quantity never moves, whatever its recorded bounds.
    if (cfg.space.n_free() == 0) throw ConfigError(source, cfg.key_lines.count("space") ? cfg.key_lines["space"] : 1,
                                                   "space leaves no free quantity to estimate");

    if (const auto node = root["data_noise"]) cfg.data_noise = rd.noise(node, "data_noise", default_structure);
    if (const auto node = root["bootstrap_noise"])
        cfg.bootstrap_noise = rd.noise(node, "bootstrap_noise", default_structure);

    if (const auto node = root["estimators"]) {
        if (!node.IsSequence()) rd.fail(node, "'estimators' must be a list");
        std::set<EstimatorKind> seen;
        for (const auto& e : node) {
            const auto kind = rd.parse_enum(e, "estimators", parse_estimator_kind);
            if (!seen.insert(kind).second) rd.fail(e, "estimator '" + to_string(kind) + "' listed twice");
            cfg.estimators.push_back(kind);
        }
    } else {
        cfg.estimators = {EstimatorKind::DO, EstimatorKind::MLE, EstimatorKind::MAP, EstimatorKind::MCMC};
    }

    if (root["t_train"]) cfg.t_train = rd.number(root["t_train"], "t_train");
    if (root["horizon"]) cfg.horizon = rd.number(root["horizon"], "horizon");
    if (root["k"]) cfg.k = rd.count(root["k"], "k");
    if (root["restarts"]) cfg.restarts = rd.count(root["restarts"], "restarts");
    if (root["replicate_restarts"]) cfg.replicate_restarts = rd.count(root["replicate_restarts"], "replicate_restarts");
    if (root["outputs"]) cfg.outputs = rd.scalar<std::string>(root["outputs"], "outputs");
    if (root["seed"]) cfg.seed = rd.scalar<std::uint64_t>(root["seed"], "seed");
    if (root["non_observable"]) {
        const auto name = rd.scalar<std::string>(root["non_observable"], "non_observable");
        try {
            (void)model.state_index(name);
        } catch (const InvalidArgument& e) {
            rd.fail(root["non_observable"], e.what());
        }
        cfg.non_observable = name;
    }

    if (const auto node = root["mcmc"]) {
        rd.require_map(node, "mcmc");
        rd.check_keys(node, "mcmc", {"n_keep", "skip", "psrf_threshold", "max_steps", "block"});
        if (node["n_keep"]) cfg.mcmc.n_keep = rd.count(node["n_keep"], "mcmc.n_keep");
        if (node["skip"]) cfg.mcmc.skip = rd.count(node["skip"], "mcmc.skip");
        if (node["psrf_threshold"]) cfg.mcmc.psrf_threshold = rd.number(node["psrf_threshold"], "mcmc.psrf_threshold");
        if (node["max_steps"]) cfg.mcmc.max_steps = rd.count(node["max_steps"], "mcmc.max_steps");
        if (node["block"]) cfg.mcmc.block = rd.count(node["block"], "mcmc.block");
    }

    if (const auto node = root["objective"]) {
        rd.require_map(node, "objective");
        rd.check_keys(node, "objective", {"do_kind", "data_transform"});
        if (node["do_kind"]) {
            cfg.do_objective = rd.parse_enum(node["do_kind"], "objective.do_kind", parse_objective_kind);
            if (cfg.do_objective != ObjectiveKind::log_sq && cfg.do_objective != ObjectiveKind::rel_sq)
                rd.fail(node["do_kind"], "'objective.do_kind' must be log_sq or rel_sq");
        }
        if (node["data_transform"])
            cfg.data_transform = rd.parse_enum(node["data_transform"], "objective.data_transform", parse_data_transform);
    }

    if (const auto node = root["sigma_L"]) {
        rd.require_map(node, "sigma_L");
        rd.check_keys(node, "sigma_L", {"lower", "upper", "fixed"});
        if (node["lower"]) cfg.sigma_L_lower = rd.number(node["lower"], "sigma_L.lower");
        if (node["upper"]) cfg.sigma_L_upper = rd.number(node["upper"], "sigma_L.upper");
        if (node["fixed"]) {
            cfg.sigma_L_fixed = rd.number(node["fixed"], "sigma_L.fixed");
            if (!(*cfg.sigma_L_fixed > 0)) rd.fail(node["fixed"], "'sigma_L.fixed' must be positive");
        }
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

std::map<std::string, double> load_scalar_map(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "cannot open parameter file");
    std::stringstream buf;
    buf << in.rdbuf();
    Reader rd{path};
    YAML::Node root;
    try {
        root = YAML::Load(buf.str());
    } catch (const YAML::ParserException& e) {
        throw ConfigError(path, e.mark.line + 1, e.msg);
    }
    if (!root.IsMap()) throw ConfigError(path, line_of(root), "parameter file must be a mapping of name: value");
    std::map<std::string, double> out;
    for (const auto& kv : root) {
        const auto name = kv.first.as<std::string>();
        out[name] = rd.number(kv.second, name);
    }
    return out;
}

}  // namespace epifit
