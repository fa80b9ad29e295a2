#include "calens/config.hpp"

#include "calens/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace calens {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& key, const std::string& constraint) {
    if (!ok) {
        throw ArgumentError("config key '" + key + "' must satisfy " + constraint);
    }
}

double as_number(const json& v, const std::string& key) {
    if (!v.is_number()) {
        throw ArgumentError("config key '" + key + "' must be a number");
    }
    return v.get<double>();
}

int as_int(const json& v, const std::string& key) {
    if (!v.is_number_integer()) {
        throw ArgumentError("config key '" + key + "' must be an integer");
    }
    return v.get<int>();
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) {
        throw ArgumentError("config key '" + key + "' must be a boolean");
    }
    return v.get<bool>();
}

using DoubleField = double Hyperparams::*;
using IntField = int Hyperparams::*;

const std::map<std::string, DoubleField>& double_fields() {
    static const std::map<std::string, DoubleField> fields{
        {"C0", &Hyperparams::C0},
        {"b0", &Hyperparams::b0},
        {"B0", &Hyperparams::B0},
        {"alpha_sigma", &Hyperparams::alpha_sigma},
        {"beta_sigma", &Hyperparams::beta_sigma},
        {"alpha_tau", &Hyperparams::alpha_tau},
        {"beta_tau", &Hyperparams::beta_tau},
        {"alpha_gamma", &Hyperparams::alpha_gamma},
        {"beta_gamma", &Hyperparams::beta_gamma},
        {"alpha_a", &Hyperparams::alpha_a},
        {"beta_a", &Hyperparams::beta_a},
        {"a_bar", &Hyperparams::a_bar},
        {"alpha_dp", &Hyperparams::alpha_dp},
        {"mu_stilde", &Hyperparams::mu_stilde},
        {"gp_kernel_variance", &Hyperparams::gp_kernel_variance},
        {"gp_kernel_lengthscale", &Hyperparams::gp_kernel_lengthscale},
        {"mu_alpha", &Hyperparams::mu_alpha},
        {"sigma2_alpha", &Hyperparams::sigma2_alpha},
        {"mh_step_gamma", &Hyperparams::mh_step_gamma},
        {"mh_step_a", &Hyperparams::mh_step_a},
    };
    return fields;
}

const std::map<std::string, IntField>& int_fields() {
    static const std::map<std::string, IntField> fields{
        {"K_max", &Hyperparams::K_max},
        {"J_max", &Hyperparams::J_max},
        {"p_vecchia", &Hyperparams::p_vecchia},
    };
    return fields;
}

} // namespace

void Hyperparams::validate() const {
    auto positive = [](double v, const char* key) {
        require(std::isfinite(v) && v > 0.0, key, "> 0");
    };
    positive(C0, "C0");
    require(std::isfinite(b0), "b0", "finite");
    positive(B0, "B0");
    positive(alpha_sigma, "alpha_sigma");
    positive(beta_sigma, "beta_sigma");
    positive(alpha_tau, "alpha_tau");
    positive(beta_tau, "beta_tau");
    positive(alpha_gamma, "alpha_gamma");
    positive(beta_gamma, "beta_gamma");
    positive(alpha_a, "alpha_a");
    positive(beta_a, "beta_a");
    require(std::isfinite(a_bar) && a_bar >= 0.0, "a_bar", ">= 0");
    positive(alpha_dp, "alpha_dp");
    require(std::isfinite(mu_stilde), "mu_stilde", "finite");
    positive(gp_kernel_variance, "gp_kernel_variance");
    positive(gp_kernel_lengthscale, "gp_kernel_lengthscale");
    if (theta) {
        positive(*theta, "theta");
    }
    require(std::isfinite(mu_alpha), "mu_alpha", "finite");
    positive(sigma2_alpha, "sigma2_alpha");
    require(K_max >= 2, "K_max", ">= 2");
    require(J_max >= 1, "J_max", ">= 1");
    require(p_vecchia >= 1, "p_vecchia", ">= 1");
    positive(mh_step_gamma, "mh_step_gamma");
    positive(mh_step_a, "mh_step_a");
}

json to_json(const Hyperparams& h) {
    json j = json::object();
    for (const auto& [key, field] : double_fields()) {
        j[key] = h.*field;
    }
    for (const auto& [key, field] : int_fields()) {
        j[key] = h.*field;
    }
    j["theta"] = h.theta ? json(*h.theta) : json("auto");
    return j;
}

json to_json(const RunOptions& r) {
    return json{{"iters", r.iters},     {"burnin", r.burnin},           {"thin", r.thin},
                {"threads", r.threads}, {"store_draws", r.store_draws}, {"adapt", r.adapt}};
}

json to_json(const RunConfig& c) {
    json j = to_json(c.hyper);
    j["run"] = to_json(c.run);
    if (!c.sweep.empty()) {
        j["sweep"] = c.sweep;
    }
    return j;
}

void apply_overrides(Hyperparams& h, const json& j) {
    if (!j.is_object()) {
        throw ArgumentError("hyperparameter overrides must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (auto it = double_fields().find(key); it != double_fields().end()) {
            h.*(it->second) = as_number(value, key);
        } else if (auto it2 = int_fields().find(key); it2 != int_fields().end()) {
            h.*(it2->second) = as_int(value, key);
        } else if (key == "theta") {
            if (value.is_string() && value.get<std::string>() == "auto") {
                h.theta.reset();
            } else {
                h.theta = as_number(value, key);
            }
        } else {
            throw ArgumentError("unknown config key '" + key + "'");
        }
    }
}

void apply_overrides(RunOptions& r, const json& j) {
    if (!j.is_object()) {
        throw ArgumentError("config key 'run' must be a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "iters") {
            r.iters = as_int(value, "run.iters");
        } else if (key == "burnin") {
            r.burnin = as_int(value, "run.burnin");
        } else if (key == "thin") {
            r.thin = as_int(value, "run.thin");
        } else if (key == "threads") {
            r.threads = as_int(value, "run.threads");
        } else if (key == "store_draws") {
            r.store_draws = as_bool(value, "run.store_draws");
        } else if (key == "adapt") {
            r.adapt = as_bool(value, "run.adapt");
        } else {
            throw ArgumentError("unknown config key 'run." + key + "'");
        }
    }
    require(r.iters >= 1, "run.iters", ">= 1");
    require(r.burnin >= 0 && r.burnin < r.iters, "run.burnin", "0 <= burnin < iters");
    require(r.thin >= 1, "run.thin", ">= 1");
    require(r.threads >= 1, "run.threads", ">= 1");
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    bool blank = true;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) {
            blank = false;
            break;
        }
    }
    if (blank) {
        cfg.hyper.validate();
        return cfg;
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ArgumentError("config must be a JSON object");
    }
    json hyper = json::object();
    for (const auto& [key, value] : j.items()) {
        if (key == "run") {
            apply_overrides(cfg.run, value);
        } else if (key == "sweep") {
            if (!value.is_array()) {
                throw ArgumentError("config key 'sweep' must be an array of objects");
            }
            for (const auto& entry : value) {
                Hyperparams probe;
                apply_overrides(probe, entry);
                cfg.sweep.push_back(entry);
            }
        } else {
            hyper[key] = value;
        }
    }
    apply_overrides(cfg.hyper, hyper);
    cfg.hyper.validate();
    for (const auto& entry : cfg.sweep) {
        Hyperparams h = cfg.hyper;
        apply_overrides(h, entry);
        h.validate();
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ArgumentError("cannot open config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<RunConfig> expand_sweep(const RunConfig& base) {
    if (base.sweep.empty()) {
        return {base};
    }
    std::vector<RunConfig> out;
    out.reserve(base.sweep.size());
    for (const auto& entry : base.sweep) {
        RunConfig c;
        c.hyper = base.hyper;
        c.run = base.run;
        apply_overrides(c.hyper, entry);
        c.hyper.validate();
        out.push_back(std::move(c));
    }
    return out;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const Hyperparams& h) {
    return fnv1a_hex(to_json(h).dump());
}

} // namespace calens
