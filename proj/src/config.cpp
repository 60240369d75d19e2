#include "mosopi/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace mosopi {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

long parse_integer(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    // "20k" as written in the hyper-parameter table.
    long scale = 1;
    if (!t.empty() && (t.back() == 'k' || t.back() == 'K')) {
        scale = 1000;
        t.pop_back();
    }
    std::size_t used = 0;
    long value = 0;
    try {
        value = std::stol(t, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config '" + key + "': expected an integer, got '" + text + "'");
    }
    if (used != t.size()) throw std::invalid_argument("config '" + key + "': expected an integer, got '" + text + "'");
    return value * scale;
}

double parse_real(const std::string& key, const std::string& text) {
    const std::string t = lower(trim(text));
    if (t == "inf" || t == "+inf" || t == "infinity") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    if (t == "nan" || t == "auto" || t == "default") return std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(t, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config '" + key + "': expected a number, got '" + text + "'");
    }
    if (used != t.size()) throw std::invalid_argument("config '" + key + "': expected a number, got '" + text + "'");
    return value;
}

bool parse_flag(const std::string& key, const std::string& text) {
    const std::string t = lower(trim(text));
    if (t == "yes" || t == "true" || t == "on" || t == "1") return true;
    if (t == "no" || t == "false" || t == "off" || t == "0") return false;
    throw std::invalid_argument("config '" + key + "': expected Yes/No, got '" + text + "'");
}

double parse_learning_rate(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    const std::string l = lower(t);
    if (l.rfind("adam(", 0) == 0 && l.back() == ')') return parse_real(key, t.substr(5, t.size() - 6));
    return parse_real(key, t);
}

std::vector<int> parse_widths(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    if (!t.empty() && (t.front() == '[' || t.front() == '(')) t = t.substr(1);
    if (!t.empty() && (t.back() == ']' || t.back() == ')')) t.pop_back();
    std::vector<int> widths;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        widths.push_back(static_cast<int>(parse_integer(key, item)));
    }
    return widths;
}

std::string format_real(double v) {
    if (std::isnan(v)) return "auto";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::string format_widths(const std::vector<int>& widths) {
    std::string s = "[";
    for (std::size_t i = 0; i < widths.size(); ++i) s += (i ? ", " : "") + std::to_string(widths[i]);
    return s + "]";
}

struct Field {
    std::string key;
    std::function<void(MoppoConfig&, const std::string&)> set;
    std::function<std::string(const MoppoConfig&)> get;
};

template <typename T>
Field integer_field(const std::string& key, T MoppoConfig::*member) {
    return {key, [key, member](MoppoConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_integer(key, v)); },
            [member](const MoppoConfig& c) { return std::to_string(c.*member); }};
}

Field real_field(const std::string& key, double MoppoConfig::*member) {
    return {key, [key, member](MoppoConfig& c, const std::string& v) { c.*member = parse_real(key, v); },
            [member](const MoppoConfig& c) { return format_real(c.*member); }};
}

Field flag_field(const std::string& key, bool MoppoConfig::*member) {
    return {key, [key, member](MoppoConfig& c, const std::string& v) { c.*member = parse_flag(key, v); },
            [member](const MoppoConfig& c) { return std::string(c.*member ? "Yes" : "No"); }};
}

Field widths_field(const std::string& key, std::vector<int> MoppoConfig::*member) {
    return {key, [key, member](MoppoConfig& c, const std::string& v) { c.*member = parse_widths(key, v); },
            [member](const MoppoConfig& c) { return format_widths(c.*member); }};
}

template <typename T>
Field ppo_integer(const std::string& key, T PpoSettings::*member) {
    return {key, [key, member](MoppoConfig& c, const std::string& v) { c.ppo.*member = static_cast<T>(parse_integer(key, v)); },
            [member](const MoppoConfig& c) { return std::to_string(c.ppo.*member); }};
}

Field ppo_real(const std::string& key, double PpoSettings::*member) {
    return {key, [key, member](MoppoConfig& c, const std::string& v) { c.ppo.*member = parse_real(key, v); },
            [member](const MoppoConfig& c) { return format_real(c.ppo.*member); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(integer_field("train_freq", &MoppoConfig::train_freq));
        f.push_back(integer_field("m", &MoppoConfig::m));
        f.push_back(integer_field("q_steps", &MoppoConfig::q_steps));
        f.push_back(integer_field("pol_steps", &MoppoConfig::pol_steps));
        f.push_back(real_field("clip ratio", &MoppoConfig::clip_ratio));
        f.push_back(integer_field("buffer size", &MoppoConfig::buffer_size));
        f.push_back(integer_field("batch size", &MoppoConfig::batch_size));
        f.push_back(flag_field("normalized obs.", &MoppoConfig::normalize_obs));
        f.push_back(flag_field("dual Q-Networks", &MoppoConfig::dual_q));
        f.push_back({"optimizer(Q)",
                     [](MoppoConfig& c, const std::string& v) { c.critic_lr = parse_learning_rate("optimizer(Q)", v); },
                     [](const MoppoConfig& c) { return "Adam(" + format_real(c.critic_lr) + ")"; }});
        f.push_back({"optimizer(Policy)",
                     [](MoppoConfig& c, const std::string& v) { c.actor_lr = parse_learning_rate("optimizer(Policy)", v); },
                     [](const MoppoConfig& c) { return "Adam(" + format_real(c.actor_lr) + ")"; }});
        f.push_back(real_field("discount factor", &MoppoConfig::gamma));
        f.push_back(flag_field("gradient clipping", &MoppoConfig::grad_clip));

        f.push_back(real_field("grad_clip_norm", &MoppoConfig::grad_clip_norm));
        f.push_back(integer_field("n_expect", &MoppoConfig::n_expect));
        f.push_back(integer_field("n_pol", &MoppoConfig::n_pol));
        f.push_back(real_field("entropy_stop_threshold", &MoppoConfig::entropy_stop_threshold));
        f.push_back(integer_field("max_steps", &MoppoConfig::max_steps));
        f.push_back(widths_field("actor_hidden", &MoppoConfig::actor_hidden));
        f.push_back(widths_field("critic_hidden", &MoppoConfig::critic_hidden));
        f.push_back(real_field("initial_log_std", &MoppoConfig::initial_log_std));
        f.push_back({"evaluation",
                     [](MoppoConfig& c, const std::string& v) {
                         const std::string t = lower(trim(v));
                         if (t == "regressions") {
                             c.evaluation = EvaluationMode::Regressions;
                         } else if (t == "mstep_retrace") {
                             c.evaluation = EvaluationMode::MstepRetrace;
                         } else {
                             throw std::invalid_argument("config 'evaluation': expected regressions or mstep_retrace, got '" +
                                                         v + "'");
                         }
                     },
                     [](const MoppoConfig& c) {
                         return std::string(c.evaluation == EvaluationMode::Regressions ? "regressions" : "mstep_retrace");
                     }});
        f.push_back(integer_field("eval_every", &MoppoConfig::eval_every));
        f.push_back(integer_field("eval_episodes", &MoppoConfig::eval_episodes));
        f.push_back(real_field("stop_at_return", &MoppoConfig::stop_at_return));

        f.push_back(ppo_integer("ppo_horizon", &PpoSettings::horizon));
        f.push_back(ppo_real("ppo_lambda", &PpoSettings::lambda));
        f.push_back(ppo_real("ppo_clip_ratio", &PpoSettings::clip_ratio));
        f.push_back(ppo_integer("ppo_epochs", &PpoSettings::epochs));
        f.push_back(ppo_integer("ppo_minibatch", &PpoSettings::minibatch));
        f.push_back(ppo_real("ppo_actor_lr", &PpoSettings::actor_lr));
        f.push_back(ppo_real("ppo_value_lr", &PpoSettings::value_lr));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const Field& f : fields()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument("invalid config: " + message);
}

} // namespace

void MoppoConfig::validate() const {
    require(train_freq >= 1, "train_freq must be >= 1");
    require(m >= 1, "m must be >= 1");
    require(q_steps >= 1, "q_steps must be >= 1");
    require(pol_steps >= 0, "pol_steps must be >= 0");
    require(clip_ratio > 0.0, "clip ratio must be > 0");
    require(buffer_size >= 1, "buffer size must be >= 1");
    require(batch_size >= 1, "batch size must be >= 1");
    require(gamma > 0.0 && gamma < 1.0, "discount factor must lie in (0, 1)");
    require(critic_lr > 0.0 && actor_lr > 0.0, "learning rates must be > 0");
    require(!grad_clip || grad_clip_norm > 0.0, "grad_clip_norm must be > 0 when clipping");
    require(n_expect >= 1 && n_pol >= 1, "n_expect and n_pol must be >= 1");
    require(max_steps >= 1, "max_steps must be >= 1");
    require(eval_every >= 1 && eval_episodes >= 1, "eval_every and eval_episodes must be >= 1");
    for (const int w : actor_hidden) require(w >= 1, "actor_hidden widths must be >= 1");
    for (const int w : critic_hidden) require(w >= 1, "critic_hidden widths must be >= 1");
    require(ppo.horizon >= 1 && ppo.epochs >= 1 && ppo.minibatch >= 1, "ppo counts must be >= 1");
    require(ppo.clip_ratio > 0.0, "ppo_clip_ratio must be > 0");
    require(ppo.lambda >= 0.0 && ppo.lambda <= 1.0, "ppo_lambda must lie in [0, 1]");
    require(ppo.actor_lr > 0.0 && ppo.value_lr > 0.0, "ppo learning rates must be > 0");
}

MoppoConfig hopper_preset() {
    MoppoConfig c;
    c.train_freq = 150;
    c.m = 5;
    c.q_steps = 50;
    c.pol_steps = 500;
    c.clip_ratio = 0.005;
    c.buffer_size = 20000;
    c.batch_size = 250;
    c.normalize_obs = true;
    c.dual_q = false;
    c.critic_lr = 1e-3;
    c.actor_lr = 1e-4;
    c.gamma = 0.99;
    c.grad_clip = true;
    return c;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const Field& f : fields()) keys.push_back(f.key);
    return keys;
}

bool has_config_key(const std::string& key) { return find_field(key) != nullptr; }

void set_config_value(MoppoConfig& config, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (f == nullptr) throw std::invalid_argument("unknown config key '" + key + "'");
    f->set(config, value);
}

std::string get_config_value(const MoppoConfig& config, const std::string& key) {
    const Field* f = find_field(key);
    if (f == nullptr) throw std::invalid_argument("unknown config key '" + key + "'");
    return f->get(config);
}

MoppoConfig parse_config(const std::string& yaml_text, const MoppoConfig& base) {
    MoppoConfig config = base;
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw std::invalid_argument(std::string("config is not valid YAML: ") + e.what());
    }
    if (root.IsNull()) return config;
    if (!root.IsMap()) throw std::invalid_argument("config must be a mapping of keys to values");
    for (const auto& entry : root) {
        const std::string key = entry.first.as<std::string>();
        const YAML::Node& value = entry.second;
        std::string text;
        if (value.IsSequence()) {
            for (std::size_t i = 0; i < value.size(); ++i) text += (i ? "," : "") + value[i].as<std::string>();
        } else if (value.IsScalar()) {
            text = value.as<std::string>();
        } else {
            throw std::invalid_argument("config '" + key + "': expected a scalar or a list");
        }
        set_config_value(config, key, text);
    }
    config.validate();
    return config;
}

MoppoConfig load_config(const std::string& path, const MoppoConfig& base) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    std::stringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), base);
}

std::string config_to_yaml(const MoppoConfig& config) {
    std::string out;
    for (const Field& f : fields()) {
        // Quote keys that contain YAML punctuation.
        const bool plain = f.key.find_first_of(" .()") == std::string::npos;
        out += (plain ? f.key : "\"" + f.key + "\"") + ": " + f.get(config) + "\n";
    }
    return out;
}

} // namespace mosopi
