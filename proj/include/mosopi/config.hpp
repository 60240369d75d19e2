#pragma once

#include <limits>
#include <string>
#include <vector>

namespace mosopi {

/// How the critic is brought toward Q_pi at each update phase.
enum class EvaluationMode {
    Regressions,  ///< m successive TD regressions, target refreshed between them
    MstepRetrace  ///< one regression toward truncated-IS m-step targets
};

/// On-policy baseline settings (the MoPPO fields gamma, normalize_obs,
/// grad clipping and evaluation cadence are shared).
struct PpoSettings {
    int horizon = 2048;
    double lambda = 0.9; ///< best of {0.9, 0.95, 1.0} on Pendulum and CartPole
    double clip_ratio = 0.2;
    int epochs = 10;
    int minibatch = 64;
    double actor_lr = 3e-4;
    double value_lr = 1e-3;
};

struct MoppoConfig {
    // Hyper-parameter table rows.
    int train_freq = 150;
    int m = 5;
    int q_steps = 50;
    int pol_steps = 500;
    double clip_ratio = 0.005;
    int buffer_size = 20000;
    int batch_size = 250;
    bool normalize_obs = true;
    bool dual_q = false;
    double critic_lr = 1e-3;
    double actor_lr = 1e-4;
    double gamma = 0.99;
    bool grad_clip = true;

    // Not fixed by the table.
    double grad_clip_norm = 0.5;
    int n_expect = 8;
    int n_pol = 8;
    /// Mean policy entropy (nats) below which learning stops. NaN selects
    /// -1 x action dimension.
    double entropy_stop_threshold = std::numeric_limits<double>::quiet_NaN();
    long max_steps = 1000000;
    std::vector<int> actor_hidden{64, 64};
    std::vector<int> critic_hidden{400, 300};
    double initial_log_std = 0.0;
    EvaluationMode evaluation = EvaluationMode::Regressions;
    int eval_every = 1000;
    int eval_episodes = 5;
    /// Stop once a mean-action evaluation reaches this return (infinity: never).
    double stop_at_return = std::numeric_limits<double>::infinity();

    PpoSettings ppo;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
};

/// Hopper column of the hyper-parameter table.
MoppoConfig hopper_preset();

/// Names accepted by set_config_value, in a stable order.
std::vector<std::string> config_keys();
bool has_config_key(const std::string& key);

/// Assigns one field from its textual form. Keys are the table row names
/// ("train_freq", "clip ratio", "buffer size", "normalized obs.",
/// "dual Q-Networks", "optimizer(Q)", "optimizer(Policy)", "discount factor",
/// "gradient clipping", ...) or the snake_case names of the other fields.
/// Optimizer values may be written "Adam(1e-3)" or as a bare learning rate.
void set_config_value(MoppoConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const MoppoConfig& config, const std::string& key);

/// YAML mapping of keys to values; unknown keys are errors. Values are
/// applied on top of `base`.
MoppoConfig parse_config(const std::string& yaml_text, const MoppoConfig& base = MoppoConfig{});
MoppoConfig load_config(const std::string& path, const MoppoConfig& base = MoppoConfig{});
std::string config_to_yaml(const MoppoConfig& config);

} // namespace mosopi
