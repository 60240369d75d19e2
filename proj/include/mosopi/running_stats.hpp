#pragma once

#include <Eigen/Dense>

namespace mosopi {

/// Streaming per-dimension mean and standard deviation (Welford), used for
/// observation normalization. Before any update the mean is 0 and the
/// standard deviation 1.
class RunningStats {
public:
    RunningStats() = default;
    explicit RunningStats(int dim);

    void update(const Eigen::VectorXd& x);

    /// (x - mean) / max(std, 1e-8).
    Eigen::VectorXd normalize(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd normalize_batch(const Eigen::MatrixXd& x) const;

    long count() const { return count_; }
    int dim() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    Eigen::VectorXd std_dev() const;

private:
    long count_ = 0;
    Eigen::VectorXd mean_;
    Eigen::VectorXd m2_;
};

} // namespace mosopi
