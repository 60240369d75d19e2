#include "mosopi/running_stats.hpp"

#include <stdexcept>

namespace mosopi {

RunningStats::RunningStats(int dim) : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

void RunningStats::update(const Eigen::VectorXd& x) {
    if (x.size() != mean_.size()) throw std::invalid_argument("RunningStats: dimension mismatch");
    ++count_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_.array() += delta.array() * (x - mean_).array();
}

Eigen::VectorXd RunningStats::std_dev() const {
    if (count_ < 2) return Eigen::VectorXd::Ones(mean_.size());
    return (m2_ / static_cast<double>(count_)).array().sqrt();
}

Eigen::VectorXd RunningStats::normalize(const Eigen::VectorXd& x) const {
    if (x.size() != mean_.size()) throw std::invalid_argument("RunningStats: dimension mismatch");
    return (x - mean_).array() / std_dev().array().max(1e-8);
}

Eigen::MatrixXd RunningStats::normalize_batch(const Eigen::MatrixXd& x) const {
    if (x.rows() != mean_.size()) throw std::invalid_argument("RunningStats: dimension mismatch");
    const Eigen::ArrayXd inv = std_dev().array().max(1e-8).inverse();
    return ((x.colwise() - mean_).array().colwise() * inv).matrix();
}

} // namespace mosopi
