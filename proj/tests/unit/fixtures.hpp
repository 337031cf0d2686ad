#pragma once

#include <vector>

#include <Eigen/Dense>

#include "deepntk/cnn.hpp"
#include "deepntk/mlp.hpp"

namespace fixtures {

// Deep-narrow MLP with the random rows replaced by the given draws.
inline deepntk::MlpParams mlp_with_draws(deepntk::MlpConfig cfg,
                                         const std::vector<Eigen::RowVectorXd>& us,
                                         const std::vector<double>& vs) {
    cfg.depth = static_cast<int>(us.size()) + 1;
    auto p = deepntk::init_deep_narrow_mlp(cfg, 1);
    for (std::size_t j = 0; j < us.size(); ++j) {
        p.weights[j].block(cfg.d_in, 0, 1, cfg.d_in) = us[j];
        p.biases[j](cfg.d_in) = vs[j];
        p.init_u[j] = us[j];
        p.init_v[j] = vs[j];
    }
    return p;
}

inline deepntk::CnnParams cnn_with_draws(deepntk::CnnConfig cfg,
                                         const std::vector<Eigen::Matrix3d>& us,
                                         const std::vector<double>& vs) {
    cfg.depth = static_cast<int>(us.size()) + 1;
    auto p = deepntk::init_deep_narrow_cnn(cfg, 1);
    for (std::size_t j = 0; j < us.size(); ++j) {
        p.filters[j].set(1, 0, us[j]);
        p.biases[j](1) = vs[j];
        p.init_u[j] = us[j];
        p.init_v[j] = vs[j];
    }
    return p;
}

inline Eigen::Matrix3d mat3(std::initializer_list<double> v) {
    Eigen::Matrix3d m;
    auto it = v.begin();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m(a, b) = *it++;
    return m;
}

}  // namespace fixtures
