#pragma once

#include <Eigen/Core>

namespace avatar {

/// Row-major pixel grid; `data` holds one row per pixel (index y·width + x)
/// and one column per channel.
struct Image {
    int width = 0;
    int height = 0;
    Eigen::ArrayXXd data;

    Image() = default;
    Image(int w, int h, int channels, double fill = 0.0)
        : width(w), height(h), data(Eigen::ArrayXXd::Constant(static_cast<Eigen::Index>(w) * h, channels, fill))
    {}

    int channels() const { return static_cast<int>(data.cols()); }
    Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
    double& at(int x, int y, int c) { return data(index(x, y), c); }
    double at(int x, int y, int c) const { return data(index(x, y), c); }
};

}  // namespace avatar
