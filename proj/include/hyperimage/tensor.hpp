#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hyperimage {

// Dense row-major n-dimensional array of 64-bit reals. Single value carrier
// for images, patches, feature grids and network weights.
struct RealTensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    RealTensor() = default;
    explicit RealTensor(std::vector<std::size_t> s);
    RealTensor(std::vector<std::size_t> s, double fill);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool same_shape(const RealTensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace hyperimage
