#include "hyperimage/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace hyperimage {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw std::invalid_argument("tensor extent must be positive");
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

RealTensor::RealTensor(std::vector<std::size_t> s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

RealTensor::RealTensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), data(shape_numel(shape), fill) {}

bool RealTensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace hyperimage
