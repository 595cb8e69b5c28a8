#include "aigan/tensor.hpp"

#include <cmath>

#include "aigan/kernels.hpp"

namespace aigan {

std::int64_t Tensor::checked_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0)
            throw ShapeError("dimension sizes must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string Tensor::shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

float Tensor::max_abs() const { return kern::active().max_abs(data(), numel()); }

void Tensor::check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " differ");
}

} // namespace aigan
