#include "augpaint/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace augpaint {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor::Tensor(Shape s, float fill) : shape_(s) {
    if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
        throw ShapeError("tensor dims must be positive, got " + s.str());
    }
    data_.assign(static_cast<std::size_t>(s.numel()), fill);
}

void Tensor::fill(float v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Tensor::all_finite() const {
    for (float x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

float Tensor::max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    float m = 0.0f;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

bool Tensor::bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) return false;
    return std::memcmp(a.data(), b.data(), sizeof(float) * a.size()) == 0;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() +
                         " vs " + b.shape().str());
    }
}

}  // namespace augpaint
