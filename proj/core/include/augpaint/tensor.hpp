#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "augpaint/errors.hpp"

namespace augpaint {

struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    std::int64_t numel() const {
        return std::int64_t(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Dense float32 tensor in NCHW layout, row-major, value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, float fill = 0.0f);

    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor full(Shape s, float v) { return Tensor(s, v); }

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    float& at(int n, int c, int h, int w) {
        return data_[idx(n, c, h, w)];
    }
    float at(int n, int c, int h, int w) const {
        return data_[idx(n, c, h, w)];
    }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    void fill(float v);
    bool all_finite() const;

    // Elementwise max-abs difference; shapes must match.
    static float max_abs_diff(const Tensor& a, const Tensor& b);
    // Exact elementwise equality (bitwise for finite floats).
    static bool bitwise_equal(const Tensor& a, const Tensor& b);

private:
    std::int64_t idx(int n, int c, int h, int w) const {
        return ((std::int64_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    Shape shape_{};
    std::vector<float> data_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace augpaint
