#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace trustbench {

using Shape = std::vector<int>;

inline std::size_t element_count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

std::string shape_string(const Shape& s); // e.g. "1024x2x64"

/// Dense row-major binary32 array.
struct Tensor {
    Shape shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(Shape s, float fill = 0.0f) : shape(std::move(s)), data(element_count(shape), fill) {}
    Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), data(std::move(values)) {}

    std::size_t size() const { return data.size(); }
    float& operator[](std::size_t i) { return data[i]; }
    float operator[](std::size_t i) const { return data[i]; }
    std::span<const float> view() const { return data; }
    std::span<float> view() { return data; }
};

/// Bitwise equality of shape and every stored bit pattern (NaN payloads included).
bool bit_equal(const Tensor& a, const Tensor& b);

} // namespace trustbench
