#include "orthodistill/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "orthodistill/util.hpp"

namespace orthodistill {

namespace {
std::size_t extent_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(extent_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != extent_product(shape_))
        throw std::invalid_argument(cat("tensor: data length ", data_.size(),
                                        " does not match shape ", shape_str()));
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::invalid_argument(cat("tensor: rows() on rank-", rank(), " tensor"));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::invalid_argument(cat("tensor: cols() on rank-", rank(), " tensor"));
    return shape_[1];
}

double Tensor::value() const {
    if (!is_scalar()) throw std::invalid_argument(cat("tensor: value() on non-scalar ", shape_str()));
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    if (shape_.empty()) return "scalar";
    std::string s;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape_[i]);
    }
    return s;
}

}  // namespace orthodistill
