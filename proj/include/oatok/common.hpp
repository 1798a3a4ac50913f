// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oatok {

// Error hierarchy. Every failure mode surfaced by the toolkit derives from
// oatok::Error so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class BoundsError : public Error { public: using Error::Error; };
class InvalidInputError : public Error { public: using Error::Error; };
class VocabularyError : public Error { public: using Error::Error; };
class TrainingError : public Error { public: using Error::Error; };
class StateError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class FeatureDisabledError : public Error { public: using Error::Error; };
class NotApplicableError : public Error { public: using Error::Error; };
/// A policy, tokenizer and environment that do not fit together.
class BindingError : public Error { public: using Error::Error; };

class DivergenceError : public TrainingError {
public:
    DivergenceError(std::size_t step, double loss)
        : TrainingError("non-finite loss " + std::to_string(loss) + " at step " + std::to_string(step)),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// H_a x D_a window of continuous actions. Rows are time steps, columns are
/// action channels.
class ActionChunk {
public:
    ActionChunk() = default;
    ActionChunk(std::size_t horizon, std::size_t dims, double fill = 0.0) : values_(horizon, dims, fill) {}
    explicit ActionChunk(Matrix values) : values_(std::move(values)) {}

    std::size_t horizon() const noexcept { return values_.rows(); }
    std::size_t dims() const noexcept { return values_.cols(); }

    double& operator()(std::size_t t, std::size_t d) { return values_(t, d); }
    double operator()(std::size_t t, std::size_t d) const { return values_(t, d); }

    const Matrix& values() const noexcept { return values_; }
    Matrix& values() noexcept { return values_; }

    bool all_finite() const;
    bool operator==(const ActionChunk&) const = default;

private:
    Matrix values_;
};

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

/// Mean squared error over all entries; shapes must match.
double mse(const ActionChunk& a, const ActionChunk& b);

}  // namespace oatok
