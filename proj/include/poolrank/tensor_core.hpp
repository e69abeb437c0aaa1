#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace poolrank {

/// Dense real matrix, row-major so that `data()` follows the flattening used
/// throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Default ceiling on the number of elements any single tensor or matrix may
/// hold (2^24).
inline constexpr std::size_t kDefaultCapacity = std::size_t{1} << 24;

/// Raised when an operation would materialize more elements than allowed.
class CapacityError : public std::runtime_error {
public:
    CapacityError(const std::string& what, std::size_t requested, std::size_t limit);

    std::size_t requested() const noexcept { return requested_; }
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t requested_;
    std::size_t limit_;
};

/// Raised by linear-algebra routines on inputs they cannot process
/// (non-finite entries, non-integral entries, SVD failure).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Multiplies extents, saturating at SIZE_MAX instead of wrapping.
std::size_t checked_product(std::span<const std::size_t> extents);

/// Dense tensor of order N >= 1. Entry (d_1..d_N) (zero-based here) lives at
/// offset sum_t d_t * prod_{t'>t} dims[t'].
class Tensor {
public:
    explicit Tensor(std::vector<std::size_t> dims);
    Tensor(std::vector<std::size_t> dims, std::vector<double> data);

    /// Order-1, dim-1 tensor holding `value`.
    static Tensor scalar(double value);

    std::size_t order() const noexcept { return dims_.size(); }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    std::size_t offset(std::span<const std::size_t> index) const;
    double at(std::span<const std::size_t> index) const { return data_[offset(index)]; }
    double& at(std::span<const std::size_t> index) { return data_[offset(index)]; }

    Tensor& operator*=(double s);
    Tensor& operator+=(const Tensor& other);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

/// Ordered pair (I, J) of disjoint, strictly increasing 1-based index sets
/// whose union is {1..n}. Either side may be empty.
class Partition {
public:
    Partition() = default;

    /// Validates and stores (I, J). Throws std::invalid_argument on overlap,
    /// gaps, or out-of-range indexes.
    Partition(std::size_t n, std::vector<int> i_set, std::vector<int> j_set);

    /// J is taken as the complement of I in {1..n}.
    static Partition from_i(std::size_t n, std::vector<int> i_set);

    std::size_t n() const noexcept { return n_; }
    const std::vector<int>& i_set() const noexcept { return i_; }
    const std::vector<int>& j_set() const noexcept { return j_; }

    /// true when index (1-based) is on the I side.
    bool in_i(int index) const;

    friend bool operator==(const Partition&, const Partition&) = default;

private:
    std::size_t n_ = 0;
    std::vector<int> i_;
    std::vector<int> j_;
};

/// Outer product generalized to tensors: order(out) = order(a) + order(b).
Tensor tensor_product(const Tensor& a, const Tensor& b,
                      std::size_t max_elements = kDefaultCapacity);

/// Matricization w.r.t. (I, J). Empty I gives a single row, empty J a single
/// column.
Matrix matricize(const Tensor& a, const Partition& p);

/// Kronecker product; A_ij B_kl lands at row i*rows(B)+k, col j*cols(B)+l.
Matrix kronecker(const Matrix& a, const Matrix& b,
                 std::size_t max_elements = kDefaultCapacity);

/// Singular values in descending order, length min(rows, cols).
std::vector<double> singular_values(const Matrix& m);

/// Number of singular values strictly above rel_tol * sigma_1.
int numerical_rank(const Matrix& m, double rel_tol = 1e-9);

/// Rank over the rationals by fraction-free (Bareiss) elimination. Every entry
/// must be an integer of magnitude at most 2^53.
int exact_rank_integer(const Matrix& m);

}  // namespace poolrank
