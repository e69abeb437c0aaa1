#include "poolrank/tensor_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/QR>
#include <Eigen/SVD>
#include <boost/multiprecision/cpp_int.hpp>

namespace poolrank {

namespace {

std::string describe_capacity(const std::string& what, std::size_t requested, std::size_t limit) {
    return what + ": " + std::to_string(requested) + " elements requested, limit is " +
           std::to_string(limit);
}

void require_capacity(const char* what, std::size_t requested, std::size_t limit) {
    if (requested > limit) {
        throw CapacityError(what, requested, limit);
    }
}

void check_sorted_range(const std::vector<int>& s, std::size_t n, const char* side) {
    for (std::size_t t = 0; t < s.size(); ++t) {
        if (s[t] < 1 || static_cast<std::size_t>(s[t]) > n) {
            throw std::invalid_argument(std::string("partition: index out of range on side ") + side);
        }
        if (t > 0 && s[t] <= s[t - 1]) {
            throw std::invalid_argument(std::string("partition: side ") + side +
                                        " is not strictly increasing");
        }
    }
}

}  // namespace

CapacityError::CapacityError(const std::string& what, std::size_t requested, std::size_t limit)
    : std::runtime_error(describe_capacity(what, requested, limit)),
      requested_(requested),
      limit_(limit) {}

std::size_t checked_product(std::span<const std::size_t> extents) {
    std::size_t total = 1;
    for (std::size_t e : extents) {
        if (e != 0 && total > std::numeric_limits<std::size_t>::max() / e) {
            return std::numeric_limits<std::size_t>::max();
        }
        total *= e;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) {
        throw std::invalid_argument("tensor: order 0 is not allowed");
    }
    if (std::find(dims_.begin(), dims_.end(), 0u) != dims_.end()) {
        throw std::invalid_argument("tensor: every dimension must be positive");
    }
    data_.assign(checked_product(dims_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data) : Tensor(std::move(dims)) {
    if (data.size() != data_.size()) {
        throw std::invalid_argument("tensor: data length does not match product of dims");
    }
    data_ = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
    if (index.size() != dims_.size()) {
        throw std::invalid_argument("tensor: index has wrong order");
    }
    std::size_t off = 0;
    for (std::size_t t = 0; t < dims_.size(); ++t) {
        if (index[t] >= dims_[t]) {
            throw std::out_of_range("tensor: index out of range");
        }
        off = off * dims_[t] + index[t];
    }
    return off;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.dims_ != dims_) {
        throw std::invalid_argument("tensor: shape mismatch in +=");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

// ---------------------------------------------------------------------------
// Partition

Partition::Partition(std::size_t n, std::vector<int> i_set, std::vector<int> j_set)
    : n_(n), i_(std::move(i_set)), j_(std::move(j_set)) {
    check_sorted_range(i_, n_, "I");
    check_sorted_range(j_, n_, "J");
    if (i_.size() + j_.size() != n_) {
        throw std::invalid_argument("partition: I and J do not cover {1..n}");
    }
    std::vector<int> seen(n_ + 1, 0);
    for (int v : i_) seen[v]++;
    for (int v : j_) {
        if (seen[v]++) throw std::invalid_argument("partition: I and J overlap");
    }
}

Partition Partition::from_i(std::size_t n, std::vector<int> i_set) {
    std::sort(i_set.begin(), i_set.end());
    std::vector<int> j;
    std::size_t t = 0;
    for (int v = 1; v <= static_cast<int>(n); ++v) {
        if (t < i_set.size() && i_set[t] == v) {
            ++t;
        } else {
            j.push_back(v);
        }
    }
    return Partition(n, std::move(i_set), std::move(j));
}

bool Partition::in_i(int index) const { return std::binary_search(i_.begin(), i_.end(), index); }

// ---------------------------------------------------------------------------
// Operations

Tensor tensor_product(const Tensor& a, const Tensor& b, std::size_t max_elements) {
    std::size_t extents[2] = {a.size(), b.size()};
    require_capacity("tensor_product", checked_product(extents), max_elements);

    std::vector<std::size_t> dims = a.dims();
    dims.insert(dims.end(), b.dims().begin(), b.dims().end());
    Tensor out(std::move(dims));
    auto da = a.data();
    auto db = b.data();
    auto dout = out.data();
    for (std::size_t i = 0; i < da.size(); ++i) {
        for (std::size_t j = 0; j < db.size(); ++j) {
            dout[i * db.size() + j] = da[i] * db[j];
        }
    }
    return out;
}

Matrix matricize(const Tensor& a, const Partition& p) {
    const auto& dims = a.dims();
    const std::size_t order = dims.size();
    if (p.n() != order) {
        throw std::invalid_argument("matricize: partition size " + std::to_string(p.n()) +
                                    " does not match tensor order " + std::to_string(order));
    }

    // Row / column stride contributed by each mode.
    std::vector<std::size_t> row_stride(order, 0), col_stride(order, 0);
    std::size_t rows = 1, cols = 1;
    for (auto it = p.i_set().rbegin(); it != p.i_set().rend(); ++it) {
        row_stride[*it - 1] = rows;
        rows *= dims[*it - 1];
    }
    for (auto it = p.j_set().rbegin(); it != p.j_set().rend(); ++it) {
        col_stride[*it - 1] = cols;
        cols *= dims[*it - 1];
    }

    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<std::size_t> idx(order, 0);
    std::size_t r = 0, c = 0;
    auto src = a.data();
    for (std::size_t off = 0; off < src.size(); ++off) {
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = src[off];
        // Odometer increment, last mode fastest.
        for (std::size_t t = order; t-- > 0;) {
            if (++idx[t] < dims[t]) {
                r += row_stride[t];
                c += col_stride[t];
                break;
            }
            r -= row_stride[t] * (dims[t] - 1);
            c -= col_stride[t] * (dims[t] - 1);
            idx[t] = 0;
        }
    }
    return out;
}

Matrix kronecker(const Matrix& a, const Matrix& b, std::size_t max_elements) {
    std::size_t extents[4] = {static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()),
                              static_cast<std::size_t>(b.rows()), static_cast<std::size_t>(b.cols())};
    require_capacity("kronecker", checked_product(extents), max_elements);

    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// Column-pivoted QR first, then one-sided Jacobi on the leading rows of R.
// Rows of R whose trailing Frobenius norm sits below eps * ||m||_F carry only
// rounding noise; they are dropped and their singular values reported as 0.
// Jacobi keeps small singular values accurate relative to their own size,
// which matters for Kronecker-structured inputs with widely spread spectra.
// (Eigen 3.4.0's divide-and-conquer SVD returns NaN on some of them.)
std::vector<double> singular_values(const Matrix& m) {
    if (!m.allFinite()) {
        throw NumericError("singular_values: matrix has non-finite entries");
    }
    const Eigen::Index count = std::min(m.rows(), m.cols());
    std::vector<double> out(static_cast<std::size_t>(count), 0.0);
    if (count == 0) return out;
    Eigen::MatrixXd dense = m;
    if (dense.rows() < dense.cols()) dense.transposeInPlace();
    const double norm = dense.norm();
    if (norm == 0.0) return out;

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dense);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(count).triangularView<Eigen::Upper>();
    const double floor = std::numeric_limits<double>::epsilon() * norm;
    Eigen::Index keep = count;
    double tail = 0.0;
    while (keep > 0) {
        tail += r.row(keep - 1).squaredNorm();
        if (std::sqrt(tail) > floor) break;
        --keep;
    }
    if (keep == 0) return out;

    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(r.topRows(keep));
    if (svd.info() != Eigen::Success) {
        throw NumericError("singular_values: SVD did not converge");
    }
    const auto& s = svd.singularValues();
    if (!s.allFinite()) throw NumericError("singular_values: SVD produced non-finite values");
    std::copy(s.data(), s.data() + s.size(), out.begin());
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

int numerical_rank(const Matrix& m, double rel_tol) {
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
        throw std::invalid_argument("numerical_rank: rel_tol must lie in (0, 1)");
    }
    if (!m.allFinite()) {
        throw NumericError("numerical_rank: matrix has non-finite entries");
    }
    const auto sv = singular_values(m);
    if (sv.empty() || sv.front() == 0.0) return 0;
    const double cutoff = rel_tol * sv.front();
    return static_cast<int>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cutoff; }));
}

int exact_rank_integer(const Matrix& m) {
    using boost::multiprecision::cpp_int;
    constexpr double kSafe = 9007199254740992.0;  // 2^53

    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (!std::isfinite(v) || std::trunc(v) != v || std::abs(v) > kSafe) {
            throw NumericError("exact_rank_integer: entry " + std::to_string(i) +
                               " is not an integer in the safe range");
        }
    }

    // All-zero rows and columns never change the rank; dropping them keeps
    // sparse inputs (e.g. Kronecker chains of unit vectors) cheap.
    std::vector<Eigen::Index> rows, cols;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if ((m.row(i).array() != 0.0).any()) rows.push_back(i);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        if ((m.col(j).array() != 0.0).any()) cols.push_back(j);
    if (rows.empty()) return 0;

    const std::size_t nr = rows.size(), nc = cols.size();
    std::vector<cpp_int> a(nr * nc);
    for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j)
            a[i * nc + j] = static_cast<long long>(m(rows[i], cols[j]));

    cpp_int prev = 1;
    std::size_t rank = 0;
    for (std::size_t col = 0; col < nc && rank < nr; ++col) {
        std::size_t pivot = rank;
        while (pivot < nr && a[pivot * nc + col] == 0) ++pivot;
        if (pivot == nr) continue;
        if (pivot != rank) {
            for (std::size_t j = 0; j < nc; ++j) std::swap(a[pivot * nc + j], a[rank * nc + j]);
        }
        const cpp_int piv = a[rank * nc + col];
        for (std::size_t i = rank + 1; i < nr; ++i) {
            const cpp_int lead = a[i * nc + col];
            for (std::size_t j = col + 1; j < nc; ++j) {
                cpp_int& x = a[i * nc + j];
                if (lead == 0) {
                    if (x != 0) x = (piv * x) / prev;
                } else {
                    x = (piv * x - lead * a[rank * nc + j]) / prev;
                }
            }
            a[i * nc + col] = 0;
        }
        prev = piv;
        ++rank;
    }
    return static_cast<int>(rank);
}

}  // namespace poolrank
