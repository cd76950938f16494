#ifndef DOCDEFEND_NN_HPP
#define DOCDEFEND_NN_HPP

#include <Eigen/Dense>

#include <cmath>

// Small building blocks for the tiny causal LM. Free functions, templated
// on the Eigen expression so the same code runs in float or double.

namespace docdefend::nn {

// Row-wise softmax with max subtraction.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> SoftmaxRows(
    const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out = logits;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        Scalar max = out.row(i).maxCoeff();
        out.row(i) = (out.row(i).array() - max).exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

// Gradient through softmax for one row: ds = p .* (dp - <dp, p>).
template <typename DerivedP, typename DerivedD>
Eigen::Matrix<typename DerivedP::Scalar, 1, Eigen::Dynamic> SoftmaxBackwardRow(
    const Eigen::MatrixBase<DerivedP>& probs_row, const Eigen::MatrixBase<DerivedD>& dprobs_row) {
    typename DerivedP::Scalar dot = (dprobs_row.array() * probs_row.array()).sum();
    return (probs_row.array() * (dprobs_row.array() - dot)).matrix();
}

// -log softmax(logits)[target], numerically stable.
template <typename Derived>
typename Derived::Scalar NllFromLogitsRow(const Eigen::MatrixBase<Derived>& logits_row,
                                          Eigen::Index target) {
    using Scalar = typename Derived::Scalar;
    Scalar max = logits_row.maxCoeff();
    Scalar log_sum = std::log((logits_row.array() - max).exp().sum()) + max;
    return log_sum - logits_row(target);
}

// ---------------------------------------------------------------------------
// Layer normalization over the last (feature) dimension of an n x d matrix.

template <typename Scalar>
struct LayerNormCache {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> normalized;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> LayerNormForward(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& gamma,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& beta,
    LayerNormCache<Scalar>& cache,
    Scalar eps = Scalar(1e-5)) {
    const Eigen::Index n = x.rows(), d = x.cols();
    cache.normalized.resize(n, d);
    cache.inv_std.resize(n);
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        Scalar mean = x.row(i).mean();
        Scalar var = (x.row(i).array() - mean).square().mean();
        Scalar inv_std = Scalar(1) / std::sqrt(var + eps);
        cache.inv_std(i) = inv_std;
        cache.normalized.row(i) = (x.row(i).array() - mean) * inv_std;
        out.row(i) =
            (cache.normalized.row(i).array() * gamma.transpose().array()) + beta.transpose().array();
    }
    return out;
}

// dx for frozen gamma/beta:
// dx = inv_std * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> LayerNormBackward(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dy,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& gamma,
    const LayerNormCache<Scalar>& cache) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dx(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Array<Scalar, 1, Eigen::Dynamic> dxhat =
            dy.row(i).array() * gamma.transpose().array();
        Scalar mean_dxhat = dxhat.mean();
        Scalar mean_dxhat_xhat = (dxhat * cache.normalized.row(i).array()).mean();
        dx.row(i) = ((dxhat - mean_dxhat - cache.normalized.row(i).array() * mean_dxhat_xhat) *
                     cache.inv_std(i))
                        .matrix();
    }
    return dx;
}

// ---------------------------------------------------------------------------
// GELU (tanh approximation).

template <typename Scalar>
Scalar GeluScalar(Scalar x) {
    const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
    return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar GeluGradScalar(Scalar x) {
    const Scalar c = Scalar(0.7978845608028654);
    Scalar x3 = x * x * x;
    Scalar inner = c * (x + Scalar(0.044715) * x3);
    Scalar t = std::tanh(inner);
    Scalar sech2 = Scalar(1) - t * t;
    return Scalar(0.5) * (Scalar(1) + t) +
           Scalar(0.5) * x * sech2 * c * (Scalar(1) + Scalar(3) * Scalar(0.044715) * x * x);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> Gelu(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x) {
    return x.unaryExpr([](Scalar v) { return GeluScalar(v); });
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> GeluBackward(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& dy,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& x_pre) {
    return dy.cwiseProduct(x_pre.unaryExpr([](Scalar v) { return GeluGradScalar(v); }));
}

}  // namespace docdefend::nn

#endif  // DOCDEFEND_NN_HPP
