#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrf/numeric/tensor.hpp"

// Differentiable primitives. Every function here records an adjoint on the
// active GradTape when any input requires gradients. Matrices are rank-2
// row-major; "rows" of a rank-1 tensor means the tensor is one row.
namespace mrf {

enum class Reduce { sum, max };

Tensor matmul(const Tensor& a, const Tensor& b);  // [r,s] x [s,t]
Tensor linear(const Tensor& x, const Tensor& w);  // x[r,s] * w[t,s]^T -> [r,t]

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_n(std::span<const Tensor> terms);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor mean_rows(const Tensor& a);  // [r,c] -> [c]

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// out[rows[i], :] += src[i, :] on a zero [n_rows, c] tensor.
Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows, std::size_t n_rows);
// out[i] = x[rows[i], cols[i]]
Tensor gather_elements(const Tensor& x, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols);
// out[r, :] = x[r, :] * g[r]
Tensor scale_rows(const Tensor& x, const Tensor& g);

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

// Softmax / logsumexp over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
Tensor logsumexp(const Tensor& x);

// Mean next-token cross entropy over positions whose target != ignore_index.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::int32_t ignore_index);

// Multi-head causal self-attention over `batch` sequences of length `seq`
// packed as rows. q, k, v are [batch*seq, heads*head_dim]. When `probs` is
// non-null it receives the attention weights [batch, heads, seq, seq].
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                        std::size_t seq, std::size_t heads, std::vector<double>* probs = nullptr);

// x[r, g*c] -> out[r, c] = reduce_j x[r, j*c + i]   (strided groups)
Tensor reduce_strided(const Tensor& x, std::size_t groups, Reduce mode);
// x[r, b*s] -> out[r, b] = reduce_t x[r, b*s + t]   (contiguous blocks)
Tensor reduce_blocks(const Tensor& x, std::size_t block, Reduce mode);

// Non-differentiable helpers.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Tensor& a, const Tensor& b);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace mrf
