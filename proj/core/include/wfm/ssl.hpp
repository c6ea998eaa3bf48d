#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "wfm/config.hpp"
#include "wfm/errors.hpp"
#include "wfm/model.hpp"
#include "wfm/numerics.hpp"
#include "wfm/rng.hpp"
#include "wfm/tensor.hpp"

namespace wfm {

// Complementary mask over patch indices. m[n] = 1 means patch n is visible in
// view 1; view 2 sees exactly the complement, so every patch is visible in
// one view and hidden in the other.
struct MaskPair {
    std::vector<std::uint8_t> m;

    std::size_t num_patches() const { return m.size(); }

    bool visible1(std::size_t n) const { return m[n] != 0; }
    bool visible2(std::size_t n) const { return m[n] == 0; }

    std::vector<std::uint8_t> complement() const {
        std::vector<std::uint8_t> c(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) c[i] = m[i] ? 0 : 1;
        return c;
    }
};

// Uniformly random subset of size floor(N/2) visible in view 1.
inline MaskPair complementary_masks(std::size_t n_patches, Rng rng) {
    if (n_patches < 2) {
        throw ConfigError("complementary_masks: need at least 2 patches, got " +
                          std::to_string(n_patches));
    }
    std::vector<std::uint32_t> idx(n_patches);
    for (std::size_t i = 0; i < n_patches; ++i) idx[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = n_patches - 1; i > 0; --i) {
        const std::uint64_t j = rng.below(i + 1);
        std::swap(idx[i], idx[j]);
    }
    MaskPair pair;
    pair.m.assign(n_patches, 0);
    for (std::size_t i = 0; i < n_patches / 2; ++i) pair.m[idx[i]] = 1;
    return pair;
}

// Zeroes the patches hidden by the mask; visible patches are copied verbatim.
template <typename T>
void apply_mask_into(const Tensor<T>& patches, const std::vector<std::uint8_t>& visible,
                     Tensor<T>& out) {
    if (patches.rank() != 3) {
        throw DimensionError("apply_mask: expected patches [C, N, P], got " +
                             patches.shape_string());
    }
    if (visible.size() != patches.dim(1)) {
        throw DimensionError("apply_mask: mask length " + std::to_string(visible.size()) +
                             " does not match patch count " + std::to_string(patches.dim(1)));
    }
    if (out.shape() != patches.shape()) out = Tensor<T>(patches.shape());
    const std::size_t n = patches.dim(1);
    const std::size_t p = patches.dim(2);
    for (std::size_t c = 0; c < patches.dim(0); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            T* dst = out.data() + (c * n + i) * p;
            if (visible[i]) {
                std::memcpy(dst, patches.data() + (c * n + i) * p, p * sizeof(T));
            } else {
                std::fill(dst, dst + p, T(0));
            }
        }
    }
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& patches, const std::vector<std::uint8_t>& visible) {
    Tensor<T> out;
    apply_mask_into(patches, visible, out);
    return out;
}

// Squared reconstruction error for one sample, summed over channels, patches
// and timesteps. Each patch contributes from the view in which it is visible,
// so the complementary pair covers every patch exactly once.
template <typename T>
T recon_loss(const Tensor<T>& x, const Tensor<T>& xhat1, const Tensor<T>& xhat2,
             const MaskPair& masks) {
    if (x.rank() != 3 || !x.same_shape(xhat1) || !x.same_shape(xhat2)) {
        throw DimensionError("recon_loss: shapes disagree: x " + x.shape_string() +
                             ", xhat1 " + xhat1.shape_string() + ", xhat2 " +
                             xhat2.shape_string());
    }
    if (masks.num_patches() != x.dim(1)) {
        throw DimensionError("recon_loss: mask length " +
                             std::to_string(masks.num_patches()) +
                             " does not match patch count " + std::to_string(x.dim(1)));
    }
    const std::size_t n = x.dim(1);
    const std::size_t p = x.dim(2);
    double acc = 0.0;
    for (std::size_t c = 0; c < x.dim(0); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            const Tensor<T>& xh = masks.visible1(i) ? xhat1 : xhat2;
            const T* xr = x.data() + (c * n + i) * p;
            const T* hr = xh.data() + (c * n + i) * p;
            for (std::size_t k = 0; k < p; ++k) {
                const double d = static_cast<double>(xr[k]) - static_cast<double>(hr[k]);
                acc += d * d;
            }
        }
    }
    return static_cast<T>(acc);
}

// Row n's positive partner in a concatenated [2*N_level] layout where view-1
// rows come first.
inline std::size_t partner_index(std::size_t n, std::size_t n_level) {
    return n < n_level ? n + n_level : n - n_level;
}

// Patch counts of the contrastive hierarchy: the raw count, then repeated
// pairwise pooling (ceil halving) while at least 2 patches remain.
inline std::vector<std::size_t> cl_level_sizes(std::size_t n_patches) {
    std::vector<std::size_t> sizes;
    if (n_patches < 2) return sizes;
    sizes.push_back(n_patches);
    while ((sizes.back() + 1) / 2 >= 2) sizes.push_back((sizes.back() + 1) / 2);
    return sizes;
}

namespace detail {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline void fnv_update(std::uint64_t& h, const void* data, std::size_t bytes) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

inline void fnv_byte(std::uint64_t& h, unsigned char b) {
    h ^= b;
    h *= kFnvPrime;
}

// Anchor sweep over one channel's concatenated rows u [m, d] (view-1 rows
// first, partner(r) = (r + m/2) mod m). smat is caller scratch of m*m.
// Returns the sum over all m anchors of -log p(anchor, partner), where p is
// the softmax over dot-product similarities with the m-1 other rows.
// When grad is true, smat is left holding a[r,s] = p(r,s) - [s == partner(r)]
// with a zero diagonal, the seed for the Gram-matrix chain rule; otherwise
// its final contents are unspecified.
template <typename T>
double cl_anchor_sum(const T* u, std::size_t m, std::size_t d, T* smat, bool grad) {
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t s = 0; s <= r; ++s) {
            double acc = 0.0;
            const T* a = u + r * d;
            const T* b = u + s * d;
            for (std::size_t k = 0; k < d; ++k) {
                acc += static_cast<double>(a[k]) * static_cast<double>(b[k]);
            }
            smat[r * m + s] = static_cast<T>(acc);
            smat[s * m + r] = static_cast<T>(acc);
        }
    }
    const std::size_t half = m / 2;
    double loss = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        T* row = smat + r * m;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < m; ++s) {
            if (s != r && static_cast<double>(row[s]) > mx) mx = static_cast<double>(row[s]);
        }
        double den = 0.0;
        for (std::size_t s = 0; s < m; ++s) {
            if (s != r) den += std::exp(static_cast<double>(row[s]) - mx);
        }
        const std::size_t partner = partner_index(r, half);
        loss += -(static_cast<double>(row[partner]) - mx) + std::log(den);
        if (grad) {
            for (std::size_t s = 0; s < m; ++s) {
                row[s] = s == r ? T(0)
                                : static_cast<T>(std::exp(static_cast<double>(row[s]) - mx) / den);
            }
            row[partner] -= T(1);
        }
    }
    return loss;
}

// du = scale * (A + A^T) u, the gradient of the anchor sum with respect to
// the rows of u given the coefficient matrix left behind by cl_anchor_sum.
template <typename T>
void cl_grad_from_amat(const T* u, const T* amat, std::size_t m, std::size_t d, double scale,
                       T* du) {
    std::fill(du, du + m * d, T(0));
    for (std::size_t r = 0; r < m; ++r) {
        T* out = du + r * d;
        for (std::size_t s = 0; s < m; ++s) {
            const T coef = static_cast<T>(
                scale * (static_cast<double>(amat[r * m + s]) + static_cast<double>(amat[s * m + r])));
            if (coef == T(0)) continue;
            const T* src = u + s * d;
            for (std::size_t k = 0; k < d; ++k) out[k] += coef * src[k];
        }
    }
}

// Copies channel c of two same-shape level grids [C, n, D] into u [2n, D].
template <typename T>
void gather_u(const Tensor<T>& v1, const Tensor<T>& v2, std::size_t c, T* u) {
    const std::size_t block = v1.dim(1) * v1.dim(2);
    std::memcpy(u, v1.data() + c * block, block * sizeof(T));
    std::memcpy(u + block, v2.data() + c * block, block * sizeof(T));
}

// Pairwise max-pool chain below one view's raw grid [C, N, D]. pooled[k] is
// the grid with sizes[k+1] patches; route[k] records, per pooled element, the
// winning input row local to its channel (ties already resolved to the lower
// row by the pooling kernel).
template <typename T>
void build_chain(const Tensor<T>& level0, const std::vector<std::size_t>& sizes,
                 std::vector<Tensor<T>>& pooled,
                 std::vector<std::vector<std::uint32_t>>& route) {
    const std::size_t channels = level0.dim(0);
    const std::size_t d = level0.dim(2);
    pooled.resize(sizes.size() - 1);
    route.resize(sizes.size() - 1);
    const Tensor<T>* cur = &level0;
    for (std::size_t k = 1; k < sizes.size(); ++k) {
        const std::size_t n_in = sizes[k - 1];
        const std::size_t n_out = sizes[k];
        Tensor<T>& out = pooled[k - 1];
        const std::vector<std::size_t> shape = {channels, n_out, d};
        if (out.shape() != shape) out = Tensor<T>(shape);
        route[k - 1].resize(channels * n_out * d);
        for (std::size_t c = 0; c < channels; ++c) {
            maxpool_pairs_rows(cur->data() + c * n_in * d, n_in, d,
                               out.data() + c * n_out * d,
                               route[k - 1].data() + c * n_out * d);
        }
        cur = &out;
    }
}

}  // namespace detail

// Eq.-style pair probability: softmax over dot-product similarity between row
// n and every other row of channel c in the concatenated [C, 2N, D] grid
// (view-1 rows first). The denominator runs over the 2N-1 rows s != n.
template <typename T>
T contrastive_probs(const Tensor<T>& z1_cat, std::size_t c, std::size_t n, std::size_t n_other) {
    if (z1_cat.rank() != 3) {
        throw DimensionError("contrastive_probs: expected [C, 2N, D], got " +
                             z1_cat.shape_string());
    }
    const std::size_t m = z1_cat.dim(1);
    const std::size_t d = z1_cat.dim(2);
    if (c >= z1_cat.dim(0) || n >= m || n_other >= m) {
        throw ArgumentError("contrastive_probs: index out of range");
    }
    if (n == n_other) {
        throw ArgumentError("contrastive_probs: n and n' must differ");
    }
    const T* base = z1_cat.data() + c * m * d;
    std::vector<double> scores(m, 0.0);
    const T* anchor = base + n * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < m; ++s) {
        if (s == n) continue;
        double acc = 0.0;
        const T* row = base + s * d;
        for (std::size_t k = 0; k < d; ++k) {
            acc += static_cast<double>(anchor[k]) * static_cast<double>(row[k]);
        }
        scores[s] = acc;
        if (acc > mx) mx = acc;
    }
    double den = 0.0;
    for (std::size_t s = 0; s < m; ++s) {
        if (s != n) den += std::exp(scores[s] - mx);
    }
    return static_cast<T>(std::exp(scores[n_other] - mx) / den);
}

// Per-sample contrastive loss at one hierarchy level. z1_cat is [C, M, D]
// with M = 2 * N_level; the result averages -log p(anchor, partner) over all
// M anchors and C channels, i.e. carries the 1/(2*C*N_level) normalizer.
template <typename T>
T contrastive_loss_level(const Tensor<T>& z1_cat) {
    if (z1_cat.rank() != 3) {
        throw DimensionError("contrastive_loss_level: expected [C, M, D], got " +
                             z1_cat.shape_string());
    }
    const std::size_t m = z1_cat.dim(1);
    if (m < 4 || m % 2 != 0) {
        throw ArgumentError("contrastive_loss_level: row count must be even and >= 4, got " +
                            std::to_string(m));
    }
    const std::size_t channels = z1_cat.dim(0);
    const std::size_t d = z1_cat.dim(2);
    std::vector<T> smat(m * m);
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
        acc += detail::cl_anchor_sum(z1_cat.data() + c * m * d, m, d, smat.data(), false);
    }
    return static_cast<T>(acc / (static_cast<double>(channels) * static_cast<double>(m)));
}

struct SslOptions {
    // Evaluate the contrastive loss on raw patch embeddings as well as on the
    // pooled levels. At the raw level every masked patch embeds the all-zero
    // patch, so its positives share one embedding; the flag allows excluding
    // that level.
    bool include_level0 = true;
    // Loss-component switches, used by the gradient-check harness to isolate
    // the quadratic reconstruction path.
    bool recon_term = true;
    bool cl_term = true;
};

template <typename T>
struct LossBreakdown {
    T recon = T(0);
    std::vector<T> cl_per_level;
    T cl_total = T(0);
    T total = T(0);
};

// Per-level contrastive losses for one sample, raw patches first, each level
// halving the patch count by per-view pairwise max-pooling.
template <typename T>
std::vector<T> hierarchical_cl(const Tensor<T>& z1_view1, const Tensor<T>& z1_view2,
                               const SslOptions& opts = {}) {
    if (z1_view1.rank() != 3 || !z1_view1.same_shape(z1_view2)) {
        throw DimensionError("hierarchical_cl: views must share shape [C, N, D], got " +
                             z1_view1.shape_string() + " and " + z1_view2.shape_string());
    }
    const std::size_t n = z1_view1.dim(1);
    if (n < 2) {
        throw ArgumentError("hierarchical_cl: need at least 2 patches, got " +
                            std::to_string(n));
    }
    const std::vector<std::size_t> sizes = cl_level_sizes(n);
    std::vector<Tensor<T>> pooled1, pooled2;
    std::vector<std::vector<std::uint32_t>> route1, route2;
    detail::build_chain(z1_view1, sizes, pooled1, route1);
    detail::build_chain(z1_view2, sizes, pooled2, route2);
    const std::size_t channels = z1_view1.dim(0);
    const std::size_t d = z1_view1.dim(2);
    std::vector<T> losses;
    Tensor<T> cat;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (k == 0 && !opts.include_level0) continue;
        const Tensor<T>& v1 = k == 0 ? z1_view1 : pooled1[k - 1];
        const Tensor<T>& v2 = k == 0 ? z1_view2 : pooled2[k - 1];
        const std::vector<std::size_t> shape = {channels, 2 * sizes[k], d};
        if (cat.shape() != shape) cat = Tensor<T>(shape);
        for (std::size_t c = 0; c < channels; ++c) {
            detail::gather_u(v1, v2, c, cat.data() + c * 2 * sizes[k] * d);
        }
        losses.push_back(contrastive_loss_level(cat));
    }
    return losses;
}

// Reusable buffers for repeated objective evaluations. All members are
// resized on first use and reused while shapes stay put.
template <typename T>
struct SslWorkspace {
    Tensor<T> masked[2];
    EncoderActivations<T> acts[2];
    Tensor<T> xhat;
    std::vector<Tensor<T>> pooled[2];
    std::vector<std::vector<std::uint32_t>> route[2];
    std::vector<Tensor<T>> glev[2];
    std::vector<T> u, smat, du, grow;
    Tensor<T> g_z2;
};

// One sample's losses and, when grad is non-null, its parameter gradients
// accumulated (+=) into grad without any batch scaling. A caller-held
// workspace avoids reallocation across samples; digest, when requested,
// absorbs every ReLU sign and max-pool routing decision of the forward pass
// so callers can detect crossings of non-smooth points between evaluations.
template <typename T>
LossBreakdown<T> sample_objective(const Tensor<T>& patches, const ModelParams<T>& params,
                                  const MaskPair& mask, const SslOptions& opts,
                                  ModelParams<T>* grad, SslWorkspace<T>* ws_opt = nullptr,
                                  std::uint64_t* digest = nullptr) {
    if (patches.rank() != 3) {
        throw DimensionError("sample_objective: expected patches [C, N, P], got " +
                             patches.shape_string());
    }
    if (mask.num_patches() != patches.dim(1)) {
        throw DimensionError("sample_objective: mask length " +
                             std::to_string(mask.num_patches()) +
                             " does not match patch count " + std::to_string(patches.dim(1)));
    }
    SslWorkspace<T> local;
    SslWorkspace<T>& ws = ws_opt ? *ws_opt : local;

    const std::size_t channels = patches.dim(0);
    const std::size_t n = patches.dim(1);
    const std::size_t p = patches.dim(2);
    const std::size_t d = params.hidden_dim();

    const std::vector<std::uint8_t> comp = mask.complement();
    const std::vector<std::uint8_t>* vis[2] = {&mask.m, &comp};
    for (int v = 0; v < 2; ++v) {
        apply_mask_into(patches, *vis[v], ws.masked[v]);
        encode_into(ws.masked[v], params, ws.acts[v]);
        if (digest) {
            for (std::size_t i = 0; i < ws.acts[v].h1.size(); ++i) {
                detail::fnv_byte(*digest, ws.acts[v].h1[i] > T(0) ? 1 : 0);
            }
        }
    }

    LossBreakdown<T> out;

    // Contrastive phase: per-level anchor sums, and with grad the Gram-matrix
    // chain rule per level routed down the pooling chain into the raw grids.
    if (opts.cl_term) {
        const std::vector<std::size_t> sizes = cl_level_sizes(n);
        for (int v = 0; v < 2; ++v) {
            detail::build_chain(ws.acts[v].z1, sizes, ws.pooled[v], ws.route[v]);
            if (digest) {
                for (const auto& r : ws.route[v]) {
                    detail::fnv_update(*digest, r.data(), r.size() * sizeof(std::uint32_t));
                }
            }
        }
        const std::size_t num_eval = sizes.size() - (opts.include_level0 ? 0 : 1);
        if (grad) {
            for (int v = 0; v < 2; ++v) {
                ws.glev[v].resize(sizes.size());
                for (std::size_t k = 0; k < sizes.size(); ++k) {
                    const std::vector<std::size_t> shape = {channels, sizes[k], d};
                    if (ws.glev[v][k].shape() != shape) ws.glev[v][k] = Tensor<T>(shape);
                    ws.glev[v][k].fill(T(0));
                }
            }
        }
        double cl_acc = 0.0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            const bool eval = k > 0 || opts.include_level0;
            if (!eval) continue;
            const std::size_t m = 2 * sizes[k];
            ws.u.resize(m * d);
            ws.smat.resize(m * m);
            if (grad) ws.du.resize(m * d);
            const Tensor<T>& v1 = k == 0 ? ws.acts[0].z1 : ws.pooled[0][k - 1];
            const Tensor<T>& v2 = k == 0 ? ws.acts[1].z1 : ws.pooled[1][k - 1];
            double level_acc = 0.0;
            const double scale =
                1.0 / (static_cast<double>(num_eval) * static_cast<double>(channels) *
                       static_cast<double>(m));
            for (std::size_t c = 0; c < channels; ++c) {
                detail::gather_u(v1, v2, c, ws.u.data());
                level_acc +=
                    detail::cl_anchor_sum(ws.u.data(), m, d, ws.smat.data(), grad != nullptr);
                if (grad) {
                    detail::cl_grad_from_amat(ws.u.data(), ws.smat.data(), m, d, scale,
                                              ws.du.data());
                    const std::size_t block = sizes[k] * d;
                    for (int v = 0; v < 2; ++v) {
                        T* dst = ws.glev[v][k].data() + c * block;
                        const T* src = ws.du.data() + v * block;
                        for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                    }
                }
            }
            out.cl_per_level.push_back(static_cast<T>(
                level_acc / (static_cast<double>(channels) * static_cast<double>(m))));
            cl_acc += level_acc / (static_cast<double>(channels) * static_cast<double>(m));
        }
        out.cl_total = static_cast<T>(num_eval > 0 ? cl_acc / static_cast<double>(num_eval)
                                                   : 0.0);
        // Carry pooled-level gradients down to the raw grids along the stored
        // argmax routes.
        if (grad) {
            for (int v = 0; v < 2; ++v) {
                for (std::size_t k = sizes.size(); k-- > 1;) {
                    const Tensor<T>& gk = ws.glev[v][k];
                    Tensor<T>& gprev = ws.glev[v][k - 1];
                    const std::vector<std::uint32_t>& rt = ws.route[v][k - 1];
                    const std::size_t n_out = sizes[k];
                    const std::size_t n_in = sizes[k - 1];
                    for (std::size_t c = 0; c < channels; ++c) {
                        const T* gsrc = gk.data() + c * n_out * d;
                        T* gdst = gprev.data() + c * n_in * d;
                        const std::uint32_t* r = rt.data() + c * n_out * d;
                        for (std::size_t i = 0; i < n_out * d; ++i) {
                            gdst[r[i] * d + i % d] += gsrc[i];
                        }
                    }
                }
            }
        }
    } else if (grad) {
        for (int v = 0; v < 2; ++v) {
            ws.glev[v].resize(1);
            const std::vector<std::size_t> shape = {channels, n, d};
            if (ws.glev[v][0].shape() != shape) ws.glev[v][0] = Tensor<T>(shape);
            ws.glev[v][0].fill(T(0));
        }
    }

    // Reconstruction phase plus, with grad, the encoder backward pass per
    // view. Only rows visible in a view carry reconstruction gradient; hidden
    // rows still carry contrastive gradient through z1.
    double recon_acc = 0.0;
    for (int v = 0; v < 2; ++v) {
        const std::vector<std::uint8_t>& vm = *vis[v];
        if (opts.recon_term) {
            reconstruct_into(ws.acts[v].z2, params, ws.xhat);
            if (grad) {
                const std::vector<std::size_t> zshape = {channels, n, d};
                if (ws.g_z2.shape() != zshape) ws.g_z2 = Tensor<T>(zshape);
                ws.g_z2.fill(T(0));
                ws.grow.resize(p);
            }
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!vm[i]) continue;
                    const std::size_t row = c * n + i;
                    const T* xr = patches.data() + row * p;
                    const T* hr = ws.xhat.data() + row * p;
                    for (std::size_t k = 0; k < p; ++k) {
                        const double diff =
                            static_cast<double>(xr[k]) - static_cast<double>(hr[k]);
                        recon_acc += diff * diff;
                    }
                    if (grad) {
                        T* g = ws.grow.data();
                        for (std::size_t k = 0; k < p; ++k) g[k] = T(2) * (hr[k] - xr[k]);
                        const T* z2r = ws.acts[v].z2.data() + row * d;
                        T* gz2r = ws.g_z2.data() + row * d;
                        for (std::size_t k = 0; k < p; ++k) {
                            const T gk = g[k];
                            if (gk == T(0)) continue;
                            T* wrow = grad->recon_w.data() + k * d;
                            const T* wsrc = params.recon_w.data() + k * d;
                            for (std::size_t dd = 0; dd < d; ++dd) {
                                wrow[dd] += gk * z2r[dd];
                                gz2r[dd] += gk * wsrc[dd];
                            }
                        }
                    }
                }
            }
        }
        if (!grad) continue;

        // Layer 2 backward on visible rows, then ReLU and layer 1 on every
        // row. ws.glev[v][0] doubles as the z1 gradient accumulator.
        Tensor<T>& gz1 = ws.glev[v][0];
        if (opts.recon_term) {
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t i = 0; i < n; ++i) {
                    if (!vm[i]) continue;
                    const std::size_t row = c * n + i;
                    const T* gz2r = ws.g_z2.data() + row * d;
                    const T* z1r = ws.acts[v].z1.data() + row * d;
                    T* gz1r = gz1.data() + row * d;
                    for (std::size_t o = 0; o < d; ++o) {
                        const T g2 = gz2r[o];
                        if (g2 == T(0)) continue;
                        grad->enc_b2[o] += g2;
                        T* w2row = grad->enc_w2.data() + o * d;
                        const T* w2src = params.enc_w2.data() + o * d;
                        for (std::size_t k = 0; k < d; ++k) {
                            w2row[k] += g2 * z1r[k];
                            gz1r[k] += g2 * w2src[k];
                        }
                    }
                }
            }
        }
        const std::size_t rows = channels * n;
        for (std::size_t row = 0; row < rows; ++row) {
            const T* h1r = ws.acts[v].h1.data() + row * d;
            T* gz1r = gz1.data() + row * d;
            const T* in = ws.masked[v].data() + row * p;
            for (std::size_t o = 0; o < d; ++o) {
                const T gh = h1r[o] > T(0) ? gz1r[o] : T(0);
                if (gh == T(0)) continue;
                grad->enc_b1[o] += gh;
                T* w1row = grad->enc_w1.data() + o * p;
                for (std::size_t k = 0; k < p; ++k) w1row[k] += gh * in[k];
            }
        }
    }
    out.recon = static_cast<T>(opts.recon_term ? recon_acc : 0.0);
    out.total = out.recon + out.cl_total;
    return out;
}

namespace detail {

template <typename T>
LossBreakdown<T> batch_objective(const std::vector<Tensor<T>>& batch,
                                 const ModelParams<T>& params, Rng rng,
                                 const SslOptions& opts, ModelParams<T>* grads,
                                 std::uint64_t* digest) {
    if (batch.empty()) {
        throw ArgumentError("total_loss: empty batch");
    }
    for (const Tensor<T>& s : batch) {
        if (!s.same_shape(batch.front())) {
            throw DimensionError("total_loss: batch shapes disagree: " + s.shape_string() +
                                 " vs " + batch.front().shape_string());
        }
    }
    const std::size_t n = batch.front().dim(1);
    if (grads) *grads = params.zeros_like();
    LossBreakdown<T> sum;
    SslWorkspace<T> ws;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        // Per-sample mask streams, so the result does not depend on the order
        // samples are visited in.
        const MaskPair mask = complementary_masks(n, rng.split(i));
        const LossBreakdown<T> one =
            sample_objective(batch[i], params, mask, opts, grads, &ws, digest);
        sum.recon += one.recon;
        sum.cl_total += one.cl_total;
        if (sum.cl_per_level.empty()) sum.cl_per_level.resize(one.cl_per_level.size(), T(0));
        for (std::size_t k = 0; k < one.cl_per_level.size(); ++k) {
            sum.cl_per_level[k] += one.cl_per_level[k];
        }
    }
    const T inv_b = T(1) / static_cast<T>(batch.size());
    sum.recon *= inv_b;
    sum.cl_total *= inv_b;
    for (T& v : sum.cl_per_level) v *= inv_b;
    sum.total = sum.recon + sum.cl_total;
    if (grads) {
        for (auto nt : grads->tensors()) {
            for (std::size_t i = 0; i < nt.tensor->size(); ++i) (*nt.tensor)[i] *= inv_b;
        }
    }
    return sum;
}

}  // namespace detail

// Mean over the batch of per-sample (reconstruction + contrastive) losses.
// Each sample's mask pair is drawn from a stream derived from rng.
template <typename T>
LossBreakdown<T> total_loss(const std::vector<Tensor<T>>& batch, const ModelParams<T>& params,
                            Rng rng, const SslOptions& opts = {}) {
    return detail::batch_objective<T>(batch, params, rng, opts, nullptr, nullptr);
}

// Analytic gradient of total_loss with respect to every parameter, with the
// loss breakdown of the same evaluation.
template <typename T>
LossBreakdown<T> backward_into(const std::vector<Tensor<T>>& batch,
                               const ModelParams<T>& params, Rng rng, const SslOptions& opts,
                               ModelParams<T>& grads) {
    return detail::batch_objective(batch, params, rng, opts, &grads, nullptr);
}

template <typename T>
ModelParams<T> backward(const std::vector<Tensor<T>>& batch, const ModelParams<T>& params,
                        Rng rng, const SslOptions& opts = {}) {
    ModelParams<T> grads;
    detail::batch_objective(batch, params, rng, opts, &grads, nullptr);
    return grads;
}

struct GradCheckOptions {
    std::size_t batch_size = 2;
    std::size_t coords_per_tensor = 50;
    double h = 1e-5;
    // Relative-error denominator floor; errors on coordinates whose analytic
    // and numeric magnitudes both sit below it are measured against the floor.
    double rel_floor = 1e-4;
    SslOptions ssl;
    // Restrict the sweep to these tensor names; empty means every trunk
    // tensor.
    std::vector<std::string> only_tensors;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    // Coordinates rejected because a ReLU sign or pool routing decision
    // flipped inside the central-difference interval.
    std::size_t skipped = 0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
};

// Central finite differences against a caller-supplied analytic gradient.
// params is perturbed in place and restored. Coordinates whose forward-pass
// route digest changes under either perturbation are skipped rather than
// compared across a kink.
inline GradCheckReport fd_compare(const std::vector<Tensor<double>>& batch,
                                  ModelParams<double>& params, Rng mask_rng,
                                  const ModelParams<double>& analytic,
                                  const GradCheckOptions& opts, Rng coord_rng) {
    GradCheckReport rep;
    std::uint64_t base_digest = detail::kFnvOffset;
    detail::batch_objective<double>(batch, params, mask_rng, opts.ssl, nullptr, &base_digest);
    auto tensors = params.tensors();
    auto grads = analytic.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const std::string name = tensors[t].name;
        if (name.rfind("cls_", 0) == 0) continue;  // no classifier path in this objective
        if (!opts.only_tensors.empty() &&
            std::find(opts.only_tensors.begin(), opts.only_tensors.end(), name) ==
                opts.only_tensors.end()) {
            continue;
        }
        Tensor<double>& tensor = *tensors[t].tensor;
        const Tensor<double>& gref = *grads[t].tensor;
        const std::size_t size = tensor.size();
        std::vector<std::size_t> coords;
        if (opts.coords_per_tensor >= size) {
            coords.resize(size);
            for (std::size_t i = 0; i < size; ++i) coords[i] = i;
        } else {
            std::vector<std::size_t> pool(size);
            for (std::size_t i = 0; i < size; ++i) pool[i] = i;
            for (std::size_t i = 0; i < opts.coords_per_tensor; ++i) {
                const std::size_t j = i + coord_rng.below(size - i);
                std::swap(pool[i], pool[j]);
                coords.push_back(pool[i]);
            }
        }
        for (const std::size_t i : coords) {
            const double old = tensor[i];
            tensor[i] = old + opts.h;
            std::uint64_t dig_p = detail::kFnvOffset;
            const double lp =
                detail::batch_objective<double>(batch, params, mask_rng, opts.ssl, nullptr, &dig_p)
                    .total;
            tensor[i] = old - opts.h;
            std::uint64_t dig_m = detail::kFnvOffset;
            const double lm =
                detail::batch_objective<double>(batch, params, mask_rng, opts.ssl, nullptr, &dig_m)
                    .total;
            tensor[i] = old;
            if (dig_p != base_digest || dig_m != base_digest) {
                ++rep.skipped;
                continue;
            }
            const double fd = (lp - lm) / (2.0 * opts.h);
            const double g = gref[i];
            const double den = std::max(std::abs(g) + std::abs(fd), opts.rel_floor);
            const double rel = std::abs(g - fd) / den;
            ++rep.checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_tensor = name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

// Self-contained gradient verification at a small configuration: random
// normal patch data, fan-initialized parameters with jittered biases (an
// unjittered zero bias puts every masked patch exactly on the ReLU kink),
// analytic backward, then a finite-difference sweep.
inline GradCheckReport grad_check_report(const HyperConfig& cfg, std::uint64_t seed,
                                         GradCheckOptions opts = {}) {
    cfg.validate();
    Rng root(seed);
    const std::size_t n = cfg.num_patches();
    std::vector<Tensor<double>> batch;
    for (std::size_t i = 0; i < opts.batch_size; ++i) {
        Tensor<double> sample({cfg.channels, n, cfg.patch_len});
        Rng srng = root.split(100 + i);
        for (std::size_t k = 0; k < sample.size(); ++k) sample[k] = srng.normal();
        batch.push_back(std::move(sample));
    }
    ModelParams<double> params = init_params<double>(cfg, std::nullopt, root.split(1));
    Rng jitter = root.split(2);
    for (std::size_t i = 0; i < params.enc_b1.size(); ++i) {
        params.enc_b1[i] += jitter.uniform(-0.05, 0.05);
    }
    for (std::size_t i = 0; i < params.enc_b2.size(); ++i) {
        params.enc_b2[i] += jitter.uniform(-0.05, 0.05);
    }
    const Rng mask_rng = root.split(3);
    ModelParams<double> analytic;
    backward_into(batch, params, mask_rng, opts.ssl, analytic);
    return fd_compare(batch, params, mask_rng, analytic, opts, root.split(4));
}

// Largest relative error between analytic and central-difference gradients.
inline double grad_check(const HyperConfig& cfg, std::uint64_t seed) {
    return grad_check_report(cfg, seed).max_rel_err;
}

}  // namespace wfm
