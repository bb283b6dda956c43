#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mb/dataset.hpp"
#include "mb/error.hpp"
#include "mb/losses.hpp"
#include "mb/tensor.hpp"

namespace mb {

// One-vs-all ridge regression on flattened pixels, closed form. Used as an
// independent, optimization-free readout of how separable each modality is.
struct LinearProbe {
    int classes = 0;
    int dim = 0;              // feature dim without bias
    std::vector<double> w;    // (classes, dim + 1), bias last

    int predict(const float* x) const {
        int best = 0;
        double best_s = -1e300;
        for (int k = 0; k < classes; ++k) {
            const double* wk = w.data() + static_cast<std::size_t>(k) * (dim + 1);
            double s = wk[dim];
            for (int j = 0; j < dim; ++j) s += wk[j] * static_cast<double>(x[j]);
            if (s > best_s) {
                best_s = s;
                best = k;
            }
        }
        return best;
    }
};

namespace detail {

// In-place Cholesky solve of A X = B for symmetric positive definite A
// (n x n), B (n x m) column-major in `b`.
inline void cholesky_solve(std::vector<double>& a, std::vector<double>& b, int n, int m) {
    for (int j = 0; j < n; ++j) {
        double d = a[static_cast<std::size_t>(j) * n + j];
        for (int k = 0; k < j; ++k) {
            const double l = a[static_cast<std::size_t>(j) * n + k];
            d -= l * l;
        }
        if (d <= 0) throw Error("cholesky: matrix not positive definite");
        const double lj = std::sqrt(d);
        a[static_cast<std::size_t>(j) * n + j] = lj;
        for (int i = j + 1; i < n; ++i) {
            double s = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= a[static_cast<std::size_t>(i) * n + k] * a[static_cast<std::size_t>(j) * n + k];
            a[static_cast<std::size_t>(i) * n + j] = s / lj;
        }
    }
    for (int c = 0; c < m; ++c) {
        double* col = b.data() + static_cast<std::size_t>(c) * n;
        for (int i = 0; i < n; ++i) {
            double s = col[i];
            for (int k = 0; k < i; ++k) s -= a[static_cast<std::size_t>(i) * n + k] * col[k];
            col[i] = s / a[static_cast<std::size_t>(i) * n + i];
        }
        for (int i = n - 1; i >= 0; --i) {
            double s = col[i];
            for (int k = i + 1; k < n; ++k) s -= a[static_cast<std::size_t>(k) * n + i] * col[k];
            col[i] = s / a[static_cast<std::size_t>(i) * n + i];
        }
    }
}

}  // namespace detail

// rows: N pointers to contiguous float feature vectors of length dim.
inline LinearProbe fit_linear_probe(const std::vector<const float*>& rows, int dim,
                                    const std::vector<int>& labels, int classes,
                                    double lambda = 1e-2) {
    const int n = static_cast<int>(rows.size());
    if (n == 0 || static_cast<int>(labels.size()) != n)
        throw InvalidInputError("probe: empty or mismatched training set");
    const int d = dim + 1;
    std::vector<double> gram(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> rhs(static_cast<std::size_t>(classes) * d, 0.0);
    std::vector<double> x(static_cast<std::size_t>(d));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) x[static_cast<std::size_t>(j)] = rows[static_cast<std::size_t>(i)][j];
        x[static_cast<std::size_t>(dim)] = 1.0;
        for (int j = 0; j < d; ++j) {
            const double xj = x[static_cast<std::size_t>(j)];
            double* g = gram.data() + static_cast<std::size_t>(j) * d;
            for (int k = j; k < d; ++k) g[k] += xj * x[static_cast<std::size_t>(k)];
        }
        const int y = labels[static_cast<std::size_t>(i)];
        for (int k = 0; k < classes; ++k) {
            const double t = k == y ? 1.0 : -1.0 / (classes - 1);
            double* r = rhs.data() + static_cast<std::size_t>(k) * d;
            for (int j = 0; j < d; ++j) r[j] += t * x[static_cast<std::size_t>(j)];
        }
    }
    for (int j = 0; j < d; ++j) {
        gram[static_cast<std::size_t>(j) * d + j] += lambda * n;
        for (int k = j + 1; k < d; ++k)
            gram[static_cast<std::size_t>(k) * d + j] = gram[static_cast<std::size_t>(j) * d + k];
    }
    detail::cholesky_solve(gram, rhs, d, classes);
    LinearProbe probe;
    probe.classes = classes;
    probe.dim = dim;
    probe.w.resize(static_cast<std::size_t>(classes) * d);
    for (int k = 0; k < classes; ++k)
        for (int j = 0; j < d; ++j)
            probe.w[static_cast<std::size_t>(k) * d + j] = rhs[static_cast<std::size_t>(k) * d + j];
    return probe;
}

enum class Modality { optical, sar };

// Fit on train ids, score on eval ids, single modality, flattened pixels.
inline double linear_probe_accuracy(const Dataset& ds, Modality modality,
                                    const std::vector<int>& train_ids,
                                    const std::vector<int>& eval_ids, double lambda = 1e-2) {
    const auto& t = modality == Modality::optical ? ds.opt : ds.sar;
    const std::size_t sz =
        modality == Modality::optical ? ds.opt_sample_size() : ds.sar_sample_size();
    std::vector<const float*> rows;
    rows.reserve(train_ids.size());
    for (int id : train_ids) rows.push_back(t.ptr() + static_cast<std::size_t>(id) * sz);
    const auto probe = fit_linear_probe(rows, static_cast<int>(sz), labels_of(ds, train_ids),
                                        ds.manifest.num_classes(), lambda);
    int correct = 0;
    for (int id : eval_ids) {
        const int pred = probe.predict(t.ptr() + static_cast<std::size_t>(id) * sz);
        if (pred == ds.manifest.samples[static_cast<std::size_t>(id)].label) ++correct;
    }
    return eval_ids.empty() ? 0.0 : static_cast<double>(correct) / eval_ids.size();
}

}  // namespace mb
