#include "diffmark/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace diffmark {

namespace {

constexpr double kSymTol = 1e-8;

std::vector<double> column_means(const Matrix& m) {
    std::vector<double> mu(m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i)
        for (int j = 0; j < m.cols; ++j) mu[j] += m.at(i, j);
    for (double& v : mu) v /= m.rows;
    return mu;
}

Matrix sample_covariance(const Matrix& m, const std::vector<double>& mu) {
    Matrix cov(m.cols, m.cols, 0.0);
    for (int i = 0; i < m.rows; ++i)
        for (int a = 0; a < m.cols; ++a) {
            double da = m.at(i, a) - mu[a];
            for (int b = a; b < m.cols; ++b) cov.at(a, b) += da * (m.at(i, b) - mu[b]);
        }
    double denom = m.rows > 1 ? m.rows - 1.0 : 1.0;
    for (int a = 0; a < m.cols; ++a)
        for (int b = a; b < m.cols; ++b) {
            cov.at(a, b) /= denom;
            cov.at(b, a) = cov.at(a, b);
        }
    return cov;
}

void check_rows_finite(const Matrix& m, const char* what) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

}  // namespace

double frechet_distance(const std::vector<double>& mu1, const Matrix& cov1,
                        const std::vector<double>& mu2, const Matrix& cov2) {
    const int d = static_cast<int>(mu1.size());
    if (static_cast<int>(mu2.size()) != d || cov1.rows != d || cov1.cols != d || cov2.rows != d ||
        cov2.cols != d)
        throw std::invalid_argument("frechet_distance: dimension mismatch");
    for (const Matrix* cov : {&cov1, &cov2})
        for (int i = 0; i < d; ++i)
            for (int j = i + 1; j < d; ++j)
                if (std::abs(cov->at(i, j) - cov->at(j, i)) > kSymTol)
                    throw std::invalid_argument(
                        "frechet_distance: covariance asymmetric beyond 1e-8");

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        double diff = mu1[i] - mu2[i];
        mean_term += diff * diff;
    }

    // tr((cov1 cov2)^{1/2}) = tr((B cov1 B)^{1/2}) with B = cov2^{1/2}; the
    // inner product is symmetric PSD so the eigen route applies.
    Matrix b = sym_sqrt(cov2, kSymTol);
    Matrix inner = matmul(matmul(b, cov1), b);
    // symmetrize roundoff before decomposing
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            double v = 0.5 * (inner.at(i, j) + inner.at(j, i));
            inner.at(i, j) = v;
            inner.at(j, i) = v;
        }
    SymEigen e = sym_eigen(inner, 1e30);
    double trace_sqrt = 0.0;
    for (double lam : e.values)
        if (lam > 0.0) trace_sqrt += std::sqrt(lam);

    double trace_term = 0.0;
    for (int i = 0; i < d; ++i) trace_term += cov1.at(i, i) + cov2.at(i, i);
    return mean_term + trace_term - 2.0 * trace_sqrt;
}

double fid_from_features(const FeatureSet& real, const FeatureSet& gen) {
    if (real.dim() != gen.dim()) throw std::invalid_argument("fid_from_features: feature dims differ");
    check_rows_finite(real.features, "fid_from_features(real)");
    check_rows_finite(gen.features, "fid_from_features(gen)");
    if (real.count() <= real.dim() || gen.count() <= gen.dim())
        std::fprintf(stderr, "fid_from_features: warning: N <= D, sample covariance is rank-deficient\n");

    std::vector<double> mu_r = column_means(real.features);
    std::vector<double> mu_g = column_means(gen.features);
    Matrix cov_r = sample_covariance(real.features, mu_r);
    Matrix cov_g = sample_covariance(gen.features, mu_g);
    return frechet_distance(mu_r, cov_r, mu_g, cov_g);
}

double sfid_from_features(const FeatureSet& real, const FeatureSet& gen) {
    return fid_from_features(real, gen);
}

std::pair<double, double> inception_score_from_probs(const Matrix& probs, int splits) {
    if (splits < 1) throw std::invalid_argument("inception_score: splits must be >= 1");
    if (probs.rows < splits) throw std::invalid_argument("inception_score: fewer rows than splits");
    for (int i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < probs.cols; ++j) {
            double p = probs.at(i, j);
            if (!(p >= 0.0) || !std::isfinite(p))
                throw std::invalid_argument("inception_score: invalid probability row " + std::to_string(i));
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("inception_score: row " + std::to_string(i) +
                                        " does not sum to 1");
    }

    std::vector<double> scores;
    scores.reserve(splits);
    for (int s = 0; s < splits; ++s) {
        int lo = static_cast<int>(static_cast<long long>(probs.rows) * s / splits);
        int hi = static_cast<int>(static_cast<long long>(probs.rows) * (s + 1) / splits);
        std::vector<double> marginal(probs.cols, 0.0);
        for (int i = lo; i < hi; ++i)
            for (int j = 0; j < probs.cols; ++j) marginal[j] += probs.at(i, j);
        for (double& v : marginal) v /= (hi - lo);

        double mean_kl = 0.0;
        for (int i = lo; i < hi; ++i) {
            double kl = 0.0;
            for (int j = 0; j < probs.cols; ++j) {
                double p = probs.at(i, j);
                if (p > 0.0) kl += p * std::log(p / marginal[j]);
            }
            mean_kl += kl;
        }
        mean_kl /= (hi - lo);
        scores.push_back(std::exp(mean_kl));
    }

    double mean = 0.0;
    for (double v : scores) mean += v;
    mean /= scores.size();
    double var = 0.0;
    for (double v : scores) var += (v - mean) * (v - mean);
    var /= scores.size();
    return {mean, std::sqrt(var)};
}

std::pair<double, double> precision_recall_knn(const FeatureSet& real, const FeatureSet& gen,
                                               int k) {
    if (real.count() == 0 || gen.count() == 0)
        throw std::invalid_argument("precision_recall_knn: empty feature set");
    if (real.dim() != gen.dim())
        throw std::invalid_argument("precision_recall_knn: feature dims differ");
    if (k < 1 || k >= real.count() || k >= gen.count())
        throw std::invalid_argument("precision_recall_knn: need 1 <= k < N for both sets");

    auto sq_dist = [](const Matrix& a, int i, const Matrix& b, int j) {
        double d = 0.0;
        for (int c = 0; c < a.cols; ++c) {
            double diff = a.at(i, c) - b.at(j, c);
            d += diff * diff;
        }
        return d;
    };

    // k-th neighbor radius (excluding self) around every point of `anchor`,
    // then count how many of `probe` fall inside some ball.
    auto coverage = [&](const Matrix& anchor, const Matrix& probe) {
        int n = anchor.rows;
        std::vector<double> radius_sq(n);
        std::vector<double> dists;
        dists.reserve(n - 1);
        for (int i = 0; i < n; ++i) {
            dists.clear();
            for (int j = 0; j < n; ++j)
                if (j != i) dists.push_back(sq_dist(anchor, i, anchor, j));
            std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
            radius_sq[i] = dists[k - 1];
        }
        int inside = 0;
        for (int p = 0; p < probe.rows; ++p) {
            for (int i = 0; i < n; ++i) {
                if (sq_dist(probe, p, anchor, i) <= radius_sq[i]) {
                    ++inside;
                    break;
                }
            }
        }
        return static_cast<double>(inside) / probe.rows;
    };

    double precision = coverage(real.features, gen.features);
    double recall = coverage(gen.features, real.features);
    return {precision, recall};
}

}  // namespace diffmark
