#pragma once

#include <string>
#include <utility>
#include <vector>

#include "diffmark/linalg.hpp"

namespace diffmark {

enum class FeatureSource { real, generated };

// N x D feature rows from some external embedding network. This toolkit
// never runs the extractor; features arrive from files.
struct FeatureSet {
    Matrix features;
    FeatureSource source = FeatureSource::real;
    std::string extractor_id;

    int count() const { return features.rows; }
    int dim() const { return features.cols; }
};

// ||mu1-mu2||^2 + tr(cov1 + cov2 - 2 (cov1 cov2)^{1/2}), matrix square root
// via symmetric eigendecomposition of sqrt(cov2) cov1 sqrt(cov2) with
// negative eigenvalues clipped at zero. Inputs must be symmetric within 1e-8.
double frechet_distance(const std::vector<double>& mu1, const Matrix& cov1,
                        const std::vector<double>& mu2, const Matrix& cov2);

// Sample means and covariances (denominator N-1) fed to frechet_distance.
// Warns on stderr when N <= D (rank-deficient covariance).
double fid_from_features(const FeatureSet& real, const FeatureSet& gen);

// Identical kernel to fid_from_features; the distinction is which extractor
// produced the rows (a spatial one), carried in extractor_id.
double sfid_from_features(const FeatureSet& real, const FeatureSet& gen);

// Per split: exp(mean_i KL(p_i || split marginal)); returns (mean, std)
// across splits (population std). Rows must be nonnegative and sum to 1
// within 1e-6.
std::pair<double, double> inception_score_from_probs(const Matrix& probs, int splits);

// k-NN manifold precision/recall: a generated point counts for precision if
// it lies within the k-th neighbor radius of some real point, and
// symmetrically for recall. k must satisfy 1 <= k < min(N_real, N_gen).
std::pair<double, double> precision_recall_knn(const FeatureSet& real, const FeatureSet& gen,
                                               int k);

}  // namespace diffmark
