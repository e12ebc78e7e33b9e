#include <doctest.h>

#include <cmath>
#include <vector>

#include "diffmark/metrics.hpp"
#include "diffmark/rng.hpp"

using namespace diffmark;

namespace {

// Independent long double Jacobi eigensolver for the frechet oracle; written
// separately from the library implementation (different sweep strategy and
// precision).
struct LongMat {
    int n;
    std::vector<long double> a;
    long double& at(int i, int j) { return a[size_t(i) * n + j]; }
    long double at(int i, int j) const { return a[size_t(i) * n + j]; }
};

std::vector<long double> eigvals_oracle(LongMat m) {
    const int n = m.n;
    for (int sweep = 0; sweep < 200; ++sweep) {
        long double off = 0;
        int p = 0, q = 1;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                if (fabsl(m.at(i, j)) > off) {
                    off = fabsl(m.at(i, j));
                    p = i;
                    q = j;
                }
        if (off < 1e-24L) break;
        long double theta = (m.at(q, q) - m.at(p, p)) / (2.0L * m.at(p, q));
        long double t = (theta >= 0 ? 1.0L : -1.0L) / (fabsl(theta) + sqrtl(theta * theta + 1.0L));
        long double c = 1.0L / sqrtl(t * t + 1.0L), s = t * c;
        for (int k = 0; k < n; ++k) {
            long double mkp = m.at(k, p), mkq = m.at(k, q);
            m.at(k, p) = c * mkp - s * mkq;
            m.at(k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
            long double mpk = m.at(p, k), mqk = m.at(q, k);
            m.at(p, k) = c * mpk - s * mqk;
            m.at(q, k) = s * mpk + c * mqk;
        }
    }
    std::vector<long double> v(n);
    for (int i = 0; i < n; ++i) v[i] = m.at(i, i);
    return v;
}

Matrix random_spd(int d, Rng& rng, double jitter) {
    Matrix a(d, d, 0.0);
    Matrix g(d, d, 0.0);
    for (double& v : g.data) v = rng.normal();
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = 0;
            for (int k = 0; k < d; ++k) acc += g.at(i, k) * g.at(j, k);
            a.at(i, j) = acc / d;
        }
    for (int i = 0; i < d; ++i) a.at(i, i) += jitter;
    return a;
}

FeatureSet gaussian_features(int n, int d, double shift, uint64_t seed) {
    FeatureSet fs;
    fs.features = Matrix(n, d);
    Rng rng(seed);
    for (double& v : fs.features.data) v = rng.normal() + shift;
    fs.extractor_id = "test";
    return fs;
}

}  // namespace

TEST_CASE("frechet_distance: identical Gaussians and pure mean shifts") {
    Rng rng(5);
    Matrix cov = random_spd(4, rng, 0.1);
    std::vector<double> mu{0.1, -0.2, 0.3, 0.4};
    CHECK(frechet_distance(mu, cov, mu, cov) == doctest::Approx(0.0).scale(1).epsilon(1e-9));

    std::vector<double> mu2{1.1, -0.2, 0.3, 2.4};
    double want = 1.0 + 4.0;  // ||mu - mu2||^2, trace term cancels
    CHECK(frechet_distance(mu, cov, mu2, cov) == doctest::Approx(want).epsilon(1e-8));
}

TEST_CASE("frechet_distance matches a long-double oracle on random 5-D SPD pairs") {
    Rng rng(11);
    for (int rep = 0; rep < 5; ++rep) {
        const int d = 5;
        Matrix c1 = random_spd(d, rng, 0.05), c2 = random_spd(d, rng, 0.05);
        std::vector<double> mu1(d), mu2(d);
        for (int i = 0; i < d; ++i) {
            mu1[i] = rng.normal();
            mu2[i] = rng.normal();
        }
        double got = frechet_distance(mu1, c1, mu2, c2);

        // oracle: tr((c1 c2)^(1/2)) = sum sqrt(eig(c1 c2)) via the symmetric
        // form sqrt(c2)^T c1 sqrt(c2) computed in long double
        LongMat lc2{d, std::vector<long double>(d * d)};
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) lc2.at(i, j) = c2.at(i, j);
        // sqrt(c2) via its eigensystem: rebuild with eigenvectors from a
        // second long-double Jacobi that tracks vectors
        LongMat m = lc2;
        LongMat v{d, std::vector<long double>(d * d, 0.0L)};
        for (int i = 0; i < d; ++i) v.at(i, i) = 1.0L;
        for (int sweep = 0; sweep < 500; ++sweep) {
            long double off = 0;
            int p = 0, q = 1;
            for (int i = 0; i < d; ++i)
                for (int j = i + 1; j < d; ++j)
                    if (fabsl(m.at(i, j)) > off) {
                        off = fabsl(m.at(i, j));
                        p = i;
                        q = j;
                    }
            if (off < 1e-24L) break;
            long double theta = (m.at(q, q) - m.at(p, p)) / (2.0L * m.at(p, q));
            long double t = (theta >= 0 ? 1.0L : -1.0L) / (fabsl(theta) + sqrtl(theta * theta + 1.0L));
            long double c = 1.0L / sqrtl(t * t + 1.0L), s = t * c;
            for (int k = 0; k < d; ++k) {
                long double mkp = m.at(k, p), mkq = m.at(k, q);
                m.at(k, p) = c * mkp - s * mkq;
                m.at(k, q) = s * mkp + c * mkq;
            }
            for (int k = 0; k < d; ++k) {
                long double mpk = m.at(p, k), mqk = m.at(q, k);
                m.at(p, k) = c * mpk - s * mqk;
                m.at(q, k) = s * mpk + c * mqk;
            }
            for (int k = 0; k < d; ++k) {
                long double vkp = v.at(k, p), vkq = v.at(k, q);
                v.at(k, p) = c * vkp - s * vkq;
                v.at(k, q) = s * vkp + c * vkq;
            }
        }
        LongMat sqrt_c2{d, std::vector<long double>(d * d, 0.0L)};
        for (int k = 0; k < d; ++k) {
            long double lam = m.at(k, k) > 0 ? sqrtl(m.at(k, k)) : 0.0L;
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) sqrt_c2.at(i, j) += lam * v.at(i, k) * v.at(j, k);
        }
        LongMat inner{d, std::vector<long double>(d * d, 0.0L)};
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                long double acc = 0;
                for (int k = 0; k < d; ++k)
                    for (int l = 0; l < d; ++l)
                        acc += sqrt_c2.at(i, k) * (long double)c1.at(k, l) * sqrt_c2.at(l, j);
                inner.at(i, j) = acc;
            }
        std::vector<long double> eig = eigvals_oracle(inner);
        long double trace_sqrt = 0;
        for (long double lam : eig)
            if (lam > 0) trace_sqrt += sqrtl(lam);
        long double mean_term = 0, trace_term = 0;
        for (int i = 0; i < d; ++i) {
            mean_term += (long double)(mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
            trace_term += (long double)c1.at(i, i) + c2.at(i, i);
        }
        double want = double(mean_term + trace_term - 2.0L * trace_sqrt);
        CHECK(got == doctest::Approx(want).epsilon(1e-8));
    }
}

TEST_CASE("frechet_distance is symmetric and rejects asymmetric inputs") {
    Rng rng(13);
    Matrix c1 = random_spd(3, rng, 0.1), c2 = random_spd(3, rng, 0.1);
    std::vector<double> mu1{0.5, 0, 0}, mu2{0, 0.5, 0};
    CHECK(frechet_distance(mu1, c1, mu2, c2) ==
          doctest::Approx(frechet_distance(mu2, c2, mu1, c1)).epsilon(1e-8));
    CHECK(frechet_distance(mu1, c1, mu2, c2) >= -1e-10);

    Matrix bad = c1;
    bad.at(0, 1) += 1e-3;
    CHECK_THROWS(frechet_distance(mu1, bad, mu2, c2));
}

TEST_CASE("fid_from_features: identity, shift identity, seeded golden") {
    FeatureSet real = gaussian_features(5000, 8, 0.0, 101);
    CHECK(fid_from_features(real, real) == doctest::Approx(0.0).scale(1).epsilon(1e-9));

    FeatureSet shifted = real;
    const double c = 0.7;
    for (int i = 0; i < shifted.features.rows; ++i)
        for (int j = 0; j < shifted.features.cols; ++j) shifted.features.at(i, j) += c;
    double want = 8 * c * c;
    CHECK(fid_from_features(real, shifted) == doctest::Approx(want).epsilon(1e-6));

    // two independent seeded standard-normal clouds stay below 0.05
    FeatureSet gen = gaussian_features(5000, 8, 0.0, 202);
    double fid = fid_from_features(real, gen);
    CHECK(fid >= 0.0);
    CHECK(fid < 0.05);
    CHECK(sfid_from_features(real, gen) == fid);  // shared kernel
}

TEST_CASE("fid is invariant under row permutation") {
    FeatureSet real = gaussian_features(200, 4, 0.0, 5);
    FeatureSet gen = gaussian_features(200, 4, 0.3, 6);
    FeatureSet gen_reversed = gen;
    for (int i = 0; i < 200; ++i)
        for (int j = 0; j < 4; ++j) gen_reversed.features.at(i, j) = gen.features.at(199 - i, j);
    CHECK(fid_from_features(real, gen) ==
          doctest::Approx(fid_from_features(real, gen_reversed)).epsilon(1e-10));
}

TEST_CASE("inception score: identical rows, one-hot rows, dirichlet oracle") {
    // all rows identical -> KL = 0 -> score 1
    Matrix same(50, 4, 0.0);
    for (int i = 0; i < 50; ++i) {
        same.at(i, 0) = 0.4;
        same.at(i, 1) = 0.3;
        same.at(i, 2) = 0.2;
        same.at(i, 3) = 0.1;
    }
    auto [m1, s1] = inception_score_from_probs(same, 1);
    CHECK(m1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s1 == 0.0);

    // one-hot rows uniformly covering C classes -> score C
    const int C = 10;
    Matrix onehot(C * 5, C, 0.0);
    for (int i = 0; i < C * 5; ++i) onehot.at(i, i % C) = 1.0;
    auto [mc, sc] = inception_score_from_probs(onehot, 1);
    CHECK(mc == doctest::Approx(double(C)).epsilon(1e-12));

    // seeded dirichlet-ish rows vs an independently coded oracle
    Rng rng(303);
    Matrix probs(64, 5, 0.0);
    for (int i = 0; i < 64; ++i) {
        double sum = 0;
        for (int j = 0; j < 5; ++j) {
            double g = -std::log(rng.uniform() + 1e-300);
            probs.at(i, j) = g;
            sum += g;
        }
        for (int j = 0; j < 5; ++j) probs.at(i, j) /= sum;
    }
    const int splits = 4;
    auto [mean_got, sd_got] = inception_score_from_probs(probs, splits);
    std::vector<double> scores;
    for (int s = 0; s < splits; ++s) {
        int lo = 64 * s / splits, hi = 64 * (s + 1) / splits;
        std::vector<double> marg(5, 0.0);
        for (int i = lo; i < hi; ++i)
            for (int j = 0; j < 5; ++j) marg[j] += probs.at(i, j) / (hi - lo);
        double kl = 0;
        for (int i = lo; i < hi; ++i)
            for (int j = 0; j < 5; ++j)
                if (probs.at(i, j) > 0) kl += probs.at(i, j) * std::log(probs.at(i, j) / marg[j]);
        scores.push_back(std::exp(kl / (hi - lo)));
    }
    double om = 0;
    for (double v : scores) om += v / splits;
    double ov = 0;
    for (double v : scores) ov += (v - om) * (v - om) / splits;
    CHECK(mean_got == doctest::Approx(om).epsilon(1e-10));
    CHECK(sd_got == doctest::Approx(std::sqrt(ov)).epsilon(1e-10));

    // IS range: [1, C]
    CHECK(mean_got >= 1.0);
    CHECK(mean_got <= 5.0);

    Matrix invalid(2, 2, 0.6);
    CHECK_THROWS(inception_score_from_probs(invalid, 1));
}

TEST_CASE("precision/recall: identity, disjoint clusters, brute-force oracle") {
    FeatureSet real = gaussian_features(300, 3, 0.0, 71);
    auto [p_same, r_same] = precision_recall_knn(real, real, 3);
    CHECK(p_same == 1.0);
    CHECK(r_same == 1.0);

    FeatureSet far = gaussian_features(300, 3, 1000.0, 72);
    auto [p_far, r_far] = precision_recall_knn(real, far, 3);
    CHECK(p_far == 0.0);
    CHECK(r_far == 0.0);

    // overlapping clouds vs an independent O(N^2) oracle
    FeatureSet gen = gaussian_features(300, 3, 0.8, 73);
    const int k = 3;
    auto [p_got, r_got] = precision_recall_knn(real, gen, k);
    auto oracle = [&](const Matrix& anchor, const Matrix& probe) {
        int n = anchor.rows;
        std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0;
                for (int c = 0; c < anchor.cols; ++c) {
                    double diff = anchor.at(i, c) - anchor.at(j, c);
                    acc += diff * diff;
                }
                d2[i][j] = acc;
            }
        std::vector<double> radius(n);
        for (int i = 0; i < n; ++i) {
            std::vector<double> row;
            for (int j = 0; j < n; ++j)
                if (j != i) row.push_back(d2[i][j]);
            std::sort(row.begin(), row.end());
            radius[i] = row[k - 1];
        }
        int inside = 0;
        for (int p = 0; p < probe.rows; ++p) {
            bool hit = false;
            for (int i = 0; i < n && !hit; ++i) {
                double acc = 0;
                for (int c = 0; c < probe.cols; ++c) {
                    double diff = probe.at(p, c) - anchor.at(i, c);
                    acc += diff * diff;
                }
                hit = acc <= radius[i];
            }
            inside += hit;
        }
        return double(inside) / probe.rows;
    };
    CHECK(p_got == oracle(real.features, gen.features));
    CHECK(r_got == oracle(gen.features, real.features));
    CHECK(p_got >= 0.0);
    CHECK(p_got <= 1.0);

    CHECK_THROWS(precision_recall_knn(real, gen, 0));
    CHECK_THROWS(precision_recall_knn(real, gen, 300));
}
